#pragma once

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pdi/core.hpp"
#include "pdi/pipeline.hpp"

namespace pdi {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    // Index of a header column, or -1.
    long column(const std::string& name) const;
};

CsvTable read_csv(std::istream& in);
CsvTable read_csv_file(const std::string& path);
double parse_number(const std::string& cell, const std::string& where);

// Columns y, a, t_lo, t_hi, x1..xd in this order. r is derived from y and the range.
Dataset read_dataset(std::istream& in);
Dataset read_dataset_file(const std::string& path);
void write_dataset(const Dataset& ds, std::ostream& out);

// Columns x1..xd (other columns ignored). expected_dim 0 accepts any d >= 1.
Eigen::MatrixXd read_covariates(std::istream& in, std::size_t expected_dim = 0);
Eigen::MatrixXd read_covariates_file(const std::string& path, std::size_t expected_dim = 0);

// Affine map of raw doses onto [0,1]; identity by default.
struct DoseScale {
    double lo = 0.0;
    double hi = 1.0;

    bool identity() const { return lo == 0.0 && hi == 1.0; }
    double to_unit(double a) const { return (a - lo) / (hi - lo); }
    double from_unit(double t) const { return lo + t * (hi - lo); }
};

struct PredictionRow {
    double ell_raw = 0.0;
    double u_raw = 0.0;
    double ell = 0.0;
    double u = 0.0;
    bool fallback = false;
    // Bounds in the original dose units.
    double dose_lo = 0.0;
    double dose_hi = 0.0;
};

std::vector<PredictionRow> make_predictions(const FittedEstimator& est, const Eigen::MatrixXd& Z,
                                            const DoseScale& scale = {});
void write_predictions(const std::vector<PredictionRow>& rows, std::ostream& out);
std::vector<PredictionRow> read_predictions(std::istream& in);

struct ModelFile {
    FittedEstimator estimator;
    DoseScale scale;
};

inline constexpr int kModelVersion = 1;

void save_model(const ModelFile& m, std::ostream& out);
ModelFile load_model(std::istream& in);
void save_model_file(const ModelFile& m, const std::string& path);
ModelFile load_model_file(const std::string& path);

}  // namespace pdi
