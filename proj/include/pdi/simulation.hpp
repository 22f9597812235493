#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "pdi/core.hpp"
#include "pdi/metrics.hpp"

namespace pdi {

inline constexpr std::size_t kDgpDim = 10;

struct DgpParams {
    std::size_t n = 500;
    std::uint64_t seed = 1;
    double sd_a = 0.1;
    double sd_y = 0.25;
    double threshold = 0.75;

    void validate() const;
};

// Draws n rows of the hormetic design. When pre_clip is given it receives the
// dose draws before clipping to [0,1].
Dataset generate_dataset(const DgpParams& params, std::vector<double>* pre_clip = nullptr);

// Tent-shaped mean outcome and its two breakpoints.
double dgp_nu(double a, const Eigen::Ref<const Eigen::VectorXd>& x);
double dgp_m1(const Eigen::Ref<const Eigen::VectorXd>& x);
double dgp_m2(const Eigen::Ref<const Eigen::VectorXd>& x);
// P(Y >= threshold | a, x).
double dgp_mu(double a, const Eigen::Ref<const Eigen::VectorXd>& x, double sd_y, double threshold = 0.75);

// Level set {a : dgp_mu(a, x) >= alpha}; throws NoInterval when the peak is too low.
Bounds oracle_pdi(const Eigen::Ref<const Eigen::VectorXd>& x, double alpha, double sd_y, double threshold = 0.75);
Bounds oracle_pdi_unclipped(const Eigen::Ref<const Eigen::VectorXd>& x, double alpha, double sd_y,
                            double threshold = 0.75);

enum class SimEstimator { DJoint, DCw, IndPara };
const char* estimator_name(SimEstimator e);
SimEstimator parse_estimator(const std::string& name);

struct ExperimentConfig {
    std::vector<double> alphas{0.7};
    std::vector<SimEstimator> estimators{SimEstimator::DJoint, SimEstimator::DCw, SimEstimator::IndPara};
    int replicates = 20;
    std::size_t n_train = 500;
    std::size_t n_test = 500;
    std::uint64_t seed = 1;
    double sd_a = 0.1;
    double sd_y = 0.25;
    std::vector<double> gammas{0.125, 0.35355339059327379, 1.0};
    std::vector<double> lambdas{1.0, 32.0};
    std::vector<double> ps{0.0, 0.1, 0.5, 1.0};
    std::vector<double> kappas{0.0, 1024.0};
    double epsilon = 1e-3;
    int folds = 5;
    double grid_step = 0.005;
    unsigned threads = 1;
    SolverControls solver;

    void validate() const;
};

struct ResultRow {
    double alpha = 0.0;
    SimEstimator estimator = SimEstimator::DJoint;
    // Averages over the replicates where the value was defined.
    std::optional<double> invalid, mae, mse, accuracy, f1, mcc, recall, precision, kappa;
};

struct ReplicateMetrics {
    double invalid = 0.0;
    std::optional<double> mae, mse;
    MetricsReport scores;
};

struct ResultsTable {
    std::vector<ResultRow> rows;
    // per_replicate[row][replicate]
    std::vector<std::vector<ReplicateMetrics>> per_replicate;
};

ResultsTable run_experiment(const ExperimentConfig& cfg);

extern const char* const kTableColumns[];
extern const std::size_t kTableColumnCount;

void write_results_csv(const ResultsTable& table, std::ostream& out);
void write_results_text(const ResultsTable& table, std::ostream& out);

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t counter);

}  // namespace pdi
