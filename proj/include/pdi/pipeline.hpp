#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "pdi/core.hpp"
#include "pdi/loss.hpp"
#include "pdi/metrics.hpp"
#include "pdi/nuisance.hpp"
#include "pdi/optimizer.hpp"

namespace pdi {

struct IndirectResult {
    double ell = 0.0;
    double u = 0.0;
    bool valid = false;
    // The super-level set had more than one run; the longest was kept.
    bool noncontiguous = false;
};

// Grid search of {a in [0,1] : curve(a) >= alpha} on {0, h, 2h, ..., 1}.
IndirectResult indirect_pdi(const std::function<double(double)>& curve, double alpha, double grid_step = 0.005);
IndirectResult indirect_pdi(const DoseProbModel& mu, const Eigen::Ref<const Eigen::VectorXd>& x, double alpha,
                            double grid_step = 0.005);

struct Postprocessed {
    double ell;
    double u;
    bool fallback_used;
};

// Winsorizes to [0,1]; an inverted pair collapses to its clipped midpoint.
Postprocessed postprocess(double ell, double u);

enum class EstimatorKind { Joint, ConstantWidth };

struct CvRow {
    std::size_t candidate = 0;
    std::vector<double> fold_loss;
    double mean_loss = 0.0;
};

struct CvResult {
    std::size_t best_index = 0;
    HyperParams best;
    std::vector<CvRow> table;
};

struct FitOptions {
    EstimatorKind kind = EstimatorKind::Joint;
    int folds = 5;
    std::uint64_t seed = 1;
    unsigned threads = 1;
    double grid_step = 0.005;
    bool log_dose = false;
};

// Training data with its loss terms prepared under one nuisance fit.
struct PreparedData {
    Dataset data;
    Eigen::MatrixXd covariates;
    std::vector<ObsTerm> terms;
    DoseProbModel dose_prob;
};

PreparedData prepare_data(const Dataset& ds, const NuisanceModels& nuisance, const HyperParams& hyper);

// Fills c_loss and c_cvx from the terms when hyper.auto_constants is set.
HyperParams resolve_constants(const HyperParams& hyper, const std::vector<ObsTerm>& terms);

// Indirect bounds at every row of X, degenerate where the level set is empty.
std::vector<std::pair<double, double>> indirect_bounds(const DoseProbModel& mu, const Eigen::MatrixXd& X,
                                                       double alpha, double grid_step);

// One ERM fit on the listed rows of `prep` (all rows when empty).
std::pair<IntervalRule, DcTrace> fit_rule(const PreparedData& prep, const std::vector<std::size_t>& rows,
                                          const HyperParams& hyper, EstimatorKind kind, double grid_step = 0.005);

// Seeded shuffle partition into `folds` parts whose sizes differ by at most one.
std::vector<std::vector<std::size_t>> make_folds(std::size_t n, int folds, std::uint64_t seed);

CvResult cross_validate(const PreparedData& prep, const std::vector<HyperParams>& grid, const FitOptions& opt);
// Fits nuisances on ds and cross-validates with them.
CvResult cross_validate(const Dataset& ds, const std::vector<HyperParams>& grid, int folds, std::uint64_t seed,
                        EstimatorKind kind = EstimatorKind::Joint, unsigned threads = 1);

struct FittedEstimator {
    // One rule per cross-fitting fold; evaluation averages their bounds.
    std::vector<IntervalRule> rules;
    std::vector<NuisanceModels> nuisance;
    HyperParams hyper;
    EstimatorKind kind = EstimatorKind::Joint;
    std::vector<DcTrace> traces;
    std::vector<CvResult> cv;

    std::size_t dim() const;
    Bounds predict_raw_at(const Eigen::Ref<const Eigen::VectorXd>& x) const;
    std::vector<Bounds> predict_raw(const Eigen::MatrixXd& Z) const;
    std::vector<Postprocessed> predict(const Eigen::MatrixXd& Z) const;
};

// Nuisances on all rows, CV over the grid, then the final ERM on all rows.
FittedEstimator fit_estimator(const Dataset& ds, const std::vector<HyperParams>& grid, const FitOptions& opt);

FittedEstimator cross_fit(const Dataset& ds, int s_folds, const std::vector<HyperParams>& grid,
                          const FitOptions& opt);

// Cartesian product in (gamma, lambda, p, kappa) order with kappa varying fastest.
std::vector<HyperParams> make_grid(const HyperParams& base, const std::vector<double>& gammas,
                                   const std::vector<double>& lambdas, const std::vector<double>& ps,
                                   const std::vector<double>& kappas);

}  // namespace pdi
