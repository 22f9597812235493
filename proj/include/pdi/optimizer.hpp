#pragma once

#include <functional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "pdi/core.hpp"
#include "pdi/kernel.hpp"
#include "pdi/loss.hpp"

namespace pdi {

struct DcTrace {
    std::vector<double> objective;  // objective[0] is the starting value
    std::vector<int> subproblem_iterations;
    int iterations = 0;
    bool converged = false;
    // Subproblem results discarded because the true objective rose by more than 1e-9.
    int rejected_steps = 0;
};

// Coefficients whose expansion reproduces p*bounds + (1-p)*mean(bounds) at the anchors.
Coefficients init_internal_division(const std::vector<std::pair<double, double>>& indirect_bounds, double p,
                                    const GramMatrix& K);

// Per-observation value and subgradient of the convex plus part at (ell, u).
struct PlusEval {
    double value;
    double dl;
    double du;
};
using PlusOracle = std::function<PlusEval(std::size_t i, double ell, double u)>;

PlusOracle surrogate_plus_oracle(const std::vector<ObsTerm>& terms, const LossParams& p);

struct SubproblemResult {
    Coefficients coef;
    double value_start = 0.0;
    double value = 0.0;
    int iterations = 0;
    bool improved = false;
};

// Minimizes (1/N) sum_i [plus_i(ell_i, u_i) - rl_i*ell_i - ru_i*u_i] + ridge + kappa penalty
// from `start`, where rl, ru are the derivatives of the minus part at the
// linearization point (the coefficient-space gradient is K*r/N plus the
// intercept sums). With shared_coef the upper bound is ell + width.
SubproblemResult convex_subproblem(const PlusOracle& plus, const GramMatrix& K, const Eigen::VectorXd& rl,
                                   const Eigen::VectorXd& ru, double lambda, double kappa,
                                   const Coefficients& start, const SolverControls& ctl, bool shared_coef = false,
                                   double width = 0.0, double* width_out = nullptr);

std::pair<IntervalRule, DcTrace> dc_fit(const std::vector<ObsTerm>& terms, const Eigen::MatrixXd& anchors,
                                        const GramMatrix& K, const HyperParams& hyper, const Coefficients& init);

std::pair<IntervalRule, DcTrace> dc_fit_constant_width(const std::vector<ObsTerm>& terms,
                                                       const Eigen::MatrixXd& anchors, const GramMatrix& K,
                                                       const HyperParams& hyper, double init_b0,
                                                       const Eigen::VectorXd& init_beta, double init_width);

LossParams loss_params(const HyperParams& h);

}  // namespace pdi
