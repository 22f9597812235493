#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "pdi/core.hpp"
#include "pdi/kernel.hpp"
#include "pdi/nuisance.hpp"

namespace pdi {

struct LossParams {
    double alpha = 0.7;
    double epsilon = 1e-3;
    double c_loss = 1.0;
    double c_cvx = 1e4;
};

struct LossContext {
    NuisanceModels nuisance;
    LossParams params;
    int quad_nodes = 101;
    int split_nodes = 201;
};

// Per-observation quantities the losses need: dose, weight (mu(A,X)-R)/e(A|X)
// and the monotone split of the dose curve at X.
struct ObsTerm {
    double a = 0.0;
    double r = 0.0;
    double mu_a = 0.0;
    double e_a = 1.0;
    double w = 0.0;
    bool e_floored = false;
    std::shared_ptr<const MuSplit> split;
};

ObsTerm make_term(double a, bool r, double mu_a, double e_a, std::shared_ptr<const MuSplit> split);
ObsTerm prepare_term(const Observation& o, const LossContext& ctx);
std::vector<ObsTerm> prepare_terms(const Dataset& ds, const LossContext& ctx);

struct PartPair {
    double plus;
    double minus;
};

double psi_eps(double ell, double t, double u, double eps);
PartPair psi_parts(double ell, double t, double u, double eps);
double phi_eps(double ell, double u, double eps);
PartPair phi_parts(double ell, double u, double eps);

// Integral of (alpha - mu) over [ell, u] from the split tables; mu is taken as 0 outside [0,1].
double interval_integral(const MuSplit& split, double ell, double u, double alpha);

double l1_term(const ObsTerm& t, double ell, double u, const LossParams& p);
double sur_term(const ObsTerm& t, double ell, double u, const LossParams& p);

struct PartsEval {
    double plus = 0.0;
    double minus = 0.0;
    // Subgradients with respect to (ell, u).
    double plus_dl = 0.0, plus_du = 0.0;
    double minus_dl = 0.0, minus_du = 0.0;
};
PartsEval sur_parts_term(const ObsTerm& t, double ell, double u, const LossParams& p);

double loss_indicator(const Observation& o, double ell, double u, const LossContext& ctx);
double loss_ipw(const Observation& o, double ell, double u, const LossContext& ctx);
double loss_aipw(const Observation& o, double ell, double u, const LossContext& ctx);
double aipw_term(const ObsTerm& t, double ell, double u, const LossParams& p);
double loss_surrogate(const Observation& o, double ell, double u, const LossContext& ctx);
PartPair loss_surrogate_parts(const Observation& o, double ell, double u, const LossContext& ctx);

// Twice the largest |L1| over the terms and all monotone pairs of a uniform dose grid.
double compute_c_loss(const std::vector<ObsTerm>& terms, double alpha, int nodes = 101);

struct Coefficients {
    double bL0 = 0.0;
    Eigen::VectorXd bL;
    double bU0 = 0.0;
    Eigen::VectorXd bU;
};

struct Objective {
    double q = 0.0;
    double q_plus = 0.0;
    double q_minus = 0.0;
};

// With shared_coef the rule has beta_U == beta_L and the ridge is counted once.
Objective objective_q_parts(const std::vector<ObsTerm>& terms, const GramMatrix& K, const Coefficients& c,
                            const LossParams& p, double lambda, double kappa, bool shared_coef = false);
double objective_q(const std::vector<ObsTerm>& terms, const GramMatrix& K, const Coefficients& c,
                   const LossParams& p, double lambda, double kappa, bool shared_coef = false);

}  // namespace pdi
