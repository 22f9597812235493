#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "pdi/core.hpp"
#include "pdi/loss.hpp"
#include "pdi/nuisance.hpp"

namespace pdi::test {

inline Observation obs(double y, double a, std::vector<double> x, double t_lo = 0.75,
                       double t_hi = INFINITY) {
    Observation o;
    o.y = y;
    o.a = a;
    o.x = std::move(x);
    o.t_lo = t_lo;
    o.t_hi = t_hi;
    o.r = in_range(y, t_lo, t_hi);
    return o;
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Dose-probability model with no covariates and mu(a) = logistic(t0 + ta*a + ta2*a^2).
inline DoseProbModel mu_model(double t0, double ta = 0.0, double ta2 = 0.0, std::size_t d = 0) {
    DoseProbModel m;
    m.theta0 = t0;
    m.theta_a = ta;
    m.theta_a2 = ta2;
    m.theta_x = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
    return m;
}

// Gaussian propensity whose density at its mean equals `height`.
inline PropensityModel flat_propensity(double mean, double height, std::size_t d = 0) {
    PropensityModel m;
    m.coef = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d + 1));
    m.coef(0) = mean;
    const double sd = 1.0 / (height * std::sqrt(2.0 * M_PI));
    m.sigma2 = sd * sd;
    return m;
}

inline LossContext context(const DoseProbModel& mu, const PropensityModel& e, double alpha = 0.7,
                           double eps = 1e-3, double c_loss = 10.0) {
    LossContext ctx;
    ctx.nuisance.dose_prob = mu;
    ctx.nuisance.propensity = e;
    ctx.params.alpha = alpha;
    ctx.params.epsilon = eps;
    ctx.params.c_loss = c_loss;
    ctx.params.c_cvx = 1e4 * c_loss;
    return ctx;
}

inline std::shared_ptr<const MuSplit> shared_split(const DoseProbModel& m, int nodes = 201) {
    return std::make_shared<const MuSplit>(mu_split(m, Eigen::VectorXd::Zero(m.theta_x.size()), nodes));
}

// Observation term with a random peaked dose curve and a random weight.
inline ObsTerm random_term(std::mt19937_64& rng) {
    std::normal_distribution<double> nd;
    std::uniform_real_distribution<double> u;
    const double t0 = nd(rng);
    const double ta = 3.0 * nd(rng);
    const double ta2 = -4.0 * u(rng);
    const DoseProbModel m = mu_model(t0, ta, ta2);
    const double a = u(rng);
    const bool r = u(rng) < 0.5;
    const double e = 0.2 + 2.0 * u(rng);
    return make_term(a, r, mu_eval(m, a, Eigen::VectorXd::Zero(0)), e, shared_split(m));
}

// (ell, u) pairs that land near the kinks of the surrogate as often as in its smooth regions.
inline std::pair<double, double> random_pair(std::mt19937_64& rng, double a, double eps) {
    std::uniform_real_distribution<double> u;
    auto pick = [&]() {
        switch (static_cast<int>(u(rng) * 4)) {
            case 0: return a + eps * (2.0 * u(rng) - 1.0);
            case 1: return a + 4.0 * eps * (2.0 * u(rng) - 1.0);
            default: return -0.2 + 1.4 * u(rng);
        }
    };
    double l = pick(), h = pick();
    if (u(rng) < 0.3) h = l + eps * (2.0 * u(rng) - 1.0) * 1.5;
    return {l, h};
}

}  // namespace pdi::test
