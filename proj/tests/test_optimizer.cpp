#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "pdi/kernel.hpp"
#include "pdi/optimizer.hpp"
#include "pdi/pipeline.hpp"
#include "pdi/simulation.hpp"
#include "support.hpp"

using namespace pdi;

namespace {

struct Instance {
    PreparedData prep;
    HyperParams hyper;
    GramMatrix K;
    Coefficients init;
};

Instance design_instance(std::size_t n, std::uint64_t seed, double lambda = 1.0, double p_init = 0.5) {
    DgpParams dp;
    dp.n = n;
    dp.seed = seed;
    const Dataset ds = generate_dataset(dp);
    HyperParams h;
    h.gamma = 1.0;
    h.lambda = lambda;
    h.p_init = p_init;
    Instance in{prepare_data(ds, fit_nuisances(ds), h), h, GramMatrix{}, Coefficients{}};
    in.hyper = resolve_constants(h, in.prep.terms);
    in.K = gram(in.prep.covariates, h.gamma);
    in.init = init_internal_division(indirect_bounds(in.prep.dose_prob, in.prep.covariates, h.alpha, 0.005),
                                     p_init, in.K);
    return in;
}

PlusOracle zero_plus() {
    return [](std::size_t, double, double) { return PlusEval{0.0, 0.0, 0.0}; };
}

}  // namespace

TEST(Init, ZeroRatioGivesMeanConstantRule) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u;
    const Eigen::MatrixXd X = Eigen::MatrixXd::NullaryExpr(12, 2, [&] { return u(rng); });
    std::vector<std::pair<double, double>> b;
    double ml = 0.0, mu = 0.0;
    for (int i = 0; i < 12; ++i) {
        const double l = 0.4 * u(rng);
        b.emplace_back(l, l + 0.3 + 0.2 * u(rng));
        ml += b.back().first / 12.0;
        mu += b.back().second / 12.0;
    }
    const Coefficients c = init_internal_division(b, 0.0, gram(X, 0.5));
    EXPECT_NEAR(c.bL0, ml, 1e-12);
    EXPECT_NEAR(c.bU0, mu, 1e-12);
    EXPECT_LT(c.bL.cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT(c.bU.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Init, UnitRatioReproducesBoundsAtAnchors) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u;
    const Eigen::MatrixXd X = Eigen::MatrixXd::NullaryExpr(15, 3, [&] { return u(rng); });
    std::vector<std::pair<double, double>> b;
    for (int i = 0; i < 15; ++i) {
        const double l = 0.4 * u(rng);
        b.emplace_back(l, l + 0.3 + 0.2 * u(rng));
    }
    const GramMatrix K = gram(X, 0.3);
    const Coefficients c = init_internal_division(b, 1.0, K);
    const Eigen::VectorXd fl = (K.entries * c.bL).array() + c.bL0;
    const Eigen::VectorXd fu = (K.entries * c.bU).array() + c.bU0;
    for (int i = 0; i < 15; ++i) {
        EXPECT_NEAR(fl(i), b[static_cast<std::size_t>(i)].first, 1e-6);
        EXPECT_NEAR(fu(i), b[static_cast<std::size_t>(i)].second, 1e-6);
    }
}

TEST(Init, ConstantBoundsGiveZeroExpansion) {
    const Eigen::MatrixXd X = Eigen::MatrixXd::Random(6, 2);
    const std::vector<std::pair<double, double>> b(6, {0.2, 0.7});
    for (double p : {0.0, 0.4, 1.0}) {
        const Coefficients c = init_internal_division(b, p, gram(X, 1.0));
        EXPECT_EQ(c.bL.cwiseAbs().maxCoeff(), 0.0);
        EXPECT_EQ(c.bU.cwiseAbs().maxCoeff(), 0.0);
        EXPECT_NEAR(c.bL0, 0.2, 1e-15);
        EXPECT_NEAR(c.bU0, 0.7, 1e-15);
    }
    EXPECT_THROW(init_internal_division(b, 1.5, gram(X, 1.0)), Error);
}

TEST(Subproblem, LargeRidgeShrinksCoefficients) {
    Instance in = design_instance(40, 3);
    const LossParams p = loss_params(in.hyper);
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(40);
    const SubproblemResult r = convex_subproblem(surrogate_plus_oracle(in.prep.terms, p), in.K, zero, zero, 1024.0,
                                                 0.0, in.init, in.hyper.solver);
    EXPECT_LE(r.coef.bL.norm(), in.init.bL.norm());
    EXPECT_LE(r.coef.bU.norm(), in.init.bU.norm());
    EXPECT_LE(r.value, r.value_start);
}

TEST(Subproblem, QuadraticStubReachesStationarity) {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u;
    std::normal_distribution<double> nd;
    const int n = 20;
    const Eigen::MatrixXd X = Eigen::MatrixXd::NullaryExpr(n, 2, [&] { return u(rng); });
    const GramMatrix K = gram(X, 0.7);
    Eigen::VectorXd rl = Eigen::VectorXd::NullaryExpr(n, [&] { return nd(rng); });
    Eigen::VectorXd ru = Eigen::VectorXd::NullaryExpr(n, [&] { return nd(rng); });
    rl.array() -= rl.mean();
    ru.array() -= ru.mean();
    Coefficients start;
    start.bL = Eigen::VectorXd::Zero(n);
    start.bU = Eigen::VectorXd::Zero(n);
    SolverControls ctl;
    ctl.max_sub_iter = 20000;
    ctl.sub_improve_tol = 1e-15;
    for (double lambda : {0.5, 2.0}) {
        const SubproblemResult r = convex_subproblem(zero_plus(), K, rl, ru, lambda, 0.0, start, ctl);
        const Eigen::VectorXd gl = K.entries * rl / n, gu = K.entries * ru / n;
        const Eigen::VectorXd resid_l = 2.0 * lambda * K.entries * r.coef.bL - gl;
        const Eigen::VectorXd resid_u = 2.0 * lambda * K.entries * r.coef.bU - gu;
        EXPECT_LT(resid_l.norm() / gl.norm(), 1e-4);
        EXPECT_LT(resid_u.norm() / gu.norm(), 1e-4);
    }
}

TEST(Subproblem, RestartFromResultDoesNotIncreaseValue) {
    Instance in = design_instance(40, 5);
    const LossParams p = loss_params(in.hyper);
    const PlusOracle plus = surrogate_plus_oracle(in.prep.terms, p);
    std::mt19937_64 rng(6);
    std::normal_distribution<double> nd;
    const Eigen::VectorXd rl = Eigen::VectorXd::NullaryExpr(40, [&] { return nd(rng); });
    const Eigen::VectorXd ru = Eigen::VectorXd::NullaryExpr(40, [&] { return nd(rng); });
    const SubproblemResult a = convex_subproblem(plus, in.K, rl, ru, 1.0, 1024.0, in.init, in.hyper.solver);
    const SubproblemResult b = convex_subproblem(plus, in.K, rl, ru, 1.0, 1024.0, a.coef, in.hyper.solver);
    EXPECT_NEAR(b.value_start, a.value, 1e-12);
    EXPECT_LE(b.value, b.value_start);
}

TEST(Subproblem, RejectsMismatchedLinearization) {
    const GramMatrix K = gram(Eigen::MatrixXd::Random(5, 2), 1.0);
    Coefficients s;
    s.bL = Eigen::VectorXd::Zero(5);
    s.bU = Eigen::VectorXd::Zero(5);
    EXPECT_THROW(convex_subproblem(zero_plus(), K, Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(5), 1.0, 0.0, s,
                                   SolverControls{}),
                 Error);
}

TEST(Dc, ObjectiveTraceIsNonIncreasing) {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        Instance in = design_instance(100, seed);
        in.hyper.kappa = 1024.0;
        const auto [rule, trace] = dc_fit(in.prep.terms, in.prep.covariates, in.K, in.hyper, in.init);
        ASSERT_FALSE(trace.objective.empty());
        for (std::size_t k = 1; k < trace.objective.size(); ++k)
            EXPECT_LE(trace.objective[k], trace.objective[k - 1] + 1e-9);
        EXPECT_LE(trace.iterations, 50);
        EXPECT_EQ(rule.size(), 100u);
    }
}

TEST(Dc, HugeRidgeGivesNearConstantRule) {
    Instance in = design_instance(100, 14, std::ldexp(1.0, 20), 1.0);
    const auto [rule, trace] = dc_fit(in.prep.terms, in.prep.covariates, in.K, in.hyper, in.init);
    const Eigen::MatrixX2d f = eval_rule_batch(rule, in.prep.covariates);
    std::vector<double> fl(f.col(0).data(), f.col(0).data() + f.rows());
    std::nth_element(fl.begin(), fl.begin() + fl.size() / 2, fl.end());
    const double med = fl[fl.size() / 2];
    EXPECT_LT((f.col(0).array() - med).abs().maxCoeff(), 0.05);
}

TEST(Dc, FixedPointRestartsInPlace) {
    Instance in = design_instance(40, 15);
    in.hyper.solver.dc_tol = 0.0;
    in.hyper.solver.max_dc_iter = 500;
    const auto [rule, first] = dc_fit(in.prep.terms, in.prep.covariates, in.K, in.hyper, in.init);
    ASSERT_TRUE(first.converged);
    Coefficients at{rule.beta_L0, rule.beta_L, rule.beta_U0, rule.beta_U};
    const auto [again, second] = dc_fit(in.prep.terms, in.prep.covariates, in.K, in.hyper, at);
    EXPECT_LE(second.iterations, 2);
    EXPECT_NEAR(second.objective.back(), first.objective.back(), 1e-9);
}

TEST(Dc, IdenticalInputsGiveBitIdenticalCoefficients) {
    Instance in = design_instance(60, 16);
    const auto a = dc_fit(in.prep.terms, in.prep.covariates, in.K, in.hyper, in.init);
    const auto b = dc_fit(in.prep.terms, in.prep.covariates, in.K, in.hyper, in.init);
    EXPECT_EQ(a.first.beta_L0, b.first.beta_L0);
    EXPECT_EQ(a.first.beta_U0, b.first.beta_U0);
    EXPECT_TRUE(a.first.beta_L == b.first.beta_L);
    EXPECT_TRUE(a.first.beta_U == b.first.beta_U);
    EXPECT_EQ(a.second.objective, b.second.objective);
}

TEST(ConstantWidth, WidthIsSharedAndTraceDescends) {
    Instance in = design_instance(80, 17);
    const double w0 = in.init.bU0 - in.init.bL0;
    const auto [rule, trace] =
        dc_fit_constant_width(in.prep.terms, in.prep.covariates, in.K, in.hyper, in.init.bL0, in.init.bL, w0);
    ASSERT_TRUE(rule.width.has_value());
    EXPECT_GE(*rule.width, 0.0);
    for (std::size_t k = 1; k < trace.objective.size(); ++k)
        EXPECT_LE(trace.objective[k], trace.objective[k - 1] + 1e-9);
    std::mt19937_64 rng(18);
    std::normal_distribution<double> nd;
    const Eigen::MatrixXd Z = Eigen::MatrixXd::NullaryExpr(50, 10, [&] { return nd(rng); });
    const Eigen::MatrixX2d f = eval_rule_batch(rule, Z);
    for (Eigen::Index i = 0; i < Z.rows(); ++i) EXPECT_NEAR(f(i, 1) - f(i, 0), *rule.width, 1e-12);
}

TEST(ConstantWidth, NegativeWidthIsProjectedFirst) {
    Instance in = design_instance(40, 19);
    const auto [rule, trace] =
        dc_fit_constant_width(in.prep.terms, in.prep.covariates, in.K, in.hyper, in.init.bL0, in.init.bL, -0.3);
    const Coefficients at_zero{in.init.bL0, in.init.bL, in.init.bL0, in.init.bL};
    const double q0 = objective_q(in.prep.terms, in.K, at_zero, loss_params(in.hyper), in.hyper.lambda,
                                  in.hyper.kappa, true);
    EXPECT_NEAR(trace.objective.front(), q0, 1e-9 * (1.0 + std::abs(q0)));
    EXPECT_GE(*rule.width, 0.0);
}
