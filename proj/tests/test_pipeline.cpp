#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "pdi/kernel.hpp"
#include "pdi/pipeline.hpp"
#include "pdi/simulation.hpp"
#include "support.hpp"

using namespace pdi;
using pdi::test::mu_model;

namespace {

// Two covariate clusters: mu is flat at 0.2 in one and at 0.95 in the other,
// so the best rule is empty on the first and covers [0,1] on the second.
Dataset two_cluster_data(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u;
    std::normal_distribution<double> nd;
    std::vector<Observation> rows;
    for (std::size_t i = 0; i < n; ++i) {
        const bool hi = i % 2 == 1;
        Observation o;
        o.x = {(hi ? 3.0 : 0.0) + 0.01 * nd(rng)};
        o.a = u(rng);
        o.y = u(rng) < (hi ? 0.95 : 0.2) ? 1.0 : 0.0;
        o.t_lo = 0.75;
        o.t_hi = INFINITY;
        o.r = o.y >= 0.75;
        rows.push_back(o);
    }
    return Dataset(std::move(rows), 1);
}

HyperParams small_solver(HyperParams h) {
    h.solver.max_sub_iter = 200;
    h.solver.max_dc_iter = 10;
    return h;
}

}  // namespace

TEST(Indirect, QuadraticStubCurve) {
    const double step = 0.005;
    const IndirectResult r = indirect_pdi([](double a) { return 0.9 - (a - 0.5) * (a - 0.5); }, 0.7, step);
    EXPECT_TRUE(r.valid);
    EXPECT_FALSE(r.noncontiguous);
    EXPECT_NEAR(r.ell, 0.5 - std::sqrt(0.2), step);
    EXPECT_NEAR(r.u, 0.5 + std::sqrt(0.2), step);
}

TEST(Indirect, ConstantCurves) {
    const IndirectResult all = indirect_pdi([](double) { return 0.8; }, 0.7);
    EXPECT_TRUE(all.valid);
    EXPECT_EQ(all.ell, 0.0);
    EXPECT_EQ(all.u, 1.0);
    const IndirectResult none = indirect_pdi([](double) { return 0.6; }, 0.7);
    EXPECT_FALSE(none.valid);
    EXPECT_EQ(none.ell, none.u);
}

TEST(Indirect, EmptySetFallsBackToArgmax) {
    const IndirectResult r = indirect_pdi([](double a) { return 0.5 - (a - 0.3) * (a - 0.3); }, 0.7, 0.01);
    EXPECT_FALSE(r.valid);
    EXPECT_NEAR(r.ell, 0.3, 1e-12);
    EXPECT_EQ(r.ell, r.u);
}

TEST(Indirect, NonContiguousSetKeepsLongestRun) {
    auto curve = [](double a) { return (a >= 0.1 && a <= 0.2) || (a >= 0.5 && a <= 0.9) ? 0.9 : 0.1; };
    const IndirectResult r = indirect_pdi(curve, 0.7, 0.01);
    EXPECT_TRUE(r.valid);
    EXPECT_TRUE(r.noncontiguous);
    EXPECT_NEAR(r.ell, 0.5, 1e-9);
    EXPECT_NEAR(r.u, 0.9, 1e-9);
}

TEST(Indirect, RejectsBadGridStep) {
    auto curve = [](double) { return 0.5; };
    EXPECT_THROW(indirect_pdi(curve, 0.7, 0.0), Error);
    EXPECT_THROW(indirect_pdi(curve, 0.7, 0.2), Error);
}

TEST(Indirect, ShrinksAsAlphaGrows) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd;
    for (int k = 0; k < 50; ++k) {
        const DoseProbModel m = mu_model(1.0 + nd(rng), 6.0, -6.0 - std::abs(nd(rng)));
        const Eigen::VectorXd x = Eigen::VectorXd::Zero(0);
        IndirectResult prev = indirect_pdi(m, x, 0.05);
        for (double alpha = 0.1; alpha < 0.96; alpha += 0.05) {
            const IndirectResult cur = indirect_pdi(m, x, alpha);
            if (cur.valid) {
                ASSERT_TRUE(prev.valid);
                EXPECT_GE(cur.ell, prev.ell);
                EXPECT_LE(cur.u, prev.u);
            }
            prev = cur;
        }
    }
}

TEST(Postprocess, Examples) {
    const Postprocessed a = postprocess(-0.1, 0.5);
    EXPECT_EQ(a.ell, 0.0);
    EXPECT_EQ(a.u, 0.5);
    EXPECT_FALSE(a.fallback_used);
    const Postprocessed b = postprocess(0.7, 0.4);
    EXPECT_NEAR(b.ell, 0.55, 1e-15);
    EXPECT_NEAR(b.u, 0.55, 1e-15);
    EXPECT_TRUE(b.fallback_used);
    const Postprocessed c = postprocess(0.2, 0.6);
    EXPECT_EQ(c.ell, 0.2);
    EXPECT_EQ(c.u, 0.6);
    EXPECT_FALSE(c.fallback_used);
}

TEST(Postprocess, OutputIsOrderedInsideUnitInterval) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-2.0, 3.0);
    for (int k = 0; k < 5000; ++k) {
        const Postprocessed p = postprocess(u(rng), u(rng));
        EXPECT_LE(0.0, p.ell);
        EXPECT_LE(p.ell, p.u);
        EXPECT_LE(p.u, 1.0);
    }
}

TEST(Folds, PartitionSizesAndDeterminism) {
    for (std::size_t n : {10u, 11u, 99u}) {
        for (int k : {2, 3, 5}) {
            const auto f = make_folds(n, k, 7);
            ASSERT_EQ(f.size(), static_cast<std::size_t>(k));
            std::size_t lo = n, hi = 0;
            std::set<std::size_t> seen;
            for (const auto& part : f) {
                lo = std::min(lo, part.size());
                hi = std::max(hi, part.size());
                for (auto r : part) EXPECT_TRUE(seen.insert(r).second);
            }
            EXPECT_LE(hi - lo, 1u);
            EXPECT_EQ(seen.size(), n);
            EXPECT_EQ(make_folds(n, k, 7), f);
        }
    }
    EXPECT_NE(make_folds(50, 5, 1), make_folds(50, 5, 2));
    EXPECT_THROW(make_folds(3, 5, 1), Error);
    EXPECT_THROW(make_folds(10, 1, 1), Error);
}

TEST(Grid, CartesianOrderWithKappaFastest) {
    const auto g = make_grid(HyperParams{}, {0.5, 1.0}, {1.0, 32.0}, {0.0, 1.0}, {0.0, 1024.0});
    ASSERT_EQ(g.size(), 16u);
    EXPECT_EQ(g[0].kappa, 0.0);
    EXPECT_EQ(g[1].kappa, 1024.0);
    EXPECT_EQ(g[2].p_init, 1.0);
    EXPECT_EQ(g[4].lambda, 32.0);
    EXPECT_EQ(g[8].gamma, 1.0);
}

TEST(CrossValidation, SingleCandidateIsChosen) {
    DgpParams dp;
    dp.n = 60;
    dp.seed = 3;
    const Dataset ds = generate_dataset(dp);
    HyperParams h = small_solver(HyperParams{});
    h.lambda = 4.0;
    const CvResult cv = cross_validate(ds, {h}, 3, 9);
    EXPECT_EQ(cv.best_index, 0u);
    EXPECT_EQ(cv.best.lambda, 4.0);
    ASSERT_EQ(cv.table.size(), 1u);
    EXPECT_EQ(cv.table[0].fold_loss.size(), 3u);
}

TEST(CrossValidation, DominatingLambdaIsSelected) {
    const Dataset ds = two_cluster_data(100, 1);
    HyperParams base;
    base.gamma = 1.0;
    base.p_init = 0.0;
    const auto grid = make_grid(base, {1.0}, {1.0, std::ldexp(1.0, 20)}, {0.0}, {0.0});
    FitOptions opt;
    opt.folds = 5;
    opt.seed = 3;
    const CvResult cv = cross_validate(prepare_data(ds, fit_nuisances(ds), base), grid, opt);
    ASSERT_EQ(cv.table.size(), 2u);
    for (std::size_t f = 0; f < 5; ++f)
        ASSERT_LT(cv.table[0].fold_loss[f], cv.table[1].fold_loss[f]) << "instance lost its dominance on fold " << f;
    EXPECT_EQ(cv.best_index, 0u);
    EXPECT_EQ(cv.best.lambda, 1.0);
}

TEST(CrossValidation, TiesGoToGridOrder) {
    DgpParams dp;
    dp.n = 50;
    dp.seed = 4;
    const Dataset ds = generate_dataset(dp);
    const HyperParams h = small_solver(HyperParams{});
    const CvResult cv = cross_validate(ds, {h, h}, 2, 1);
    EXPECT_EQ(cv.table[0].mean_loss, cv.table[1].mean_loss);
    EXPECT_EQ(cv.best_index, 0u);
}

TEST(CrossValidation, ThreadCountDoesNotChangeTable) {
    DgpParams dp;
    dp.n = 60;
    dp.seed = 5;
    const Dataset ds = generate_dataset(dp);
    const auto grid = make_grid(small_solver(HyperParams{}), {0.5, 1.0}, {1.0}, {0.0, 1.0}, {0.0});
    const CvResult a = cross_validate(ds, grid, 3, 2, EstimatorKind::Joint, 1);
    const CvResult b = cross_validate(ds, grid, 3, 2, EstimatorKind::Joint, 3);
    ASSERT_EQ(a.table.size(), b.table.size());
    for (std::size_t i = 0; i < a.table.size(); ++i) EXPECT_EQ(a.table[i].fold_loss, b.table[i].fold_loss);
    EXPECT_EQ(a.best_index, b.best_index);
}

TEST(CrossFit, RejectsSingleFold) {
    DgpParams dp;
    dp.n = 40;
    const Dataset ds = generate_dataset(dp);
    try {
        cross_fit(ds, 1, {HyperParams{}}, FitOptions{});
        FAIL() << "expected TooFewRows";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TooFewRows);
    }
}

TEST(CrossFit, AggregateIsMeanOfFoldRulesAndNuisancesAvoidTheirFold) {
    DgpParams dp;
    dp.n = 120;
    dp.seed = 6;
    const Dataset ds = generate_dataset(dp);
    FitOptions opt;
    opt.seed = 11;
    opt.folds = 2;
    const auto grid = make_grid(small_solver(HyperParams{}), {1.0}, {1.0, 32.0}, {0.5}, {0.0});
    const FittedEstimator est = cross_fit(ds, 3, grid, opt);
    ASSERT_EQ(est.rules.size(), 3u);

    const auto parts = make_folds(ds.size(), 3, opt.seed);
    for (std::size_t s = 0; s < 3; ++s) {
        const std::set<std::size_t> fold(parts[s].begin(), parts[s].end());
        for (auto r : est.nuisance[s].fitted_rows) EXPECT_EQ(fold.count(r), 0u);
        EXPECT_EQ(est.nuisance[s].fitted_rows.size() + parts[s].size(), ds.size());
        EXPECT_EQ(static_cast<std::size_t>(est.rules[s].anchors.rows()), parts[s].size());
    }

    std::mt19937_64 rng(12);
    std::normal_distribution<double> nd;
    for (int k = 0; k < 30; ++k) {
        const Eigen::VectorXd x = Eigen::VectorXd::NullaryExpr(10, [&] { return nd(rng); });
        double l = 0.0, u = 0.0;
        for (const auto& r : est.rules) {
            const auto [a, b] = eval_rule(r, x);
            l += a / 3.0;
            u += b / 3.0;
        }
        const Bounds agg = est.predict_raw_at(x);
        EXPECT_NEAR(agg.first, l, 1e-12);
        EXPECT_NEAR(agg.second, u, 1e-12);
    }
}

TEST(CrossFit, IdenticalFoldRulesAggregateToThemselves) {
    std::mt19937_64 rng(13);
    std::normal_distribution<double> nd;
    IntervalRule r;
    r.anchors = Eigen::MatrixXd::NullaryExpr(8, 2, [&] { return nd(rng); });
    r.beta_L = Eigen::VectorXd::NullaryExpr(8, [&] { return 0.1 * nd(rng); });
    r.beta_U = Eigen::VectorXd::NullaryExpr(8, [&] { return 0.1 * nd(rng); });
    r.beta_L0 = 0.2;
    r.beta_U0 = 0.7;
    FittedEstimator est;
    est.rules = {r, r, r, r};
    for (int k = 0; k < 20; ++k) {
        const Eigen::Vector2d x(nd(rng), nd(rng));
        const auto [l, u] = eval_rule(r, x);
        const Bounds agg = est.predict_raw_at(x);
        EXPECT_NEAR(agg.first, l, 1e-15);
        EXPECT_NEAR(agg.second, u, 1e-15);
    }
}

TEST(FitEstimator, PredictionsArePostprocessed) {
    DgpParams dp;
    dp.n = 80;
    dp.seed = 7;
    const Dataset ds = generate_dataset(dp);
    FitOptions opt;
    opt.folds = 2;
    for (auto kind : {EstimatorKind::Joint, EstimatorKind::ConstantWidth}) {
        opt.kind = kind;
        const auto grid = make_grid(small_solver(HyperParams{}), {1.0}, {1.0}, {0.0, 0.5}, {0.0});
        const FittedEstimator est = fit_estimator(ds, grid, opt);
        EXPECT_EQ(est.dim(), 10u);
        const auto pred = est.predict(ds.covariates());
        ASSERT_EQ(pred.size(), ds.size());
        for (const auto& p : pred) {
            EXPECT_LE(0.0, p.ell);
            EXPECT_LE(p.ell, p.u);
            EXPECT_LE(p.u, 1.0);
        }
        if (kind == EstimatorKind::ConstantWidth) ASSERT_TRUE(est.rules[0].width.has_value());
    }
}
