#include "pdi/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>

#include "pdi/kernel.hpp"
#include "pdi/parallel.hpp"

namespace pdi {

IndirectResult indirect_pdi(const std::function<double(double)>& curve, double alpha, double grid_step) {
    if (!(grid_step > 0.0 && grid_step <= 0.1))
        throw Error(ErrorCode::InvalidArgument, "grid_step must lie in (0, 0.1]");
    std::vector<double> grid;
    const auto steps = static_cast<long>(std::floor(1.0 / grid_step + 1e-9));
    for (long k = 0; k <= steps; ++k) grid.push_back(std::min(1.0, static_cast<double>(k) * grid_step));
    if (grid.back() < 1.0) grid.push_back(1.0);

    std::vector<double> val(grid.size());
    for (std::size_t k = 0; k < grid.size(); ++k) val[k] = curve(grid[k]);

    std::size_t best_start = 0, best_len = 0, runs = 0;
    for (std::size_t k = 0; k < grid.size();) {
        if (val[k] < alpha) {
            ++k;
            continue;
        }
        std::size_t j = k;
        while (j < grid.size() && val[j] >= alpha) ++j;
        ++runs;
        if (j - k > best_len) {
            best_len = j - k;
            best_start = k;
        }
        k = j;
    }

    IndirectResult out;
    if (best_len == 0) {
        const auto it = std::max_element(val.begin(), val.end());
        const double a_star = grid[static_cast<std::size_t>(it - val.begin())];
        out.ell = out.u = a_star;
        out.valid = false;
        return out;
    }
    out.ell = grid[best_start];
    out.u = grid[best_start + best_len - 1];
    out.valid = true;
    if (runs > 1) {
        out.noncontiguous = true;
        std::clog << "warning: super-level set has " << runs << " runs; keeping the longest\n";
    }
    return out;
}

IndirectResult indirect_pdi(const DoseProbModel& mu, const Eigen::Ref<const Eigen::VectorXd>& x, double alpha,
                            double grid_step) {
    const Eigen::VectorXd xv = x;
    return indirect_pdi([&](double a) { return mu_eval(mu, a, xv); }, alpha, grid_step);
}

Postprocessed postprocess(double ell, double u) {
    const double l2 = std::clamp(ell, 0.0, 1.0);
    const double u2 = std::clamp(u, 0.0, 1.0);
    if (l2 > u2) {
        const double m = std::clamp(0.5 * (l2 + u2), 0.0, 1.0);
        return {m, m, true};
    }
    return {l2, u2, false};
}

PreparedData prepare_data(const Dataset& ds, const NuisanceModels& nuisance, const HyperParams& hyper) {
    PreparedData prep;
    prep.data = ds;
    prep.covariates = ds.covariates();
    LossContext ctx{nuisance, loss_params(hyper), hyper.solver.quad_nodes, hyper.solver.split_nodes};
    prep.terms = prepare_terms(ds, ctx);
    prep.dose_prob = nuisance.dose_prob;
    return prep;
}

HyperParams resolve_constants(const HyperParams& hyper, const std::vector<ObsTerm>& terms) {
    HyperParams h = hyper;
    if (h.auto_constants) {
        h.c_loss = compute_c_loss(terms, h.alpha, h.solver.c_loss_nodes);
        h.c_cvx = 1e4 * h.c_loss;
        h.auto_constants = false;
    }
    return h;
}

std::vector<std::pair<double, double>> indirect_bounds(const DoseProbModel& mu, const Eigen::MatrixXd& X,
                                                       double alpha, double grid_step) {
    std::vector<std::pair<double, double>> out(static_cast<std::size_t>(X.rows()));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const IndirectResult r = indirect_pdi(mu, X.row(i).transpose(), alpha, grid_step);
        out[static_cast<std::size_t>(i)] = {r.ell, r.u};
    }
    return out;
}

namespace {

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> r(n);
    std::iota(r.begin(), r.end(), 0);
    return r;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X, const std::vector<std::size_t>& rows) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]);
    return out;
}

std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

std::pair<IntervalRule, DcTrace> fit_rule(const PreparedData& prep, const std::vector<std::size_t>& rows_in,
                                          const HyperParams& hyper_in, EstimatorKind kind, double grid_step) {
    const auto rows = rows_in.empty() ? all_rows(prep.terms.size()) : rows_in;
    std::vector<ObsTerm> terms;
    terms.reserve(rows.size());
    for (auto r : rows) terms.push_back(prep.terms.at(r));
    const HyperParams hyper = resolve_constants(hyper_in, terms);
    hyper.validate();

    const Eigen::MatrixXd X = take_rows(prep.covariates, rows);
    const GramMatrix K = gram(X, hyper.gamma);
    const auto bounds = indirect_bounds(prep.dose_prob, X, hyper.alpha, grid_step);
    const Coefficients init = init_internal_division(bounds, hyper.p_init, K);
    if (kind == EstimatorKind::ConstantWidth)
        return dc_fit_constant_width(terms, X, K, hyper, init.bL0, init.bL, init.bU0 - init.bL0);
    return dc_fit(terms, X, K, hyper, init);
}

std::vector<std::vector<std::size_t>> make_folds(std::size_t n, int folds, std::uint64_t seed) {
    if (folds < 2) throw Error(ErrorCode::TooFewRows, "need at least 2 folds");
    if (n < static_cast<std::size_t>(folds))
        throw Error(ErrorCode::TooFewRows,
                    std::to_string(n) + " rows cannot fill " + std::to_string(folds) + " folds");
    std::vector<std::size_t> perm = all_rows(n);
    std::mt19937_64 rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i);
        std::swap(perm[i], perm[pick(rng)]);
    }
    std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(folds));
    for (std::size_t i = 0; i < n; ++i) out[i % out.size()].push_back(perm[i]);
    for (auto& f : out) std::sort(f.begin(), f.end());
    return out;
}

CvResult cross_validate(const PreparedData& prep, const std::vector<HyperParams>& grid, const FitOptions& opt) {
    if (grid.empty()) throw Error(ErrorCode::InvalidArgument, "hyperparameter grid is empty");
    const std::size_t n = prep.terms.size();
    const auto folds = make_folds(n, opt.folds, opt.seed);
    const std::size_t nf = folds.size();

    // C_L depends only on alpha and the nuisance fit, so it is fixed across cells.
    std::vector<HyperParams> cand(grid.size());
    for (std::size_t c = 0; c < grid.size(); ++c) {
        const bool shared = c > 0 && grid[c].alpha == grid[c - 1].alpha && grid[c].auto_constants &&
                            grid[c - 1].auto_constants && grid[c].solver.c_loss_nodes == grid[c - 1].solver.c_loss_nodes;
        if (shared) {
            cand[c] = grid[c];
            cand[c].c_loss = cand[c - 1].c_loss;
            cand[c].c_cvx = cand[c - 1].c_cvx;
            cand[c].auto_constants = false;
        } else {
            cand[c] = resolve_constants(grid[c], prep.terms);
        }
    }

    std::vector<std::vector<std::size_t>> train(nf);
    for (std::size_t f = 0; f < nf; ++f) {
        std::vector<char> held(n, 0);
        for (auto r : folds[f]) held[r] = 1;
        for (std::size_t r = 0; r < n; ++r)
            if (!held[r]) train[f].push_back(r);
    }

    std::vector<double> loss(cand.size() * nf, 0.0);
    parallel_for(loss.size(), opt.threads, [&](std::size_t cell) {
        const std::size_t c = cell / nf, f = cell % nf;
        const auto& h = cand[c];
        const IntervalRule rule = fit_rule(prep, train[f], h, opt.kind, opt.grid_step).first;
        const Eigen::MatrixXd Z = take_rows(prep.covariates, folds[f]);
        const Eigen::MatrixX2d ev = eval_rule_batch(rule, Z);
        const LossParams lp = loss_params(h);
        double s = 0.0;
        for (std::size_t j = 0; j < folds[f].size(); ++j)
            s += sur_term(prep.terms[folds[f][j]], ev(static_cast<Eigen::Index>(j), 0),
                          ev(static_cast<Eigen::Index>(j), 1), lp);
        loss[cell] = s / static_cast<double>(folds[f].size());
    });

    CvResult out;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < cand.size(); ++c) {
        CvRow row;
        row.candidate = c;
        row.fold_loss.assign(loss.begin() + static_cast<std::ptrdiff_t>(c * nf),
                             loss.begin() + static_cast<std::ptrdiff_t>((c + 1) * nf));
        row.mean_loss = std::accumulate(row.fold_loss.begin(), row.fold_loss.end(), 0.0) / static_cast<double>(nf);
        if (row.mean_loss < best) {
            best = row.mean_loss;
            out.best_index = c;
        }
        out.table.push_back(std::move(row));
    }
    if (!std::isfinite(best)) throw Error(ErrorCode::SolveFailure, "no candidate produced a finite held-out loss");
    out.best = cand[out.best_index];
    return out;
}

CvResult cross_validate(const Dataset& ds, const std::vector<HyperParams>& grid, int folds, std::uint64_t seed,
                        EstimatorKind kind, unsigned threads) {
    if (grid.empty()) throw Error(ErrorCode::InvalidArgument, "hyperparameter grid is empty");
    const Dataset v = validate_dataset(ds, false);
    const NuisanceModels nm = fit_nuisances(v, false, grid.front().solver.e_floor);
    const PreparedData prep = prepare_data(v, nm, grid.front());
    FitOptions opt;
    opt.kind = kind;
    opt.folds = folds;
    opt.seed = seed;
    opt.threads = threads;
    return cross_validate(prep, grid, opt);
}

std::size_t FittedEstimator::dim() const {
    if (rules.empty()) throw Error(ErrorCode::InvalidArgument, "estimator holds no rules");
    return static_cast<std::size_t>(rules.front().anchors.cols());
}

Bounds FittedEstimator::predict_raw_at(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    if (static_cast<std::size_t>(x.size()) != dim())
        throw Error(ErrorCode::DimensionMismatch, "covariate dimension differs from the fitted rule");
    double l = 0.0, u = 0.0;
    for (const auto& r : rules) {
        const auto b = eval_rule(r, x);
        l += b.first;
        u += b.second;
    }
    const auto s = static_cast<double>(rules.size());
    return {l / s, u / s};
}

std::vector<Bounds> FittedEstimator::predict_raw(const Eigen::MatrixXd& Z) const {
    if (static_cast<std::size_t>(Z.cols()) != dim())
        throw Error(ErrorCode::DimensionMismatch, "covariate dimension differs from the fitted rule");
    Eigen::MatrixX2d acc = Eigen::MatrixX2d::Zero(Z.rows(), 2);
    for (const auto& r : rules) acc += eval_rule_batch(r, Z);
    acc /= static_cast<double>(rules.size());
    std::vector<Bounds> out(static_cast<std::size_t>(Z.rows()));
    for (Eigen::Index i = 0; i < Z.rows(); ++i) out[static_cast<std::size_t>(i)] = {acc(i, 0), acc(i, 1)};
    return out;
}

std::vector<Postprocessed> FittedEstimator::predict(const Eigen::MatrixXd& Z) const {
    const auto raw = predict_raw(Z);
    std::vector<Postprocessed> out;
    out.reserve(raw.size());
    for (const auto& b : raw) out.push_back(postprocess(b.first, b.second));
    return out;
}

FittedEstimator fit_estimator(const Dataset& ds, const std::vector<HyperParams>& grid, const FitOptions& opt) {
    if (grid.empty()) throw Error(ErrorCode::InvalidArgument, "hyperparameter grid is empty");
    const Dataset v = validate_dataset(ds, false);
    FittedEstimator est;
    est.kind = opt.kind;
    est.nuisance.push_back(fit_nuisances(v, opt.log_dose, grid.front().solver.e_floor));
    const PreparedData prep = prepare_data(v, est.nuisance.back(), grid.front());
    CvResult cv;
    if (grid.size() == 1) {
        cv.best = resolve_constants(grid.front(), prep.terms);
        cv.best_index = 0;
    } else {
        cv = cross_validate(prep, grid, opt);
    }
    auto [rule, trace] = fit_rule(prep, {}, cv.best, opt.kind, opt.grid_step);
    est.hyper = cv.best;
    est.rules.push_back(std::move(rule));
    est.traces.push_back(std::move(trace));
    est.cv.push_back(std::move(cv));
    return est;
}

FittedEstimator cross_fit(const Dataset& ds, int s_folds, const std::vector<HyperParams>& grid,
                          const FitOptions& opt) {
    if (s_folds < 2) throw Error(ErrorCode::TooFewRows, "cross-fitting needs at least 2 folds");
    if (grid.empty()) throw Error(ErrorCode::InvalidArgument, "hyperparameter grid is empty");
    const Dataset v = validate_dataset(ds, false);
    const auto parts = make_folds(v.size(), s_folds, opt.seed);
    const std::size_t S = parts.size();

    FittedEstimator est;
    est.kind = opt.kind;
    est.rules.resize(S);
    est.nuisance.resize(S);
    est.traces.resize(S);
    est.cv.resize(S);
    std::vector<HyperParams> chosen(S);

    parallel_for(S, opt.threads, [&](std::size_t s) {
        std::vector<char> in_s(v.size(), 0);
        for (auto r : parts[s]) in_s[r] = 1;
        std::vector<std::size_t> comp;
        for (std::size_t r = 0; r < v.size(); ++r)
            if (!in_s[r]) comp.push_back(r);
        NuisanceModels nm = fit_nuisances(v, comp, opt.log_dose, grid.front().solver.e_floor);
        for (auto r : nm.fitted_rows)
            if (in_s[r]) throw Error(ErrorCode::InvalidArgument, "nuisance fit used a row of its own fold");

        const PreparedData prep = prepare_data(v.subset(parts[s]), nm, grid.front());
        FitOptions inner = opt;
        inner.threads = 1;
        inner.seed = splitmix64(opt.seed + 1 + s);
        CvResult cv;
        if (grid.size() == 1) {
            cv.best = resolve_constants(grid.front(), prep.terms);
        } else {
            cv = cross_validate(prep, grid, inner);
        }
        auto [rule, trace] = fit_rule(prep, {}, cv.best, opt.kind, opt.grid_step);
        chosen[s] = cv.best;
        est.rules[s] = std::move(rule);
        est.traces[s] = std::move(trace);
        est.cv[s] = std::move(cv);
        est.nuisance[s] = std::move(nm);
    });
    est.hyper = chosen.front();
    return est;
}

std::vector<HyperParams> make_grid(const HyperParams& base, const std::vector<double>& gammas,
                                   const std::vector<double>& lambdas, const std::vector<double>& ps,
                                   const std::vector<double>& kappas) {
    std::vector<HyperParams> out;
    for (double g : gammas)
        for (double l : lambdas)
            for (double p : ps)
                for (double k : kappas) {
                    HyperParams h = base;
                    h.gamma = g;
                    h.lambda = l;
                    h.p_init = p;
                    h.kappa = k;
                    out.push_back(h);
                }
    return out;
}

}  // namespace pdi
