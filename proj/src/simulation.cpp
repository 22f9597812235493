#include "pdi/simulation.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

#include <boost/math/distributions/normal.hpp>

#include "pdi/kernel.hpp"
#include "pdi/parallel.hpp"
#include "pdi/pipeline.hpp"

namespace pdi {

namespace {

constexpr double kPeak = 1.1;

void check_x(const Eigen::Ref<const Eigen::VectorXd>& x) {
    if (static_cast<std::size_t>(x.size()) != kDgpDim)
        throw Error(ErrorCode::DimensionMismatch, "design covariates must have 10 entries");
}

double slope_left(const Eigen::Ref<const Eigen::VectorXd>& x) { return 2.5 + 10.0 * x(0); }
double slope_right(const Eigen::Ref<const Eigen::VectorXd>& x) { return 0.5 + x(6) + 2.0 * x(9); }

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

}  // namespace

void DgpParams::validate() const {
    if (n < 1) throw Error(ErrorCode::InvalidArgument, "sample size must be at least 1");
    if (!(sd_a > 0) || !(sd_y > 0)) throw Error(ErrorCode::InvalidArgument, "noise scales must be positive");
}

double dgp_m1(const Eigen::Ref<const Eigen::VectorXd>& x) {
    check_x(x);
    return 0.2 + 0.02 * (x(0) + x(1) + x(2) + x(4) + x(5));
}

double dgp_m2(const Eigen::Ref<const Eigen::VectorXd>& x) { return dgp_m1(x) + 0.1 * x(3) + 0.1 * x(7); }

double dgp_nu(double a, const Eigen::Ref<const Eigen::VectorXd>& x) {
    const double m1 = dgp_m1(x), m2 = dgp_m2(x);
    return kPeak - slope_left(x) * std::max(m1 - a, 0.0) - slope_right(x) * std::max(a - m2, 0.0);
}

double dgp_mu(double a, const Eigen::Ref<const Eigen::VectorXd>& x, double sd_y, double threshold) {
    return normal_cdf((dgp_nu(a, x) - threshold) / sd_y);
}

Dataset generate_dataset(const DgpParams& params, std::vector<double>* pre_clip) {
    params.validate();
    std::mt19937_64 rng(params.seed);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution coin(0.5);
    if (pre_clip) pre_clip->clear();

    std::vector<Observation> obs(params.n);
    for (auto& o : obs) {
        o.x.resize(kDgpDim);
        for (std::size_t j = 0; j < 4; ++j) o.x[j] = unif(rng);
        for (std::size_t j = 4; j < 7; ++j) o.x[j] = normal(rng);
        for (std::size_t j = 7; j < 10; ++j) o.x[j] = coin(rng) ? 1.0 : 0.0;
        double sum = 0.0;
        for (double v : o.x) sum += v;
        const double a_raw = sum / 15.0 + 0.2 + params.sd_a * normal(rng);
        if (pre_clip) pre_clip->push_back(a_raw);
        o.a = std::clamp(a_raw, 0.0, 1.0);
        const Eigen::Map<const Eigen::VectorXd> xv(o.x.data(), kDgpDim);
        o.y = dgp_nu(o.a, xv) + params.sd_y * normal(rng);
        o.t_lo = params.threshold;
        o.t_hi = std::numeric_limits<double>::infinity();
        o.r = in_range(o.y, o.t_lo, o.t_hi);
    }
    return Dataset(std::move(obs), kDgpDim);
}

Bounds oracle_pdi_unclipped(const Eigen::Ref<const Eigen::VectorXd>& x, double alpha, double sd_y,
                            double threshold) {
    check_x(x);
    if (!(alpha > 0 && alpha < 1)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0,1)");
    if (!(sd_y > 0)) throw Error(ErrorCode::InvalidArgument, "sd_y must be positive");
    const double tau = threshold + sd_y * boost::math::quantile(boost::math::normal(), alpha);
    if (kPeak < tau) throw Error(ErrorCode::NoInterval, "probability peak lies below alpha");
    const double slack = kPeak - tau;
    const double inf = std::numeric_limits<double>::infinity();
    const double cl = slope_left(x), cu = slope_right(x);
    const double ell = cl > 0 ? dgp_m1(x) - slack / cl : -inf;
    const double u = cu > 0 ? dgp_m2(x) + slack / cu : inf;
    return {ell, u};
}

Bounds oracle_pdi(const Eigen::Ref<const Eigen::VectorXd>& x, double alpha, double sd_y, double threshold) {
    const Bounds b = oracle_pdi_unclipped(x, alpha, sd_y, threshold);
    return {std::clamp(b.first, 0.0, 1.0), std::clamp(b.second, 0.0, 1.0)};
}

const char* estimator_name(SimEstimator e) {
    switch (e) {
        case SimEstimator::DJoint: return "D-Joint";
        case SimEstimator::DCw: return "D-CW";
        case SimEstimator::IndPara: return "Ind-Para";
    }
    return "?";
}

SimEstimator parse_estimator(const std::string& name) {
    for (auto e : {SimEstimator::DJoint, SimEstimator::DCw, SimEstimator::IndPara})
        if (name == estimator_name(e)) return e;
    throw Error(ErrorCode::InvalidArgument, "unknown estimator '" + name + "'");
}

void ExperimentConfig::validate() const {
    if (replicates < 0) throw Error(ErrorCode::InvalidArgument, "replicates must be non-negative");
    if (alphas.empty() || estimators.empty()) throw Error(ErrorCode::InvalidArgument, "alpha and estimator lists must be nonempty");
    for (double a : alphas)
        if (!(a > 0 && a < 1)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0,1)");
    if (gammas.empty() || lambdas.empty() || ps.empty() || kappas.empty())
        throw Error(ErrorCode::InvalidArgument, "hyperparameter grids must be nonempty");
    if (n_train < 2 || n_test < 1) throw Error(ErrorCode::InvalidArgument, "train and test sizes too small");
    if (!(sd_a > 0) || !(sd_y > 0)) throw Error(ErrorCode::InvalidArgument, "noise scales must be positive");
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t counter) {
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (counter + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

namespace {

ReplicateMetrics evaluate(const std::vector<Bounds>& raw, const std::vector<bool>& flags,
                          const std::vector<Bounds>& post, const std::vector<std::optional<Bounds>>& oracle,
                          const Dataset& test) {
    ReplicateMetrics m;
    m.invalid = invalid_proportion(raw, flags);
    bool defined = true;
    for (const auto& o : oracle) defined = defined && o.has_value();
    if (defined) {
        const IntervalErrors e = interval_errors(post, oracle);
        m.mae = e.mae;
        m.mse = e.mse;
    }
    m.scores = classification_metrics(contingency(post, test));
    return m;
}

std::vector<ReplicateMetrics> run_replicate(const ExperimentConfig& cfg, int rep) {
    const auto r = static_cast<std::uint64_t>(rep);
    DgpParams tp{cfg.n_train, derive_seed(cfg.seed, 3 * r), cfg.sd_a, cfg.sd_y, 0.75};
    DgpParams sp{cfg.n_test, derive_seed(cfg.seed, 3 * r + 1), cfg.sd_a, cfg.sd_y, 0.75};
    const Dataset train = generate_dataset(tp);
    const Dataset test = generate_dataset(sp);
    const Eigen::MatrixXd Xt = test.covariates();

    HyperParams base;
    base.epsilon = cfg.epsilon;
    base.solver = cfg.solver;
    const NuisanceModels nm = fit_nuisances(train, false, cfg.solver.e_floor);
    const PreparedData prep = prepare_data(train, nm, base);

    std::vector<ReplicateMetrics> out;
    for (double alpha : cfg.alphas) {
        std::vector<std::optional<Bounds>> oracle(test.size());
        for (std::size_t i = 0; i < test.size(); ++i) {
            try {
                oracle[i] = oracle_pdi(Xt.row(static_cast<Eigen::Index>(i)).transpose(), alpha, cfg.sd_y);
            } catch (const Error& e) {
                if (e.code() != ErrorCode::NoInterval) throw;
            }
        }
        for (SimEstimator est : cfg.estimators) {
            std::vector<Bounds> raw(test.size());
            std::vector<bool> flags(test.size(), false);
            if (est == SimEstimator::IndPara) {
                for (std::size_t i = 0; i < test.size(); ++i) {
                    const auto ir = indirect_pdi(nm.dose_prob, Xt.row(static_cast<Eigen::Index>(i)).transpose(),
                                                 alpha, cfg.grid_step);
                    raw[i] = {ir.ell, ir.u};
                    flags[i] = !ir.valid;
                }
            } else {
                HyperParams h = base;
                h.alpha = alpha;
                const bool cw = est == SimEstimator::DCw;
                const auto grid = make_grid(h, cfg.gammas, cfg.lambdas, cfg.ps,
                                            cw ? std::vector<double>{0.0} : cfg.kappas);
                FitOptions opt;
                opt.kind = cw ? EstimatorKind::ConstantWidth : EstimatorKind::Joint;
                opt.folds = cfg.folds;
                opt.seed = derive_seed(cfg.seed, 3 * r + 2);
                opt.threads = 1;
                opt.grid_step = cfg.grid_step;
                const CvResult cv = cross_validate(prep, grid, opt);
                const IntervalRule rule = fit_rule(prep, {}, cv.best, opt.kind, cfg.grid_step).first;
                const Eigen::MatrixX2d ev = eval_rule_batch(rule, Xt);
                for (std::size_t i = 0; i < test.size(); ++i)
                    raw[i] = {ev(static_cast<Eigen::Index>(i), 0), ev(static_cast<Eigen::Index>(i), 1)};
            }
            std::vector<Bounds> post(raw.size());
            for (std::size_t i = 0; i < raw.size(); ++i) {
                const Postprocessed p = postprocess(raw[i].first, raw[i].second);
                post[i] = {p.ell, p.u};
            }
            out.push_back(evaluate(raw, flags, post, oracle, test));
        }
    }
    return out;
}

std::optional<double> average(const std::vector<std::optional<double>>& v) {
    double s = 0.0;
    std::size_t k = 0;
    for (const auto& x : v)
        if (x) {
            s += *x;
            ++k;
        }
    if (k == 0) return std::nullopt;
    return s / static_cast<double>(k);
}

}  // namespace

ResultsTable run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const std::size_t n_rows = cfg.alphas.size() * cfg.estimators.size();
    const auto reps = static_cast<std::size_t>(cfg.replicates);
    std::vector<std::vector<ReplicateMetrics>> by_rep(reps);
    parallel_for(reps, cfg.threads, [&](std::size_t r) { by_rep[r] = run_replicate(cfg, static_cast<int>(r)); });

    ResultsTable table;
    if (reps == 0) return table;
    table.per_replicate.assign(n_rows, {});
    for (std::size_t k = 0; k < n_rows; ++k) {
        ResultRow row;
        row.alpha = cfg.alphas[k / cfg.estimators.size()];
        row.estimator = cfg.estimators[k % cfg.estimators.size()];
        std::vector<std::optional<double>> inv, mae, mse, acc, f1, mcc, rec, prec, kap;
        for (std::size_t r = 0; r < reps; ++r) {
            const ReplicateMetrics& m = by_rep[r][k];
            table.per_replicate[k].push_back(m);
            inv.push_back(m.invalid);
            mae.push_back(m.mae);
            mse.push_back(m.mse);
            acc.push_back(m.scores.accuracy);
            f1.push_back(m.scores.f1);
            mcc.push_back(m.scores.mcc);
            rec.push_back(m.scores.recall);
            prec.push_back(m.scores.precision);
            kap.push_back(m.scores.kappa);
        }
        row.invalid = average(inv);
        row.mae = average(mae);
        row.mse = average(mse);
        row.accuracy = average(acc);
        row.f1 = average(f1);
        row.mcc = average(mcc);
        row.recall = average(rec);
        row.precision = average(prec);
        row.kappa = average(kap);
        table.rows.push_back(row);
    }
    return table;
}

const char* const kTableColumns[] = {"alpha", "estimator", "Invalid PDI", "MAE",       "MSE",          "Accuracy",
                                     "F1",    "MCC",       "Recall",      "Precision", "Cohen's kappa"};
const std::size_t kTableColumnCount = sizeof(kTableColumns) / sizeof(kTableColumns[0]);

namespace {

std::string cell(const std::optional<double>& v) {
    if (!v) return "-";
    std::ostringstream s;
    s << std::fixed << std::setprecision(6) << *v;
    return s.str();
}

std::vector<std::string> row_cells(const ResultRow& r) {
    std::ostringstream a;
    a << r.alpha;
    return {a.str(),      estimator_name(r.estimator), cell(r.invalid), cell(r.mae),       cell(r.mse),
            cell(r.accuracy), cell(r.f1), cell(r.mcc), cell(r.recall), cell(r.precision), cell(r.kappa)};
}

}  // namespace

void write_results_csv(const ResultsTable& table, std::ostream& out) {
    for (std::size_t c = 0; c < kTableColumnCount; ++c) out << (c ? "," : "") << kTableColumns[c];
    out << "\n";
    for (const auto& r : table.rows) {
        const auto cells = row_cells(r);
        for (std::size_t c = 0; c < cells.size(); ++c) out << (c ? "," : "") << cells[c];
        out << "\n";
    }
}

void write_results_text(const ResultsTable& table, std::ostream& out) {
    std::vector<std::vector<std::string>> lines;
    lines.emplace_back(kTableColumns, kTableColumns + kTableColumnCount);
    for (const auto& r : table.rows) lines.push_back(row_cells(r));
    std::vector<std::size_t> width(kTableColumnCount, 0);
    for (const auto& l : lines)
        for (std::size_t c = 0; c < l.size(); ++c) width[c] = std::max(width[c], l[c].size());
    for (const auto& l : lines) {
        for (std::size_t c = 0; c < l.size(); ++c) {
            if (c) out << "  ";
            if (c < 2)
                out << std::left << std::setw(static_cast<int>(width[c])) << l[c];
            else
                out << std::right << std::setw(static_cast<int>(width[c])) << l[c];
        }
        out << "\n";
    }
}

}  // namespace pdi
