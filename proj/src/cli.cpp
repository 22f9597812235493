#include "pdi/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "pdi/io.hpp"
#include "pdi/metrics.hpp"
#include "pdi/pipeline.hpp"

namespace pdi {

namespace fs = std::filesystem;

std::vector<double> parse_list(const std::string& text) {
    std::vector<double> out;
    std::string item;
    std::istringstream s(text);
    while (std::getline(s, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        const auto e = item.find_last_not_of(" \t");
        out.push_back(parse_number(item.substr(b, e - b + 1), "list '" + text + "'"));
    }
    if (out.empty()) throw Error(ErrorCode::InvalidArgument, "empty list '" + text + "'");
    return out;
}

namespace {

std::vector<std::string> parse_names(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream s(text);
    while (std::getline(s, item, ',')) {
        const auto b = item.find_first_not_of(" \t");
        if (b == std::string::npos) continue;
        const auto e = item.find_last_not_of(" \t");
        out.push_back(item.substr(b, e - b + 1));
    }
    return out;
}

void check_readable(const std::string& path, const std::string& what) {
    if (path.empty()) throw Error(ErrorCode::InvalidArgument, what + " path is required");
    if (!fs::is_regular_file(path)) throw Error(ErrorCode::IoError, what + " '" + path + "' does not exist");
}

void check_writable_parent(const std::string& path) {
    if (path.empty()) return;
    const fs::path parent = fs::path(path).parent_path();
    if (!parent.empty() && !fs::is_directory(parent))
        throw Error(ErrorCode::IoError, "output directory '" + parent.string() + "' does not exist");
}

// Writes through a temporary buffer so a failed command leaves no partial file.
template <class Fn>
void emit(const std::string& path, std::ostream& fallback, Fn&& body) {
    if (path.empty()) {
        body(fallback);
        return;
    }
    std::ostringstream buf;
    body(buf);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
    out << buf.str();
    if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path + "'");
}

std::vector<HyperParams> grid_from(const ExperimentConfig& e, double alpha, bool cw) {
    HyperParams base;
    base.alpha = alpha;
    base.epsilon = e.epsilon;
    base.solver = e.solver;
    return make_grid(base, e.gammas, e.lambdas, e.ps, cw ? std::vector<double>{0.0} : e.kappas);
}

std::string opt_cell(const std::optional<double>& v) {
    if (!v) return "-";
    std::ostringstream s;
    s << std::setprecision(17) << *v;
    return s.str();
}

}  // namespace

void RunConfig::validate() const {
    experiment.validate();
    if (estimator != "D-Joint" && estimator != "D-CW")
        throw Error(ErrorCode::InvalidArgument, "fit supports estimators D-Joint and D-CW, got '" + estimator + "'");
    if (cross_fit_folds < 0 || cross_fit_folds == 1)
        throw Error(ErrorCode::TooFewRows, "cross-fitting needs at least 2 folds");
    if (!(experiment.grid_step > 0 && experiment.grid_step <= 0.1))
        throw Error(ErrorCode::InvalidArgument, "grid_step must lie in (0, 0.1]");
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
    check_readable(path, "config file");
    boost::property_tree::ptree pt;
    try {
        boost::property_tree::read_ini(path, pt);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw Error(ErrorCode::SchemaError, std::string("config: ") + e.what());
    }
    auto& e = cfg.experiment;
    auto& s = e.solver;
    try {
        for (const auto& [section, tree] : pt) {
            for (const auto& [key, node] : tree) {
                const std::string v = node.get_value<std::string>();
                const std::string k = section + "." + key;
                auto num = [&] { return parse_number(v, k); };
                auto integer = [&] { return static_cast<int>(num()); };
                if (k == "run.seed") e.seed = std::stoull(v);
                else if (k == "run.threads") e.threads = static_cast<unsigned>(integer());
                else if (k == "run.out") cfg.out = v;
                else if (k == "run.data") cfg.data = v;
                else if (k == "run.model") cfg.model = v;
                else if (k == "run.predictions") cfg.predictions = v;
                else if (k == "simulate.alphas") e.alphas = parse_list(v);
                else if (k == "simulate.estimators") {
                    e.estimators.clear();
                    for (const auto& n : parse_names(v)) e.estimators.push_back(parse_estimator(n));
                }
                else if (k == "simulate.replicates") e.replicates = integer();
                else if (k == "simulate.n_train") e.n_train = static_cast<std::size_t>(integer());
                else if (k == "simulate.n_test") e.n_test = static_cast<std::size_t>(integer());
                else if (k == "simulate.sd_a") e.sd_a = num();
                else if (k == "simulate.sd_y") e.sd_y = num();
                else if (k == "grid.gammas") e.gammas = parse_list(v);
                else if (k == "grid.lambdas") e.lambdas = parse_list(v);
                else if (k == "grid.ps") e.ps = parse_list(v);
                else if (k == "grid.kappas") e.kappas = parse_list(v);
                else if (k == "grid.epsilon") e.epsilon = num();
                else if (k == "grid.folds") e.folds = integer();
                else if (k == "grid.grid_step") e.grid_step = num();
                else if (k == "solver.max_dc_iter") s.max_dc_iter = integer();
                else if (k == "solver.dc_tol") s.dc_tol = num();
                else if (k == "solver.max_sub_iter") s.max_sub_iter = integer();
                else if (k == "solver.sub_window") s.sub_window = integer();
                else if (k == "solver.sub_improve_tol") s.sub_improve_tol = num();
                else if (k == "solver.sub_max_shrinks") s.sub_max_shrinks = integer();
                else if (k == "solver.sub_t0") s.sub_t0 = num();
                else if (k == "solver.sub_first_move") s.sub_first_move = num();
                else if (k == "solver.quad_nodes") s.quad_nodes = integer();
                else if (k == "solver.split_nodes") s.split_nodes = integer();
                else if (k == "solver.c_loss_nodes") s.c_loss_nodes = integer();
                else if (k == "solver.e_floor") s.e_floor = num();
                else if (k == "fit.estimator") cfg.estimator = v;
                else if (k == "fit.cross_fit_folds") cfg.cross_fit_folds = integer();
                else if (k == "fit.normalize_dose") cfg.normalize_dose = (v == "true" || v == "1");
                else throw Error(ErrorCode::SchemaError, "config: unknown key '" + k + "'");
            }
        }
    } catch (const std::logic_error& ex) {
        throw Error(ErrorCode::SchemaError, std::string("config: bad value (") + ex.what() + ")");
    }
}

int cmd_simulate(const RunConfig& cfg, std::ostream& log) {
    check_writable_parent(cfg.out);
    const ResultsTable table = run_experiment(cfg.experiment);
    emit(cfg.out, log, [&](std::ostream& o) { write_results_csv(table, o); });
    if (!cfg.out.empty()) write_results_text(table, log);
    return 0;
}

int cmd_fit(const RunConfig& cfg, std::ostream& log) {
    check_readable(cfg.data, "data file");
    const std::string target = cfg.out.empty() ? cfg.model : cfg.out;
    if (target.empty()) throw Error(ErrorCode::InvalidArgument, "fit needs --out or --model for the model file");
    check_writable_parent(target);

    Dataset ds = read_dataset_file(cfg.data);
    DoseScale scale;
    if (cfg.normalize_dose) {
        if (ds.empty()) throw Error(ErrorCode::EmptyDataset, "dataset has no rows");
        scale.lo = scale.hi = ds[0].a;
        for (const auto& o : ds.observations()) {
            scale.lo = std::min(scale.lo, o.a);
            scale.hi = std::max(scale.hi, o.a);
        }
        if (!(scale.hi > scale.lo)) throw Error(ErrorCode::InvalidArgument, "dose is constant; cannot normalize");
        std::vector<Observation> obs = ds.observations();
        for (auto& o : obs) o.a = scale.to_unit(o.a);
        ds = Dataset(std::move(obs), ds.dim());
    }

    const bool cw = cfg.estimator == "D-CW";
    const auto grid = grid_from(cfg.experiment, cfg.experiment.alphas.front(), cw);
    FitOptions opt;
    opt.kind = cw ? EstimatorKind::ConstantWidth : EstimatorKind::Joint;
    opt.folds = cfg.experiment.folds;
    opt.seed = cfg.experiment.seed;
    opt.threads = cfg.experiment.threads;
    opt.grid_step = cfg.experiment.grid_step;
    ModelFile m;
    m.scale = scale;
    m.estimator = cfg.cross_fit_folds >= 2 ? cross_fit(ds, cfg.cross_fit_folds, grid, opt)
                                           : fit_estimator(ds, grid, opt);
    emit(target, log, [&](std::ostream& o) { save_model(m, o); });

    const auto& h = m.estimator.hyper;
    log << "fitted " << cfg.estimator << " on " << ds.size() << " rows: gamma=" << h.gamma << " lambda=" << h.lambda
        << " p=" << h.p_init << " kappa=" << h.kappa << "\n";
    for (std::size_t s = 0; s < m.estimator.traces.size(); ++s) {
        const auto& t = m.estimator.traces[s];
        log << "  rule " << s << ": " << t.iterations << " DC iterations, "
            << (t.converged ? "converged" : "iteration cap") << ", objective " << t.objective.back() << "\n";
    }
    for (std::size_t s = 0; s < m.estimator.nuisance.size(); ++s) {
        const auto& nm = m.estimator.nuisance[s];
        std::size_t floored = 0;
        for (const auto& o : ds.observations()) {
            const Eigen::Map<const Eigen::VectorXd> x(o.x.data(), static_cast<Eigen::Index>(o.x.size()));
            if (nm.e_floored(o.a, x)) ++floored;
        }
        log << "  nuisance " << s << ": " << floored << " rows at the density floor";
        if (nm.logistic_info.separation) log << ", separation detected (ridge refit)";
        log << "\n";
    }
    return 0;
}

int cmd_predict(const RunConfig& cfg, std::ostream& log) {
    check_readable(cfg.model, "model file");
    check_readable(cfg.data, "data file");
    check_writable_parent(cfg.out);
    const ModelFile m = load_model_file(cfg.model);
    const Eigen::MatrixXd Z = read_covariates_file(cfg.data, m.estimator.dim());
    const auto rows = make_predictions(m.estimator, Z, m.scale);
    emit(cfg.out, log, [&](std::ostream& o) { write_predictions(rows, o); });
    return 0;
}

int cmd_evaluate(const RunConfig& cfg, std::ostream& log) {
    check_readable(cfg.predictions, "predictions file");
    check_readable(cfg.data, "test data file");
    check_writable_parent(cfg.out);
    std::ifstream pin(cfg.predictions);
    const auto preds = read_predictions(pin);
    const Dataset test = read_dataset_file(cfg.data);
    if (preds.size() != test.size())
        throw Error(ErrorCode::LengthMismatch, "predictions and test rows differ in count");

    std::vector<Bounds> raw, dose;
    std::vector<bool> flags;
    for (const auto& p : preds) {
        raw.emplace_back(p.ell_raw, p.u_raw);
        dose.emplace_back(p.dose_lo, p.dose_hi);
        flags.push_back(false);
    }
    const Contingency c = contingency(dose, test);
    const MetricsReport m = classification_metrics(c);
    const double invalid = invalid_proportion(raw, flags);
    emit(cfg.out, log, [&](std::ostream& o) {
        o << "metric,value\n";
        o << "tp," << c.tp << "\ntn," << c.tn << "\nfp," << c.fp << "\nfn," << c.fn << "\n";
        o << "Invalid PDI," << opt_cell(invalid) << "\n";
        o << "Accuracy," << opt_cell(m.accuracy) << "\nF1," << opt_cell(m.f1) << "\nMCC," << opt_cell(m.mcc)
          << "\nRecall," << opt_cell(m.recall) << "\nPrecision," << opt_cell(m.precision)
          << "\nCohen's kappa," << opt_cell(m.kappa) << "\n";
    });
    return 0;
}

int cmd_oracle(const RunConfig& cfg, std::ostream& log) {
    check_readable(cfg.data, "covariate file");
    check_writable_parent(cfg.out);
    const Eigen::MatrixXd Z = read_covariates_file(cfg.data, kDgpDim);
    emit(cfg.out, log, [&](std::ostream& o) {
        o << "alpha,row,ell,u\n";
        for (double alpha : cfg.experiment.alphas) {
            for (Eigen::Index i = 0; i < Z.rows(); ++i) {
                o << alpha << ',' << i << ',';
                try {
                    const Bounds b = oracle_pdi(Z.row(i).transpose(), alpha, cfg.experiment.sd_y);
                    o << opt_cell(b.first) << ',' << opt_cell(b.second) << "\n";
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::NoInterval) throw;
                    o << "-,-\n";
                }
            }
        }
    });
    return 0;
}

int run_command(const RunConfig& cfg, std::ostream& log, std::ostream& err) {
    try {
        cfg.validate();
        if (cfg.command == "simulate") return cmd_simulate(cfg, log);
        if (cfg.command == "fit") return cmd_fit(cfg, log);
        if (cfg.command == "predict") return cmd_predict(cfg, log);
        if (cfg.command == "evaluate") return cmd_evaluate(cfg, log);
        if (cfg.command == "oracle") return cmd_oracle(cfg, log);
        err << "error: unknown command '" << cfg.command << "'\n";
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
    }
    return 1;
}

}  // namespace pdi
