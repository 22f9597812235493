#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pdi/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Personalized probability dose intervals: fit, predict, evaluate and simulate"};
    app.require_subcommand(1);

    std::string config_path, alpha_list, estimators;
    std::optional<std::uint64_t> seed;
    std::optional<int> folds, replicates, cross_fit_folds;
    std::optional<double> sd_a, sd_y, grid_step;
    std::optional<unsigned> threads;
    std::optional<std::string> out, data, model, predictions, estimator;
    bool normalize = false;

    app.add_option("--config", config_path, "INI-style configuration file")->check(CLI::ExistingFile);
    app.add_option("--seed", seed, "master seed");
    app.add_option("--out", out, "output path (stdout when omitted)");
    app.add_option("--alpha", alpha_list, "comma-separated probability levels");
    app.add_option("--folds", folds, "cross-validation folds");
    app.add_option("--replicates", replicates, "simulation replicates");
    app.add_option("--sd-a", sd_a, "dose noise scale");
    app.add_option("--sd-y", sd_y, "outcome noise scale");
    app.add_option("--grid-step", grid_step, "indirect search grid step");
    app.add_option("--threads", threads, "worker threads");

    auto* sim = app.add_subcommand("simulate", "run the simulation study and write the results table");
    sim->add_option("--estimators", estimators, "comma-separated list of D-Joint, D-CW, Ind-Para");

    auto* fit = app.add_subcommand("fit", "fit an interval rule and write a model file");
    fit->add_option("--data", data, "training CSV (y,a,t_lo,t_hi,x1..xd)");
    fit->add_option("--estimator", estimator, "D-Joint or D-CW");
    fit->add_option("--cross-fit", cross_fit_folds, "cross-fitting folds (0 disables)");
    fit->add_flag("--normalize-dose", normalize, "map doses onto [0,1] by min-max scaling");

    auto* pred = app.add_subcommand("predict", "evaluate a fitted model on a covariate CSV");
    pred->add_option("--model", model, "model file")->required();
    pred->add_option("--data", data, "CSV with columns x1..xd")->required();

    auto* eval = app.add_subcommand("evaluate", "score predictions against a labeled test CSV");
    eval->add_option("--predictions", predictions, "predictions CSV")->required();
    eval->add_option("--data", data, "labeled test CSV")->required();

    auto* orc = app.add_subcommand("oracle", "oracle intervals of the simulation design for a covariate CSV");
    orc->add_option("--data", data, "CSV with columns x1..x10")->required();

    CLI11_PARSE(app, argc, argv);

    pdi::RunConfig cfg;
    cfg.command = app.get_subcommands().front()->get_name();
    try {
        if (!config_path.empty()) pdi::apply_config_file(cfg, config_path);
        auto& e = cfg.experiment;
        if (seed) e.seed = *seed;
        if (out) cfg.out = *out;
        if (!alpha_list.empty()) e.alphas = pdi::parse_list(alpha_list);
        if (folds) e.folds = *folds;
        if (replicates) e.replicates = *replicates;
        if (sd_a) e.sd_a = *sd_a;
        if (sd_y) e.sd_y = *sd_y;
        if (grid_step) e.grid_step = *grid_step;
        if (threads) e.threads = *threads;
        if (!estimators.empty()) {
            e.estimators.clear();
            std::stringstream s(estimators);
            for (std::string name; std::getline(s, name, ',');) e.estimators.push_back(pdi::parse_estimator(name));
        }
        if (data) cfg.data = *data;
        if (model) cfg.model = *model;
        if (predictions) cfg.predictions = *predictions;
        if (estimator) cfg.estimator = *estimator;
        if (cross_fit_folds) cfg.cross_fit_folds = *cross_fit_folds;
        if (normalize) cfg.normalize_dose = true;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return pdi::run_command(cfg, std::cout, std::cerr);
}
