#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>

#include "pdi/simulation.hpp"

namespace pdi {

struct RunConfig {
    std::string command;
    std::string data;         // training or labeled test CSV
    std::string model;        // model file (fit output, predict input)
    std::string predictions;  // predictions CSV (evaluate input)
    std::string out;          // primary output path; empty writes to stdout
    std::string estimator = "D-Joint";
    int cross_fit_folds = 0;  // 0 fits without cross-fitting
    bool normalize_dose = false;
    ExperimentConfig experiment;

    void validate() const;
};

// Applies an INI-style file: sections [run], [simulate], [grid], [solver], [fit].
void apply_config_file(RunConfig& cfg, const std::string& path);
std::vector<double> parse_list(const std::string& text);

int cmd_simulate(const RunConfig& cfg, std::ostream& log);
int cmd_fit(const RunConfig& cfg, std::ostream& log);
int cmd_predict(const RunConfig& cfg, std::ostream& log);
int cmd_evaluate(const RunConfig& cfg, std::ostream& log);
int cmd_oracle(const RunConfig& cfg, std::ostream& log);

// Dispatches on cfg.command; errors become a diagnostic on `err` and exit code 1.
int run_command(const RunConfig& cfg, std::ostream& log, std::ostream& err);

}  // namespace pdi
