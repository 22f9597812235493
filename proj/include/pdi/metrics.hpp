#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "pdi/core.hpp"

namespace pdi {

using Bounds = std::pair<double, double>;

struct Contingency {
    long tp = 0;
    long tn = 0;
    long fp = 0;
    long fn = 0;

    long total() const { return tp + tn + fp + fn; }
};

// Scores with a zero denominator are left empty.
struct MetricsReport {
    std::optional<double> accuracy;
    std::optional<double> f1;
    std::optional<double> mcc;
    std::optional<double> recall;
    std::optional<double> precision;
    std::optional<double> kappa;
};

// TP: r=1 and dose inside; TN: r=0 and outside; FP: r=1 and outside; FN: r=0 and inside.
Contingency contingency(const std::vector<Bounds>& rule_eval, const Dataset& test);
MetricsReport classification_metrics(const Contingency& c);

struct IntervalErrors {
    double mae;
    double mse;
};
IntervalErrors interval_errors(const std::vector<Bounds>& rule_eval, const std::vector<std::optional<Bounds>>& oracle);
IntervalErrors interval_errors(const std::vector<Bounds>& rule_eval, const std::vector<Bounds>& oracle);

bool valid_bounds(double ell, double u);
// Fraction of rows with ell > u or a bound outside [0,1], or flagged by the caller.
double invalid_proportion(const std::vector<Bounds>& raw_eval, const std::vector<bool>& flagged = {});

}  // namespace pdi
