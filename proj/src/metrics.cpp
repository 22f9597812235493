#include "pdi/metrics.hpp"

#include <cmath>

namespace pdi {

namespace {

std::optional<double> ratio(double num, double den) {
    if (den == 0.0) return std::nullopt;
    return num / den;
}

}  // namespace

Contingency contingency(const std::vector<Bounds>& rule_eval, const Dataset& test) {
    if (rule_eval.size() != test.size())
        throw Error(ErrorCode::LengthMismatch, "predictions and test rows differ in count");
    Contingency c;
    for (std::size_t i = 0; i < rule_eval.size(); ++i) {
        const auto& o = test[i];
        const bool inside = o.a >= rule_eval[i].first && o.a <= rule_eval[i].second;
        if (o.r && inside) ++c.tp;
        else if (!o.r && !inside) ++c.tn;
        else if (o.r && !inside) ++c.fp;
        else ++c.fn;
    }
    return c;
}

MetricsReport classification_metrics(const Contingency& c) {
    if (c.total() <= 0) throw Error(ErrorCode::EmptyContingency, "contingency table is empty");
    const auto tp = static_cast<double>(c.tp);
    const auto tn = static_cast<double>(c.tn);
    const auto fp = static_cast<double>(c.fp);
    const auto fn = static_cast<double>(c.fn);
    MetricsReport m;
    m.accuracy = ratio(tp + tn, tp + tn + fp + fn);
    m.f1 = ratio(2.0 * tp, 2.0 * tp + fp + fn);
    m.mcc = ratio(tp * tn - fp * fn, std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)));
    m.recall = ratio(tp, tp + fn);
    m.precision = ratio(tp, tp + fp);
    m.kappa = ratio(2.0 * (tp * tn - fn * fp), (tp + fp) * (fp + tn) + (tp + fn) * (fn + tn));
    return m;
}

IntervalErrors interval_errors(const std::vector<Bounds>& rule_eval, const std::vector<std::optional<Bounds>>& oracle) {
    if (rule_eval.size() != oracle.size())
        throw Error(ErrorCode::LengthMismatch, "estimates and oracle differ in count");
    if (rule_eval.empty()) throw Error(ErrorCode::EmptyInput, "no rows to compare");
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t i = 0; i < rule_eval.size(); ++i) {
        if (!oracle[i]) throw Error(ErrorCode::OracleUndefined, "oracle interval missing at row " + std::to_string(i));
        const double dl = oracle[i]->first - rule_eval[i].first;
        const double du = oracle[i]->second - rule_eval[i].second;
        abs_sum += std::abs(dl) + std::abs(du);
        sq_sum += dl * dl + du * du;
    }
    const auto m = static_cast<double>(rule_eval.size());
    return {abs_sum / m, sq_sum / m};
}

IntervalErrors interval_errors(const std::vector<Bounds>& rule_eval, const std::vector<Bounds>& oracle) {
    std::vector<std::optional<Bounds>> o(oracle.begin(), oracle.end());
    return interval_errors(rule_eval, o);
}

bool valid_bounds(double ell, double u) { return ell >= 0.0 && u <= 1.0 && ell <= u; }

double invalid_proportion(const std::vector<Bounds>& raw_eval, const std::vector<bool>& flagged) {
    if (raw_eval.empty()) throw Error(ErrorCode::EmptyInput, "no rows to assess");
    if (!flagged.empty() && flagged.size() != raw_eval.size())
        throw Error(ErrorCode::LengthMismatch, "flags and rows differ in count");
    std::size_t bad = 0;
    for (std::size_t i = 0; i < raw_eval.size(); ++i) {
        const bool flag = !flagged.empty() && flagged[i];
        if (flag || !valid_bounds(raw_eval[i].first, raw_eval[i].second)) ++bad;
    }
    return static_cast<double>(bad) / static_cast<double>(raw_eval.size());
}

}  // namespace pdi
