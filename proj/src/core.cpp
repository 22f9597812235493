#include "pdi/core.hpp"

#include <cmath>
#include <string>

namespace pdi {

const char* error_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::DoseOutOfRange: return "DoseOutOfRange";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::IndicatorMismatch: return "IndicatorMismatch";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::SingularDesign: return "SingularDesign";
        case ErrorCode::DegenerateVariance: return "DegenerateVariance";
        case ErrorCode::NonpositiveDose: return "NonpositiveDose";
        case ErrorCode::Separation: return "Separation";
        case ErrorCode::SingleClass: return "SingleClass";
        case ErrorCode::InvalidInterval: return "InvalidInterval";
        case ErrorCode::NonpositiveEpsilon: return "NonpositiveEpsilon";
        case ErrorCode::MonotonicityViolated: return "MonotonicityViolated";
        case ErrorCode::SolveFailure: return "SolveFailure";
        case ErrorCode::IterationCapWithoutDescent: return "IterationCapWithoutDescent";
        case ErrorCode::TooFewRows: return "TooFewRows";
        case ErrorCode::NoInterval: return "NoInterval";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::EmptyContingency: return "EmptyContingency";
        case ErrorCode::OracleUndefined: return "OracleUndefined";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::SchemaError: return "SchemaError";
        case ErrorCode::VersionError: return "VersionError";
        case ErrorCode::IoError: return "IoError";
    }
    return "Error";
}

bool in_range(double y, double t_lo, double t_hi) { return y >= t_lo && y <= t_hi; }

Eigen::MatrixXd Dataset::covariates() const {
    Eigen::MatrixXd X(static_cast<Eigen::Index>(obs_.size()), static_cast<Eigen::Index>(d_));
    for (std::size_t i = 0; i < obs_.size(); ++i)
        for (std::size_t j = 0; j < d_; ++j) X(i, j) = obs_[i].x[j];
    return X;
}

Dataset Dataset::subset(const std::vector<std::size_t>& rows) const {
    std::vector<Observation> out;
    out.reserve(rows.size());
    for (auto i : rows) out.push_back(obs_.at(i));
    return Dataset(std::move(out), d_);
}

Dataset validate_dataset(const Dataset& ds, bool check_r) {
    if (ds.empty()) throw Error(ErrorCode::EmptyDataset, "dataset has no rows");
    std::vector<Observation> out = ds.observations();
    for (std::size_t i = 0; i < out.size(); ++i) {
        auto& o = out[i];
        const std::string row = "row " + std::to_string(i);
        if (o.x.size() != ds.dim())
            throw Error(ErrorCode::DimensionMismatch,
                        row + " has " + std::to_string(o.x.size()) + " covariates, expected " +
                            std::to_string(ds.dim()));
        if (!std::isfinite(o.y))
            throw Error(ErrorCode::InvalidArgument, row + " outcome is not finite");
        for (double v : o.x)
            if (!std::isfinite(v)) throw Error(ErrorCode::InvalidArgument, row + " covariate is not finite");
        if (!(o.a >= 0.0 && o.a <= 1.0))
            throw Error(ErrorCode::DoseOutOfRange, row + " dose " + std::to_string(o.a) + " outside [0,1]");
        if (std::isnan(o.t_lo) || std::isnan(o.t_hi) || o.t_lo > o.t_hi)
            throw Error(ErrorCode::InvalidArgument, row + " desired range is empty");
        const bool r = in_range(o.y, o.t_lo, o.t_hi);
        if (check_r && r != o.r)
            throw Error(ErrorCode::IndicatorMismatch, row + " supplied r disagrees with y and range");
        o.r = r;
    }
    return Dataset(std::move(out), ds.dim());
}

void HyperParams::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::InvalidArgument, m); };
    if (!(gamma > 0)) fail("gamma must be positive");
    if (!(lambda >= 0)) fail("lambda must be non-negative");
    if (!(epsilon > 0)) throw Error(ErrorCode::NonpositiveEpsilon, "epsilon must be positive");
    if (!(kappa >= 0)) fail("kappa must be non-negative");
    if (!(p_init >= 0 && p_init <= 1)) fail("p_init must lie in [0,1]");
    if (!(alpha > 0 && alpha < 1)) fail("alpha must lie in (0,1)");
    if (!(c_loss > 0)) fail("c_loss must be positive");
    if (!(c_cvx >= c_loss)) fail("c_cvx must be at least c_loss");
    if (solver.max_dc_iter < 1 || solver.max_sub_iter < 1 || solver.sub_window < 1)
        fail("solver iteration limits must be positive");
    if (solver.sub_max_shrinks < 0) fail("sub_max_shrinks must be non-negative");
    if (solver.quad_nodes < 3 || solver.quad_nodes % 2 == 0) fail("quad_nodes must be odd and >= 3");
    if (solver.split_nodes < 3) fail("split_nodes must be >= 3");
    if (solver.c_loss_nodes < 2) fail("c_loss_nodes must be >= 2");
    if (!(solver.e_floor > 0)) fail("e_floor must be positive");
}

void TaskSpec::validate() const {
    if (!(alpha > 0 && alpha < 1)) throw Error(ErrorCode::InvalidArgument, "alpha must lie in (0,1)");
}

void IntervalRule::validate() const {
    if (beta_U.size() != beta_L.size() || anchors.rows() != beta_L.size())
        throw Error(ErrorCode::DimensionMismatch, "rule coefficients and anchors disagree in length");
    if (width && *width < 0) throw Error(ErrorCode::InvalidArgument, "width must be non-negative");
    if (!(gamma > 0)) throw Error(ErrorCode::InvalidArgument, "gamma must be positive");
}

}  // namespace pdi
