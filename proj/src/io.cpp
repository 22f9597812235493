#include "pdi/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace pdi {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream s(line);
    while (std::getline(s, cur, ',')) out.push_back(trim(cur));
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for reading");
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
    return out;
}

std::string fmt17(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
}

// Positions of x1, x2, ... up to the first missing index.
std::vector<long> covariate_columns(const CsvTable& t) {
    std::vector<long> cols;
    for (std::size_t j = 1;; ++j) {
        const long c = t.column("x" + std::to_string(j));
        if (c < 0) break;
        cols.push_back(c);
    }
    return cols;
}

}  // namespace

long CsvTable::column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] == name) return static_cast<long>(j);
    return -1;
}

CsvTable read_csv(std::istream& in) {
    CsvTable t;
    std::string line;
    bool have_header = false;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split_line(line);
        if (!have_header) {
            t.header = std::move(cells);
            have_header = true;
            continue;
        }
        if (cells.size() != t.header.size())
            throw Error(ErrorCode::SchemaError, "line " + std::to_string(line_no) + " has " +
                                                    std::to_string(cells.size()) + " fields, header has " +
                                                    std::to_string(t.header.size()));
        t.rows.push_back(std::move(cells));
    }
    if (!have_header) throw Error(ErrorCode::SchemaError, "missing header row");
    return t;
}

CsvTable read_csv_file(const std::string& path) {
    auto in = open_in(path);
    return read_csv(in);
}

double parse_number(const std::string& cell, const std::string& where) {
    double v = 0.0;
    const char* b = cell.data();
    const char* e = b + cell.size();
    if (!cell.empty() && *b == '+') ++b;
    const auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc() || res.ptr != e || cell.empty())
        throw Error(ErrorCode::SchemaError, "cannot parse '" + cell + "' as a number at " + where);
    return v;
}

Dataset read_dataset(std::istream& in) {
    const CsvTable t = read_csv(in);
    static const char* fixed[] = {"y", "a", "t_lo", "t_hi"};
    if (t.header.size() < 5)
        throw Error(ErrorCode::SchemaError, "expected columns y,a,t_lo,t_hi,x1..xd");
    for (std::size_t j = 0; j < 4; ++j)
        if (t.header[j] != fixed[j])
            throw Error(ErrorCode::SchemaError, "column " + std::to_string(j + 1) + " must be '" + fixed[j] +
                                                    "', found '" + t.header[j] + "'");
    const std::size_t d = t.header.size() - 4;
    for (std::size_t j = 0; j < d; ++j)
        if (t.header[4 + j] != "x" + std::to_string(j + 1))
            throw Error(ErrorCode::SchemaError, "column " + std::to_string(5 + j) + " must be 'x" +
                                                    std::to_string(j + 1) + "', found '" + t.header[4 + j] + "'");
    std::vector<Observation> obs;
    obs.reserve(t.rows.size());
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        const std::string where = "data row " + std::to_string(i + 1);
        Observation o;
        o.y = parse_number(row[0], where);
        o.a = parse_number(row[1], where);
        o.t_lo = parse_number(row[2], where);
        o.t_hi = parse_number(row[3], where);
        o.x.resize(d);
        for (std::size_t j = 0; j < d; ++j) o.x[j] = parse_number(row[4 + j], where);
        o.r = in_range(o.y, o.t_lo, o.t_hi);
        obs.push_back(std::move(o));
    }
    return Dataset(std::move(obs), d);
}

Dataset read_dataset_file(const std::string& path) {
    auto in = open_in(path);
    return read_dataset(in);
}

void write_dataset(const Dataset& ds, std::ostream& out) {
    out << "y,a,t_lo,t_hi";
    for (std::size_t j = 0; j < ds.dim(); ++j) out << ",x" << j + 1;
    out << "\n";
    for (const auto& o : ds.observations()) {
        out << fmt17(o.y) << ',' << fmt17(o.a) << ',' << fmt17(o.t_lo) << ',' << fmt17(o.t_hi);
        for (double v : o.x) out << ',' << fmt17(v);
        out << "\n";
    }
}

Eigen::MatrixXd read_covariates(std::istream& in, std::size_t expected_dim) {
    const CsvTable t = read_csv(in);
    const auto cols = covariate_columns(t);
    if (cols.empty()) throw Error(ErrorCode::SchemaError, "no covariate columns x1..xd found");
    if (expected_dim != 0 && cols.size() != expected_dim)
        throw Error(ErrorCode::SchemaError, "found " + std::to_string(cols.size()) + " covariate columns, expected " +
                                                std::to_string(expected_dim));
    Eigen::MatrixXd Z(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t i = 0; i < t.rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
            Z(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                parse_number(t.rows[i][static_cast<std::size_t>(cols[j])], "data row " + std::to_string(i + 1));
    return Z;
}

Eigen::MatrixXd read_covariates_file(const std::string& path, std::size_t expected_dim) {
    auto in = open_in(path);
    return read_covariates(in, expected_dim);
}

std::vector<PredictionRow> make_predictions(const FittedEstimator& est, const Eigen::MatrixXd& Z,
                                            const DoseScale& scale) {
    const auto raw = est.predict_raw(Z);
    std::vector<PredictionRow> out;
    out.reserve(raw.size());
    for (const auto& b : raw) {
        const Postprocessed p = postprocess(b.first, b.second);
        PredictionRow r;
        r.ell_raw = b.first;
        r.u_raw = b.second;
        r.ell = p.ell;
        r.u = p.u;
        r.fallback = p.fallback_used;
        r.dose_lo = scale.from_unit(p.ell);
        r.dose_hi = scale.from_unit(p.u);
        out.push_back(r);
    }
    return out;
}

void write_predictions(const std::vector<PredictionRow>& rows, std::ostream& out) {
    out << "ell_raw,u_raw,ell,u,fallback,dose_lo,dose_hi\n";
    for (const auto& r : rows)
        out << fmt17(r.ell_raw) << ',' << fmt17(r.u_raw) << ',' << fmt17(r.ell) << ',' << fmt17(r.u) << ','
            << (r.fallback ? 1 : 0) << ',' << fmt17(r.dose_lo) << ',' << fmt17(r.dose_hi) << "\n";
}

std::vector<PredictionRow> read_predictions(std::istream& in) {
    const CsvTable t = read_csv(in);
    static const char* names[] = {"ell_raw", "u_raw", "ell", "u", "fallback", "dose_lo", "dose_hi"};
    long idx[7];
    for (int k = 0; k < 7; ++k) {
        idx[k] = t.column(names[k]);
        if (idx[k] < 0) throw Error(ErrorCode::SchemaError, std::string("predictions lack column '") + names[k] + "'");
    }
    std::vector<PredictionRow> out;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        const std::string where = "prediction row " + std::to_string(i + 1);
        auto get = [&](int k) { return parse_number(row[static_cast<std::size_t>(idx[k])], where); };
        PredictionRow r;
        r.ell_raw = get(0);
        r.u_raw = get(1);
        r.ell = get(2);
        r.u = get(3);
        r.fallback = get(4) != 0.0;
        r.dose_lo = get(5);
        r.dose_hi = get(6);
        out.push_back(r);
    }
    return out;
}

namespace {

json vec_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd json_vec(const json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

const char* kind_name(EstimatorKind k) { return k == EstimatorKind::ConstantWidth ? "constant_width" : "joint"; }

json hyper_json(const HyperParams& h) {
    const auto& s = h.solver;
    return {{"gamma", h.gamma},
            {"lambda", h.lambda},
            {"epsilon", h.epsilon},
            {"kappa", h.kappa},
            {"p_init", h.p_init},
            {"alpha", h.alpha},
            {"c_loss", h.c_loss},
            {"c_cvx", h.c_cvx},
            {"auto_constants", h.auto_constants},
            {"solver",
             {{"max_dc_iter", s.max_dc_iter},
              {"dc_tol", s.dc_tol},
              {"max_sub_iter", s.max_sub_iter},
              {"sub_window", s.sub_window},
              {"sub_improve_tol", s.sub_improve_tol},
              {"sub_max_shrinks", s.sub_max_shrinks},
              {"sub_t0", s.sub_t0},
              {"sub_first_move", s.sub_first_move},
              {"quad_nodes", s.quad_nodes},
              {"split_nodes", s.split_nodes},
              {"c_loss_nodes", s.c_loss_nodes},
              {"e_floor", s.e_floor}}}};
}

HyperParams json_hyper(const json& j) {
    HyperParams h;
    h.gamma = j.at("gamma");
    h.lambda = j.at("lambda");
    h.epsilon = j.at("epsilon");
    h.kappa = j.at("kappa");
    h.p_init = j.at("p_init");
    h.alpha = j.at("alpha");
    h.c_loss = j.at("c_loss");
    h.c_cvx = j.at("c_cvx");
    h.auto_constants = j.at("auto_constants");
    const json& s = j.at("solver");
    h.solver.max_dc_iter = s.at("max_dc_iter");
    h.solver.dc_tol = s.at("dc_tol");
    h.solver.max_sub_iter = s.at("max_sub_iter");
    h.solver.sub_window = s.at("sub_window");
    h.solver.sub_improve_tol = s.at("sub_improve_tol");
    h.solver.sub_max_shrinks = s.at("sub_max_shrinks");
    h.solver.sub_t0 = s.at("sub_t0");
    h.solver.sub_first_move = s.at("sub_first_move");
    h.solver.quad_nodes = s.at("quad_nodes");
    h.solver.split_nodes = s.at("split_nodes");
    h.solver.c_loss_nodes = s.at("c_loss_nodes");
    h.solver.e_floor = s.at("e_floor");
    return h;
}

}  // namespace

void save_model(const ModelFile& m, std::ostream& out) {
    const FittedEstimator& est = m.estimator;
    if (est.rules.empty()) throw Error(ErrorCode::InvalidArgument, "estimator holds no rules");
    json j;
    j["format"] = "pdi-model";
    j["version"] = kModelVersion;
    j["kind"] = kind_name(est.kind);
    j["dim"] = est.dim();
    j["dose_scale"] = {{"lo", m.scale.lo}, {"hi", m.scale.hi}};
    j["hyper"] = hyper_json(est.hyper);
    json rules = json::array();
    for (const auto& r : est.rules) {
        json jr;
        jr["gamma"] = r.gamma;
        jr["width"] = r.width ? json(*r.width) : json(nullptr);
        jr["anchor_count"] = r.size();
        jr["beta_L0"] = r.beta_L0;
        jr["beta_U0"] = r.beta_U0;
        jr["beta_L"] = vec_json(r.beta_L);
        jr["beta_U"] = vec_json(r.beta_U);
        json anchors = json::array();
        for (Eigen::Index i = 0; i < r.anchors.rows(); ++i) anchors.push_back(vec_json(r.anchors.row(i).transpose()));
        jr["anchors"] = std::move(anchors);
        rules.push_back(std::move(jr));
    }
    j["rules"] = std::move(rules);
    json nuis = json::array();
    for (const auto& n : est.nuisance) {
        nuis.push_back({{"propensity",
                         {{"coef", vec_json(n.propensity.coef)},
                          {"sigma2", n.propensity.sigma2},
                          {"log_dose", n.propensity.log_dose}}},
                        {"dose_prob",
                         {{"theta0", n.dose_prob.theta0},
                          {"theta_a", n.dose_prob.theta_a},
                          {"theta_a2", n.dose_prob.theta_a2},
                          {"theta_x", vec_json(n.dose_prob.theta_x)}}},
                        {"e_floor", n.e_floor},
                        {"fitted_rows", n.fitted_rows}});
    }
    j["nuisance"] = std::move(nuis);
    json diag = json::array();
    for (const auto& t : est.traces)
        diag.push_back({{"dc_iterations", t.iterations},
                        {"converged", t.converged},
                        {"rejected_steps", t.rejected_steps},
                        {"objective", t.objective}});
    j["diagnostics"] = std::move(diag);
    // Default serialization renders doubles with round-trip precision.
    out << j.dump(1) << "\n";
}

ModelFile load_model(std::istream& in) {
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("model file is not valid: ") + e.what());
    }
    if (!j.is_object() || j.value("format", std::string()) != "pdi-model")
        throw Error(ErrorCode::VersionError, "not a pdi model file");
    if (!j.contains("version") || !j["version"].is_number_integer() || j["version"].get<int>() != kModelVersion)
        throw Error(ErrorCode::VersionError, "unsupported model format version");
    ModelFile m;
    try {
        auto& est = m.estimator;
        const std::string kind = j.at("kind");
        if (kind == "joint")
            est.kind = EstimatorKind::Joint;
        else if (kind == "constant_width")
            est.kind = EstimatorKind::ConstantWidth;
        else
            throw Error(ErrorCode::SchemaError, "unknown estimator kind '" + kind + "'");
        const auto d = j.at("dim").get<std::size_t>();
        m.scale.lo = j.at("dose_scale").at("lo");
        m.scale.hi = j.at("dose_scale").at("hi");
        est.hyper = json_hyper(j.at("hyper"));
        for (const auto& jr : j.at("rules")) {
            IntervalRule r;
            r.gamma = jr.at("gamma");
            if (!jr.at("width").is_null()) r.width = jr.at("width").get<double>();
            r.beta_L0 = jr.at("beta_L0");
            r.beta_U0 = jr.at("beta_U0");
            r.beta_L = json_vec(jr.at("beta_L"));
            r.beta_U = json_vec(jr.at("beta_U"));
            const auto count = jr.at("anchor_count").get<std::size_t>();
            const auto& anchors = jr.at("anchors");
            if (anchors.size() != count || static_cast<std::size_t>(r.beta_L.size()) != count)
                throw Error(ErrorCode::SchemaError, "anchor count does not match the coefficients");
            r.anchors.resize(static_cast<Eigen::Index>(count), static_cast<Eigen::Index>(d));
            for (std::size_t i = 0; i < count; ++i) {
                const Eigen::VectorXd row = json_vec(anchors[i]);
                if (static_cast<std::size_t>(row.size()) != d)
                    throw Error(ErrorCode::SchemaError, "anchor dimension does not match the model dimension");
                r.anchors.row(static_cast<Eigen::Index>(i)) = row.transpose();
            }
            r.validate();
            est.rules.push_back(std::move(r));
        }
        if (est.rules.empty()) throw Error(ErrorCode::SchemaError, "model holds no rules");
        for (const auto& jn : j.at("nuisance")) {
            NuisanceModels n;
            n.propensity.coef = json_vec(jn.at("propensity").at("coef"));
            n.propensity.sigma2 = jn.at("propensity").at("sigma2");
            n.propensity.log_dose = jn.at("propensity").at("log_dose");
            n.dose_prob.theta0 = jn.at("dose_prob").at("theta0");
            n.dose_prob.theta_a = jn.at("dose_prob").at("theta_a");
            n.dose_prob.theta_a2 = jn.at("dose_prob").at("theta_a2");
            n.dose_prob.theta_x = json_vec(jn.at("dose_prob").at("theta_x"));
            n.e_floor = jn.at("e_floor");
            n.fitted_rows = jn.at("fitted_rows").get<std::vector<std::size_t>>();
            est.nuisance.push_back(std::move(n));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::SchemaError, std::string("model file field error: ") + e.what());
    }
    return m;
}

void save_model_file(const ModelFile& m, const std::string& path) {
    auto out = open_out(path);
    save_model(m, out);
    if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path + "'");
}

ModelFile load_model_file(const std::string& path) {
    auto in = open_in(path);
    return load_model(in);
}

}  // namespace pdi
