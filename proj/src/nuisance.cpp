#include "pdi/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

namespace pdi {

namespace {

double logistic(double z) {
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

void check_dim(const Eigen::Ref<const Eigen::VectorXd>& x, Eigen::Index d) {
    if (x.size() != d) throw Error(ErrorCode::DimensionMismatch, "covariate dimension differs from model");
}

std::vector<double> uniform_grid(int nodes) {
    std::vector<double> g(static_cast<std::size_t>(nodes));
    for (int k = 0; k < nodes; ++k) g[k] = static_cast<double>(k) / (nodes - 1);
    return g;
}

std::vector<double> trapezoid_cum(const std::vector<double>& v, double h) {
    std::vector<double> c(v.size(), 0.0);
    for (std::size_t k = 1; k < v.size(); ++k) c[k] = c[k - 1] + 0.5 * h * (v[k - 1] + v[k]);
    return c;
}

void finish_split(MuSplit& s) {
    const double h = 1.0 / static_cast<double>(s.grid.size() - 1);
    s.mu_plus_cum = trapezoid_cum(s.mu_plus, h);
    s.mu_minus_cum = trapezoid_cum(s.mu_minus, h);
}

double table_value(const MuSplit& s, const std::vector<double>& cum, double right_slope, double a) {
    if (a <= 0.0) return 0.0;
    const std::size_t n = s.grid.size();
    if (a >= 1.0) return cum[n - 1] + right_slope * (a - 1.0);
    const double pos = a * static_cast<double>(n - 1);
    auto k = static_cast<std::size_t>(pos);
    if (k >= n - 1) k = n - 2;
    const double t = pos - static_cast<double>(k);
    return cum[k] + t * (cum[k + 1] - cum[k]);
}

double table_slope(const MuSplit& s, const std::vector<double>& nodal, double right_slope, double a, bool right) {
    const std::size_t n = s.grid.size();
    const double pos = a * static_cast<double>(n - 1);
    // Segment index whose slope applies; -1 is the left extension, n-1 the right one.
    long k = static_cast<long>(std::floor(pos));
    if (!right && pos == std::floor(pos)) k -= 1;
    if (k < 0) return 0.0;
    if (k >= static_cast<long>(n - 1)) return right_slope;
    return 0.5 * (nodal[static_cast<std::size_t>(k)] + nodal[static_cast<std::size_t>(k) + 1]);
}

}  // namespace

double PropensityModel::mean(const Eigen::Ref<const Eigen::VectorXd>& x) const {
    check_dim(x, coef.size() - 1);
    return coef(0) + coef.tail(coef.size() - 1).dot(x);
}

double DoseProbModel::linear_predictor(double a, const Eigen::Ref<const Eigen::VectorXd>& x) const {
    check_dim(x, theta_x.size());
    return theta0 + theta_a * a + theta_a2 * a * a + theta_x.dot(x);
}

PropensityModel fit_propensity(const Dataset& ds, bool log_dose) {
    const auto n = static_cast<Eigen::Index>(ds.size());
    const auto d = static_cast<Eigen::Index>(ds.dim());
    if (n <= d + 1) throw Error(ErrorCode::SingularDesign, "need more rows than covariates plus one");
    Eigen::MatrixXd Z(n, d + 1);
    Eigen::VectorXd t(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& o = ds[static_cast<std::size_t>(i)];
        Z(i, 0) = 1.0;
        for (Eigen::Index j = 0; j < d; ++j) Z(i, j + 1) = o.x[static_cast<std::size_t>(j)];
        if (log_dose) {
            if (!(o.a > 0)) throw Error(ErrorCode::NonpositiveDose, "log-dose model needs positive doses");
            t(i) = std::log(o.a);
        } else {
            t(i) = o.a;
        }
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
    qr.setThreshold(1e-10);
    if (qr.rank() < d + 1) throw Error(ErrorCode::SingularDesign, "covariate design is rank deficient");
    PropensityModel m;
    m.coef = qr.solve(t);
    m.sigma2 = (t - Z * m.coef).squaredNorm() / static_cast<double>(n);
    m.log_dose = log_dose;
    if (m.sigma2 < 1e-12) throw Error(ErrorCode::DegenerateVariance, "residual variance is numerically zero");
    return m;
}

double propensity_density(const PropensityModel& m, double a, const Eigen::Ref<const Eigen::VectorXd>& x) {
    const double mu = m.mean(x);
    const double sd = std::sqrt(m.sigma2);
    const double norm = 1.0 / (std::sqrt(2.0 * std::numbers::pi) * sd);
    if (m.log_dose) {
        if (!(a > 0)) throw Error(ErrorCode::NonpositiveDose, "log-dose density at a non-positive dose");
        const double z = (std::log(a) - mu) / sd;
        return norm * std::exp(-0.5 * z * z) / a;
    }
    const double z = (a - mu) / sd;
    return norm * std::exp(-0.5 * z * z);
}

DoseProbModel fit_dose_probability(const Dataset& ds, LogisticFitInfo* info, bool throw_on_separation) {
    const auto n = static_cast<Eigen::Index>(ds.size());
    const auto d = static_cast<Eigen::Index>(ds.dim());
    if (n <= d + 3) throw Error(ErrorCode::SingularDesign, "need more rows than covariates plus three");
    const auto p = d + 3;
    Eigen::MatrixXd Z(n, p);
    Eigen::VectorXd r(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& o = ds[static_cast<std::size_t>(i)];
        Z(i, 0) = 1.0;
        Z(i, 1) = o.a;
        Z(i, 2) = o.a * o.a;
        for (Eigen::Index j = 0; j < d; ++j) Z(i, j + 3) = o.x[static_cast<std::size_t>(j)];
        r(i) = o.r ? 1.0 : 0.0;
    }
    const double pos = r.sum();
    if (pos == 0.0 || pos == static_cast<double>(n))
        throw Error(ErrorCode::SingleClass, "range indicator takes a single value");

    auto run = [&](double ridge, LogisticFitInfo& fi) {
        Eigen::VectorXd theta = Eigen::VectorXd::Zero(p);
        auto loglik = [&](const Eigen::VectorXd& th) {
            const Eigen::VectorXd eta = Z * th;
            double ll = 0.0;
            for (Eigen::Index i = 0; i < n; ++i) ll += r(i) * eta(i) - softplus(eta(i));
            return ll / static_cast<double>(n) - ridge * th.squaredNorm();
        };
        double ll = loglik(theta);
        fi.loglik_trace.assign(1, ll);
        for (int it = 0; it < 100; ++it) {
            const Eigen::VectorXd eta = Z * theta;
            Eigen::VectorXd prob(n), wts(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                prob(i) = logistic(eta(i));
                wts(i) = prob(i) * (1.0 - prob(i));
            }
            const Eigen::VectorXd grad =
                Z.transpose() * (r - prob) / static_cast<double>(n) - 2.0 * ridge * theta;
            fi.iterations = it;
            if (grad.lpNorm<Eigen::Infinity>() < 1e-8) {
                fi.converged = true;
                break;
            }
            Eigen::MatrixXd H = Z.transpose() * wts.asDiagonal() * Z / static_cast<double>(n);
            H.diagonal().array() += 2.0 * ridge;
            Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
            Eigen::VectorXd step = ldlt.solve(grad);
            if (ldlt.info() != Eigen::Success || !step.allFinite())
                step = grad;
            double t = 1.0;
            bool moved = false;
            for (int half = 0; half < 40; ++half, t *= 0.5) {
                const Eigen::VectorXd cand = theta + t * step;
                const double cll = loglik(cand);
                if (cll >= ll) {
                    theta = cand;
                    ll = cll;
                    moved = true;
                    break;
                }
            }
            fi.loglik_trace.push_back(ll);
            fi.iterations = it + 1;
            if (!moved) break;
            if (theta.norm() > 1e3) break;
        }
        return theta;
    };

    LogisticFitInfo fi;
    Eigen::VectorXd theta = run(0.0, fi);
    if (theta.norm() > 1e3) {
        if (throw_on_separation) throw Error(ErrorCode::Separation, "logistic coefficients diverge");
        LogisticFitInfo ridge_fi;
        theta = run(1e-6, ridge_fi);
        ridge_fi.separation = true;
        fi = ridge_fi;
    }
    if (info) *info = fi;
    DoseProbModel m;
    m.theta0 = theta(0);
    m.theta_a = theta(1);
    m.theta_a2 = theta(2);
    m.theta_x = theta.tail(d);
    return m;
}

double mu_eval(const DoseProbModel& m, double a, const Eigen::Ref<const Eigen::VectorXd>& x) {
    return logistic(m.linear_predictor(a, x));
}

double integral_alpha_minus_mu(const DoseProbModel& m, const Eigen::Ref<const Eigen::VectorXd>& x, double ell,
                               double u, double alpha, int nodes) {
    if (ell > u) throw Error(ErrorCode::InvalidInterval, "lower bound exceeds upper bound");
    if (nodes < 3 || nodes % 2 == 0) throw Error(ErrorCode::InvalidArgument, "Simpson needs an odd node count >= 3");
    check_dim(x, m.theta_x.size());
    if (ell == u) return 0.0;
    const double base = m.theta0 + m.theta_x.dot(x);
    const double h = (u - ell) / (nodes - 1);
    double s = 0.0;
    for (int k = 0; k < nodes; ++k) {
        const double a = ell + h * k;
        const double f = alpha - logistic(base + m.theta_a * a + m.theta_a2 * a * a);
        const double w = (k == 0 || k == nodes - 1) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
        s += w * f;
    }
    return s * h / 3.0;
}

MuSplit mu_split(const DoseProbModel& m, const Eigen::Ref<const Eigen::VectorXd>& x, int nodes) {
    if (nodes < 3) throw Error(ErrorCode::InvalidArgument, "split grid needs at least 3 nodes");
    check_dim(x, m.theta_x.size());
    const double base = m.theta0 + m.theta_x.dot(x);
    auto mu = [&](double a) { return logistic(base + m.theta_a * a + m.theta_a2 * a * a); };
    MuSplit s;
    s.grid = uniform_grid(nodes);
    s.mu_plus.resize(s.grid.size());
    s.mu_minus.resize(s.grid.size());
    const double mu0 = mu(0.0);
    // The curve has at most one stationary point on the line.
    double a_star = 0.0;
    if (m.theta_a2 != 0.0) a_star = std::clamp(-m.theta_a / (2.0 * m.theta_a2), 0.0, 1.0);
    for (std::size_t k = 0; k < s.grid.size(); ++k) {
        const double a = s.grid[k];
        const double v = mu(a);
        if (m.theta_a2 == 0.0) {
            if (m.theta_a >= 0.0) {
                s.mu_plus[k] = v;
                s.mu_minus[k] = 0.0;
            } else {
                s.mu_plus[k] = mu0;
                s.mu_minus[k] = mu0 - v;
            }
        } else if (m.theta_a2 < 0.0) {
            s.mu_plus[k] = a <= a_star ? v : mu(a_star);
            s.mu_minus[k] = a <= a_star ? 0.0 : mu(a_star) - v;
        } else {
            s.mu_minus[k] = a <= a_star ? mu0 - v : mu0 - mu(a_star);
            s.mu_plus[k] = a <= a_star ? mu0 : mu0 + v - mu(a_star);
        }
    }
    finish_split(s);
    return s;
}

MuSplit split_from_nodes(const std::vector<double>& mu_nodes) {
    if (mu_nodes.size() < 3) throw Error(ErrorCode::InvalidArgument, "split grid needs at least 3 nodes");
    MuSplit s;
    s.grid = uniform_grid(static_cast<int>(mu_nodes.size()));
    s.mu_plus.resize(mu_nodes.size());
    s.mu_minus.resize(mu_nodes.size());
    s.mu_plus[0] = mu_nodes[0];
    s.mu_minus[0] = 0.0;
    for (std::size_t k = 1; k < mu_nodes.size(); ++k) {
        const double inc = mu_nodes[k] - mu_nodes[k - 1];
        s.mu_plus[k] = s.mu_plus[k - 1] + std::max(inc, 0.0);
        s.mu_minus[k] = s.mu_minus[k - 1] + std::max(-inc, 0.0);
    }
    finish_split(s);
    return s;
}

double MuSplit::cum_plus(double a) const { return table_value(*this, mu_plus_cum, mu_plus.back(), a); }
double MuSplit::cum_minus(double a) const { return table_value(*this, mu_minus_cum, mu_plus.back(), a); }
double MuSplit::slope_plus(double a, bool right) const {
    return table_slope(*this, mu_plus, mu_plus.back(), a, right);
}
double MuSplit::slope_minus(double a, bool right) const {
    return table_slope(*this, mu_minus, mu_plus.back(), a, right);
}

GPair g_plus_minus(const MuSplit& split, double ell, double u, double alpha) {
    return {split.cum_plus(ell) + split.cum_minus(u) + alpha * u,
            split.cum_plus(u) + split.cum_minus(ell) + alpha * ell};
}

double NuisanceModels::e_eval(double a, const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return std::max(propensity_density(propensity, a, x), e_floor);
}

bool NuisanceModels::e_floored(double a, const Eigen::Ref<const Eigen::VectorXd>& x) const {
    return propensity_density(propensity, a, x) < e_floor;
}

NuisanceModels fit_nuisances(const Dataset& ds, bool log_dose, double e_floor) {
    std::vector<std::size_t> rows(ds.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return fit_nuisances(ds, rows, log_dose, e_floor);
}

NuisanceModels fit_nuisances(const Dataset& ds, const std::vector<std::size_t>& rows, bool log_dose,
                             double e_floor) {
    const Dataset sub = ds.subset(rows);
    NuisanceModels nm;
    nm.propensity = fit_propensity(sub, log_dose);
    nm.dose_prob = fit_dose_probability(sub, &nm.logistic_info);
    nm.fitted_rows = rows;
    nm.e_floor = e_floor;
    return nm;
}

}  // namespace pdi
