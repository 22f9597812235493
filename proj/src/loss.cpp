#include "pdi/loss.hpp"

#include <algorithm>
#include <cmath>

namespace pdi {

namespace {

// Value and gradient with respect to (ell, u). Kinks are resolved by the
// one-sided limit along the fixed direction (1, kTilt), which yields a true
// subgradient for every convex piece and for sums of them.
constexpr double kTilt = 0.3;

struct Lin {
    double v = 0.0, dl = 0.0, du = 0.0;

    double dd() const { return dl + kTilt * du; }
};

Lin operator+(Lin a, const Lin& b) { return {a.v + b.v, a.dl + b.dl, a.du + b.du}; }
Lin operator-(Lin a, const Lin& b) { return {a.v - b.v, a.dl - b.dl, a.du - b.du}; }
Lin operator-(const Lin& a) { return {-a.v, -a.dl, -a.du}; }
Lin operator*(double s, const Lin& a) { return {s * a.v, s * a.dl, s * a.du}; }
Lin operator+(Lin a, double c) { return {a.v + c, a.dl, a.du}; }
Lin konst(double c) { return {c, 0.0, 0.0}; }

Lin mul(const Lin& a, const Lin& b) { return {a.v * b.v, a.v * b.dl + b.v * a.dl, a.v * b.du + b.v * a.du}; }

Lin lmax(const Lin& a, const Lin& b) {
    if (a.v > b.v) return a;
    if (b.v > a.v) return b;
    return b.dd() > a.dd() ? b : a;
}

Lin lmax(const Lin& a, const Lin& b, const Lin& c) { return lmax(lmax(a, b), c); }
Lin pos(const Lin& z) { return lmax(z, konst(0.0)); }
Lin labs(const Lin& z) { return lmax(z, -z); }

// Huber function: z^2/2 on |z| <= 2, linear with slope 2 beyond.
Lin huber(const Lin& z) {
    const double az = std::abs(z.v);
    if (az <= 2.0) return {0.5 * z.v * z.v, z.v * z.dl, z.v * z.du};
    const double s = z.v > 0 ? 2.0 : -2.0;
    return {2.0 * az - 2.0, s * z.dl, s * z.du};
}

Lin pos_sq(const Lin& z) {
    if (z.v <= 0.0) return {};
    return {z.v * z.v, 2.0 * z.v * z.dl, 2.0 * z.v * z.du};
}

// Cumulative table composed with z.
Lin cum_plus(const MuSplit& s, const Lin& z) {
    const double g = s.slope_plus(z.v, z.dd() >= 0.0);
    return {s.cum_plus(z.v), g * z.dl, g * z.du};
}

Lin cum_minus(const MuSplit& s, const Lin& z) {
    const double g = s.slope_minus(z.v, z.dd() >= 0.0);
    return {s.cum_minus(z.v), g * z.dl, g * z.du};
}

struct LinParts {
    Lin plus;
    Lin minus;
};

// Curvature of the Huber term; must exceed the worst negative curvature (2)
// of rho*V on its strip.
constexpr double kHuberWeight = 3.0;

LinParts parts_lin(const ObsTerm& t, double ell, double u, const LossParams& p) {
    const double ie = 1.0 / p.epsilon;
    const Lin L{ell, 1.0, 0.0};
    const Lin U{u, 0.0, 1.0};
    const Lin x{(ell - t.a) * ie, ie, 0.0};
    const Lin y{(u - t.a) * ie, 0.0, ie};
    const Lin delta{(ell - u) * ie, ie, -ie};
    const Lin one = konst(1.0);

    const Lin ax = labs(x), ay = labs(y);
    const Lin v_plus = 0.5 * (lmax(one, ax) + lmax(one, ay));
    const Lin v_minus = 0.5 * (ax + ay);
    const Lin psi_plus = lmax(x, one, -y);
    const Lin psi_minus = pos(x) + pos(-y);

    const Lin z_plus = lmax(psi_plus + v_minus, v_plus + psi_minus);
    const Lin z_minus = psi_minus + v_minus;

    const Lin rho = pos(delta) - pos(delta + (-1.0));
    const Lin tail = pos(delta + (-1.0));
    const Lin curv = kHuberWeight * (huber(x) + huber(y));
    const Lin s_plus = z_plus + curv + tail;
    const Lin s_minus = z_minus + mul(rho, v_plus - v_minus) + curv + tail;

    const MuSplit& sp = *t.split;
    const Lin m = lmax(L, U);
    const Lin j_plus = cum_plus(sp, L) + cum_minus(sp, m) + p.alpha * m;
    const Lin j_minus = cum_plus(sp, m) + cum_minus(sp, L) + p.alpha * L;

    const Lin phi_plus = lmax(delta, one);
    const Lin phi_minus = pos(delta);
    const Lin barrier = (p.c_cvx * ie) * pos_sq(L - U);

    const double wp = std::max(t.w, 0.0);
    const double wm = std::max(-t.w, 0.0);
    LinParts out;
    out.plus = wp * s_plus + wm * s_minus + j_plus + p.c_loss * phi_minus + barrier + p.c_loss;
    out.minus = wp * s_minus + wm * s_plus + j_minus + p.c_loss * phi_plus + barrier;
    return out;
}

void check_eps(double eps) {
    if (!(eps > 0)) throw Error(ErrorCode::NonpositiveEpsilon, "surrogate bandwidth must be positive");
}

}  // namespace

ObsTerm make_term(double a, bool r, double mu_a, double e_a, std::shared_ptr<const MuSplit> split) {
    ObsTerm t;
    t.a = a;
    t.r = r ? 1.0 : 0.0;
    t.mu_a = mu_a;
    t.e_a = e_a;
    t.w = (mu_a - t.r) / e_a;
    t.split = std::move(split);
    return t;
}

ObsTerm prepare_term(const Observation& o, const LossContext& ctx) {
    const Eigen::Map<const Eigen::VectorXd> x(o.x.data(), static_cast<Eigen::Index>(o.x.size()));
    const auto& nm = ctx.nuisance;
    auto split = std::make_shared<const MuSplit>(mu_split(nm.dose_prob, x, ctx.split_nodes));
    ObsTerm t = make_term(o.a, o.r, mu_eval(nm.dose_prob, o.a, x), nm.e_eval(o.a, x), std::move(split));
    t.e_floored = nm.e_floored(o.a, x);
    return t;
}

std::vector<ObsTerm> prepare_terms(const Dataset& ds, const LossContext& ctx) {
    std::vector<ObsTerm> out;
    out.reserve(ds.size());
    for (const auto& o : ds.observations()) out.push_back(prepare_term(o, ctx));
    return out;
}

double psi_eps(double ell, double t, double u, double eps) {
    check_eps(eps);
    if (ell > u) throw Error(ErrorCode::MonotonicityViolated, "psi_eps needs ell <= u");
    if (t >= ell && t <= u) return 1.0;
    if (t < ell) return std::max(0.0, (t - ell + eps) / eps);
    return std::max(0.0, (u + eps - t) / eps);
}

PartPair psi_parts(double ell, double t, double u, double eps) {
    check_eps(eps);
    const double a = (ell - t) / eps;
    const double b = (t - u) / eps;
    return {std::max({a, 1.0, b}), std::max(a, 0.0) + std::max(b, 0.0)};
}

double phi_eps(double ell, double u, double eps) {
    check_eps(eps);
    const double g = u - ell;
    if (g >= 0.0) return 1.0;
    if (g <= -eps) return 0.0;
    return (g + eps) / eps;
}

PartPair phi_parts(double ell, double u, double eps) {
    check_eps(eps);
    const double d = (ell - u) / eps;
    return {std::max(d, 1.0), std::max(d, 0.0)};
}

double interval_integral(const MuSplit& s, double ell, double u, double alpha) {
    const GPair g = g_plus_minus(s, ell, u, alpha);
    return g.g_plus - g.g_minus;
}

double l1_term(const ObsTerm& t, double ell, double u, const LossParams& p) {
    if (ell > u) return p.c_loss;
    const double ind = (t.a >= ell && t.a <= u) ? 1.0 : 0.0;
    return t.w * ind + interval_integral(*t.split, ell, u, p.alpha);
}

double sur_term(const ObsTerm& t, double ell, double u, const LossParams& p) {
    check_eps(p.epsilon);
    if (ell <= u) return t.w * psi_eps(ell, t.a, u, p.epsilon) + interval_integral(*t.split, ell, u, p.alpha);
    if (ell >= u + p.epsilon) return p.c_loss;
    const double deg_l = t.w * psi_eps(ell, t.a, ell, p.epsilon);
    const double deg_u = t.w * psi_eps(u, t.a, u, p.epsilon);
    return phi_eps(ell, u, p.epsilon) * (0.5 * (deg_l + deg_u) - p.c_loss) + p.c_loss;
}

PartsEval sur_parts_term(const ObsTerm& t, double ell, double u, const LossParams& p) {
    check_eps(p.epsilon);
    const LinParts lp = parts_lin(t, ell, u, p);
    return {lp.plus.v, lp.minus.v, lp.plus.dl, lp.plus.du, lp.minus.dl, lp.minus.du};
}

double loss_indicator(const Observation& o, double ell, double u, const LossContext& ctx) {
    if (ell > u) return ctx.params.c_loss;
    return l1_term(prepare_term(o, ctx), ell, u, ctx.params);
}

double loss_ipw(const Observation& o, double ell, double u, const LossContext& ctx) {
    if (ell > u) throw Error(ErrorCode::MonotonicityViolated, "IPW loss is defined on ell <= u only");
    const Eigen::Map<const Eigen::VectorXd> x(o.x.data(), static_cast<Eigen::Index>(o.x.size()));
    const double e = ctx.nuisance.e_eval(o.a, x);
    const double alpha = ctx.params.alpha;
    const bool inside = o.a >= ell && o.a <= u;
    const double r = o.r ? 1.0 : 0.0;
    return (alpha * (1.0 - r) * (inside ? 1.0 : 0.0) + (1.0 - alpha) * r * (inside ? 0.0 : 1.0)) / e;
}

double aipw_term(const ObsTerm& t, double ell, double u, const LossParams& p) {
    if (ell > u) throw Error(ErrorCode::MonotonicityViolated, "AIPW loss is defined on ell <= u only");
    const MuSplit& s = *t.split;
    auto mu_int = [&](double lo, double hi) {
        return (s.cum_plus(hi) - s.cum_minus(hi)) - (s.cum_plus(lo) - s.cum_minus(lo));
    };
    const double lo = std::clamp(ell, 0.0, 1.0);
    const double hi = std::clamp(u, 0.0, 1.0);
    const double in_mu = mu_int(lo, hi);
    const double all_mu = mu_int(0.0, 1.0);
    const bool inside = t.a >= ell && t.a <= u;
    const double ind = inside ? 1.0 : 0.0;
    const double alpha = p.alpha;
    const double first = (t.mu_a - t.r) * ind / t.e_a + ((hi - lo) - in_mu);
    const double second = (t.r - t.mu_a) * (1.0 - ind) / t.e_a + (all_mu - in_mu);
    return alpha * first + (1.0 - alpha) * second;
}

double loss_aipw(const Observation& o, double ell, double u, const LossContext& ctx) {
    return aipw_term(prepare_term(o, ctx), ell, u, ctx.params);
}

double loss_surrogate(const Observation& o, double ell, double u, const LossContext& ctx) {
    return sur_term(prepare_term(o, ctx), ell, u, ctx.params);
}

PartPair loss_surrogate_parts(const Observation& o, double ell, double u, const LossContext& ctx) {
    const PartsEval pe = sur_parts_term(prepare_term(o, ctx), ell, u, ctx.params);
    return {pe.plus, pe.minus};
}

double compute_c_loss(const std::vector<ObsTerm>& terms, double alpha, int nodes) {
    if (terms.empty()) throw Error(ErrorCode::EmptyInput, "no observations to scan");
    if (nodes < 2) throw Error(ErrorCode::InvalidArgument, "dose grid needs at least 2 nodes");
    std::vector<double> grid(static_cast<std::size_t>(nodes));
    for (int k = 0; k < nodes; ++k) grid[k] = static_cast<double>(k) / (nodes - 1);
    std::vector<double> c(grid.size());
    double sup = 0.0;
    for (const auto& t : terms) {
        // c(a) = integral of (alpha - mu) from 0 to a.
        for (std::size_t k = 0; k < grid.size(); ++k) c[k] = interval_integral(*t.split, 0.0, grid[k], alpha);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            for (std::size_t j = i; j < grid.size(); ++j) {
                const double ind = (t.a >= grid[i] && t.a <= grid[j]) ? 1.0 : 0.0;
                sup = std::max(sup, std::abs(t.w * ind + c[j] - c[i]));
            }
        }
    }
    return 2.0 * std::max(sup, 1e-12);
}

Objective objective_q_parts(const std::vector<ObsTerm>& terms, const GramMatrix& K, const Coefficients& c,
                            const LossParams& p, double lambda, double kappa, bool shared_coef) {
    const auto n = static_cast<Eigen::Index>(terms.size());
    if (K.size() != n || c.bL.size() != n || c.bU.size() != n)
        throw Error(ErrorCode::DimensionMismatch, "coefficients, gram matrix and data disagree in size");
    const Eigen::VectorXd fl = (K.entries * c.bL).array() + c.bL0;
    const Eigen::VectorXd fu = (K.entries * c.bU).array() + c.bU0;
    Objective out;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& t = terms[static_cast<std::size_t>(i)];
        const PartsEval pe = sur_parts_term(t, fl(i), fu(i), p);
        out.q += sur_term(t, fl(i), fu(i), p);
        out.q_plus += pe.plus;
        out.q_minus += pe.minus;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    out.q *= inv_n;
    out.q_plus *= inv_n;
    out.q_minus *= inv_n;
    double pen = lambda * rkhs_penalty(c.bL, K);
    if (!shared_coef) {
        pen += lambda * rkhs_penalty(c.bU, K);
        pen += kappa * (c.bL - c.bU).cwiseMax(0.0).sum();
    }
    out.q += pen;
    out.q_plus += pen;
    return out;
}

double objective_q(const std::vector<ObsTerm>& terms, const GramMatrix& K, const Coefficients& c,
                   const LossParams& p, double lambda, double kappa, bool shared_coef) {
    return objective_q_parts(terms, K, c, p, lambda, kappa, shared_coef).q;
}

}  // namespace pdi
