#include "pdi/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pdi {

LossParams loss_params(const HyperParams& h) { return {h.alpha, h.epsilon, h.c_loss, h.c_cvx}; }

Coefficients init_internal_division(const std::vector<std::pair<double, double>>& indirect_bounds, double p,
                                    const GramMatrix& K) {
    const auto n = static_cast<Eigen::Index>(indirect_bounds.size());
    if (n == 0 || K.size() != n) throw Error(ErrorCode::DimensionMismatch, "bounds and gram matrix disagree in size");
    if (!(p >= 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "internal division ratio outside [0,1]");
    Eigen::VectorXd lo(n), hi(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        lo(i) = indirect_bounds[static_cast<std::size_t>(i)].first;
        hi(i) = indirect_bounds[static_cast<std::size_t>(i)].second;
    }
    if (!lo.allFinite() || !hi.allFinite()) throw Error(ErrorCode::InvalidArgument, "indirect bounds must be finite");
    // Targets p*bound + (1-p)*mean have the same mean, so the expansion fits p*(bound - mean).
    Coefficients c;
    c.bL0 = lo.mean();
    c.bU0 = hi.mean();
    Eigen::VectorXd rl = p * (lo.array() - c.bL0);
    Eigen::VectorXd ru = p * (hi.array() - c.bU0);
    if (lo.maxCoeff() == lo.minCoeff()) rl.setZero();
    if (hi.maxCoeff() == hi.minCoeff()) ru.setZero();
    if (rl.cwiseAbs().maxCoeff() == 0.0 && ru.cwiseAbs().maxCoeff() == 0.0) {
        c.bL = Eigen::VectorXd::Zero(n);
        c.bU = Eigen::VectorXd::Zero(n);
        return c;
    }
    Eigen::MatrixXd A = K.entries;
    A.diagonal().array() += 1e-8;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success) throw Error(ErrorCode::SolveFailure, "gram matrix not positive definite");
    c.bL = llt.solve(rl);
    c.bU = llt.solve(ru);
    if (!c.bL.allFinite() || !c.bU.allFinite()) throw Error(ErrorCode::SolveFailure, "initial solve diverged");
    return c;
}

PlusOracle surrogate_plus_oracle(const std::vector<ObsTerm>& terms, const LossParams& p) {
    return [&terms, p](std::size_t i, double ell, double u) {
        const PartsEval pe = sur_parts_term(terms[i], ell, u, p);
        return PlusEval{pe.plus, pe.plus_dl, pe.plus_du};
    };
}

namespace {

struct SubState {
    Coefficients c;
    double width = 0.0;
    Eigen::VectorXd fl, fu;
};

void refresh(SubState& s, const GramMatrix& K, bool shared) {
    s.fl.noalias() = K.entries * s.c.bL;
    s.fl.array() += s.c.bL0;
    if (shared) {
        s.fu = s.fl.array() + s.width;
    } else {
        s.fu.noalias() = K.entries * s.c.bU;
        s.fu.array() += s.c.bU0;
    }
}

}  // namespace

SubproblemResult convex_subproblem(const PlusOracle& plus, const GramMatrix& K, const Eigen::VectorXd& rl,
                                   const Eigen::VectorXd& ru, double lambda, double kappa,
                                   const Coefficients& start, const SolverControls& ctl, bool shared_coef,
                                   double width, double* width_out) {
    const Eigen::Index n = K.size();
    if (rl.size() != n || ru.size() != n || start.bL.size() != n || (!shared_coef && start.bU.size() != n))
        throw Error(ErrorCode::DimensionMismatch, "linearization, coefficients and gram matrix disagree in size");
    const double inv_n = 1.0 / static_cast<double>(n);
    Eigen::VectorXd gl(n), gu(n);

    // Objective value; fills gl, gu with (s - r)/N when want_grad.
    auto evaluate = [&](const SubState& s, bool want_grad) {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const PlusEval pe = plus(static_cast<std::size_t>(i), s.fl(i), s.fu(i));
            sum += pe.value - rl(i) * s.fl(i) - ru(i) * s.fu(i);
            if (want_grad) {
                gl(i) = (pe.dl - rl(i)) * inv_n;
                gu(i) = (pe.du - ru(i)) * inv_n;
            }
        }
        double val = sum * inv_n + lambda * s.c.bL.dot((s.fl.array() - s.c.bL0).matrix());
        if (!shared_coef) {
            val += lambda * s.c.bU.dot((s.fu.array() - s.c.bU0).matrix());
            val += kappa * (s.c.bL - s.c.bU).cwiseMax(0.0).sum();
        }
        return val;
    };

    SubState cur;
    cur.c = start;
    if (shared_coef) {
        cur.c.bU = cur.c.bL;
        cur.width = std::max(width, 0.0);
    }
    refresh(cur, K, shared_coef);
    double val = evaluate(cur, true);

    SubproblemResult res;
    res.value_start = val;
    SubState best = cur;
    double best_val = val;
    std::vector<double> best_hist{best_val};

    // Largest row sum of K bounds its top eigenvalue; the pair penalty is
    // stepped in that multiple of the identity so its moves stay on the
    // scale of the loss steps.
    const double k_bound = shared_coef ? 1.0 : K.entries.rowwise().sum().maxCoeff();

    double scale = 0.0;
    int total = 0;
    int t = 0;  // steps since the last restart
    int shrinks = 0;
    bool stage_improved = false;
    while (total < ctl.max_sub_iter) {
        const double sl = gl.sum();
        const double su = gu.sum();
        if (total == 0) {
            double mag;
            if (shared_coef)
                mag = std::abs(sl + su) + (gl + gu).cwiseAbs().maxCoeff() + std::abs(su);
            else
                mag = std::max(std::abs(sl) + gl.cwiseAbs().maxCoeff(), std::abs(su) + gu.cwiseAbs().maxCoeff());
            if (!(mag > 0.0) || !std::isfinite(mag)) break;
            scale = ctl.sub_first_move * ctl.sub_t0 / mag;
        }
        const double eta = scale / (static_cast<double>(t) + ctl.sub_t0);
        const double shrink = 1.0 / (1.0 + 2.0 * eta * lambda);
        if (shared_coef) {
            cur.c.bL0 -= eta * (sl + su);
            cur.c.bL = (cur.c.bL - eta * (gl + gu)) * shrink;
            cur.c.bU = cur.c.bL;
            cur.width = std::max(0.0, cur.width - eta * su);
        } else {
            cur.c.bL0 -= eta * sl;
            cur.c.bU0 -= eta * su;
            cur.c.bL = (cur.c.bL - eta * gl) * shrink;
            cur.c.bU = (cur.c.bU - eta * gu) * shrink;
            if (kappa > 0.0) {
                const double th = eta * kappa / k_bound;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double gap = cur.c.bL(i) - cur.c.bU(i);
                    if (gap > 2.0 * th) {
                        cur.c.bL(i) -= th;
                        cur.c.bU(i) += th;
                    } else if (gap > 0.0) {
                        const double mid = 0.5 * (cur.c.bL(i) + cur.c.bU(i));
                        cur.c.bL(i) = mid;
                        cur.c.bU(i) = mid;
                    }
                }
            }
        }
        refresh(cur, K, shared_coef);
        val = evaluate(cur, true);
        ++total;
        ++t;
        if (val < best_val) {
            if (best_val - val > ctl.sub_improve_tol) stage_improved = true;
            best_val = val;
            best = cur;
        }
        best_hist.push_back(best_val);
        const auto h = best_hist.size();
        const auto win = static_cast<std::size_t>(ctl.sub_window);
        if (static_cast<std::size_t>(t) >= win && best_hist[h - 1 - win] - best_val < ctl.sub_improve_tol) {
            // A stage that never improved used steps too long for the local curvature.
            if (stage_improved || shrinks >= ctl.sub_max_shrinks) break;
            ++shrinks;
            scale *= 0.1;
            t = 0;
            cur = best;
            val = evaluate(cur, true);
        }
    }
    t = total;
    res.iterations = t;
    res.coef = best.c;
    res.value = best_val;
    res.improved = best_val < res.value_start;
    if (width_out) *width_out = best.width;
    return res;
}

namespace {

struct DcEval {
    double q;
    Eigen::VectorXd rl, ru;
};

DcEval dc_eval(const std::vector<ObsTerm>& terms, const GramMatrix& K, const Coefficients& c, double width,
               bool shared, const LossParams& p, double lambda, double kappa) {
    const Eigen::Index n = K.size();
    Eigen::VectorXd fl = (K.entries * c.bL).array() + c.bL0;
    Eigen::VectorXd fu = shared ? Eigen::VectorXd(fl.array() + width)
                                : Eigen::VectorXd((K.entries * c.bU).array() + c.bU0);
    DcEval out{0.0, Eigen::VectorXd(n), Eigen::VectorXd(n)};
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& t = terms[static_cast<std::size_t>(i)];
        sum += sur_term(t, fl(i), fu(i), p);
        const PartsEval pe = sur_parts_term(t, fl(i), fu(i), p);
        out.rl(i) = pe.minus_dl;
        out.ru(i) = pe.minus_du;
    }
    out.q = sum / static_cast<double>(n) + lambda * c.bL.dot((fl.array() - c.bL0).matrix());
    if (!shared) {
        out.q += lambda * c.bU.dot((fu.array() - c.bU0).matrix());
        out.q += kappa * (c.bL - c.bU).cwiseMax(0.0).sum();
    }
    return out;
}

std::pair<Coefficients, double> run_dc(const std::vector<ObsTerm>& terms, const GramMatrix& K,
                                       const HyperParams& hyper, Coefficients coef, double width, bool shared,
                                       DcTrace& trace) {
    hyper.validate();
    const auto n = static_cast<Eigen::Index>(terms.size());
    if (K.size() != n || coef.bL.size() != n || (!shared && coef.bU.size() != n))
        throw Error(ErrorCode::DimensionMismatch, "initial coefficients, gram matrix and data disagree in size");
    const LossParams p = loss_params(hyper);
    const auto& ctl = hyper.solver;
    const PlusOracle plus = surrogate_plus_oracle(terms, p);
    if (shared) width = std::max(width, 0.0);

    DcEval cur = dc_eval(terms, K, coef, width, shared, p, hyper.lambda, hyper.kappa);
    trace = DcTrace{};
    trace.objective.push_back(cur.q);
    for (int it = 0; it < ctl.max_dc_iter; ++it) {
        double new_width = width;
        const SubproblemResult sub = convex_subproblem(plus, K, cur.rl, cur.ru, hyper.lambda, hyper.kappa, coef, ctl,
                                                       shared, width, &new_width);
        trace.subproblem_iterations.push_back(sub.iterations);
        if (!sub.improved) {
            trace.converged = true;
            break;
        }
        DcEval next = dc_eval(terms, K, sub.coef, new_width, shared, p, hyper.lambda, hyper.kappa);
        if (next.q > cur.q + 1e-9) {
            // Rounding beat the majorization; keep the current iterate.
            ++trace.rejected_steps;
            trace.converged = true;
            break;
        }
        const double prev = cur.q;
        coef = sub.coef;
        width = new_width;
        cur = std::move(next);
        trace.objective.push_back(cur.q);
        trace.iterations = it + 1;
        if (std::abs(cur.q - prev) < ctl.dc_tol * (1.0 + std::abs(prev))) {
            trace.converged = true;
            break;
        }
    }
    return {coef, width};
}

}  // namespace

std::pair<IntervalRule, DcTrace> dc_fit(const std::vector<ObsTerm>& terms, const Eigen::MatrixXd& anchors,
                                        const GramMatrix& K, const HyperParams& hyper, const Coefficients& init) {
    DcTrace trace;
    auto [coef, w] = run_dc(terms, K, hyper, init, 0.0, false, trace);
    (void)w;
    IntervalRule rule;
    rule.beta_L0 = coef.bL0;
    rule.beta_L = coef.bL;
    rule.beta_U0 = coef.bU0;
    rule.beta_U = coef.bU;
    rule.anchors = anchors;
    rule.gamma = K.gamma;
    return {rule, trace};
}

std::pair<IntervalRule, DcTrace> dc_fit_constant_width(const std::vector<ObsTerm>& terms,
                                                       const Eigen::MatrixXd& anchors, const GramMatrix& K,
                                                       const HyperParams& hyper, double init_b0,
                                                       const Eigen::VectorXd& init_beta, double init_width) {
    Coefficients init;
    init.bL0 = init_b0;
    init.bL = init_beta;
    init.bU0 = init_b0;
    init.bU = init_beta;
    DcTrace trace;
    auto [coef, w] = run_dc(terms, K, hyper, init, init_width, true, trace);
    IntervalRule rule;
    rule.beta_L0 = coef.bL0;
    rule.beta_L = coef.bL;
    rule.beta_U0 = coef.bL0 + w;
    rule.beta_U = coef.bL;
    rule.anchors = anchors;
    rule.gamma = K.gamma;
    rule.width = w;
    return {rule, trace};
}

}  // namespace pdi
