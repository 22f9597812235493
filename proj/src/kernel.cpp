#include "pdi/kernel.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

namespace pdi {

namespace {

void check_gamma(double gamma) {
    if (!(gamma > 0)) throw Error(ErrorCode::InvalidArgument, "kernel bandwidth must be positive");
}

}  // namespace

double gaussian_kernel(const Eigen::Ref<const Eigen::VectorXd>& x,
                       const Eigen::Ref<const Eigen::VectorXd>& x2, double gamma) {
    check_gamma(gamma);
    if (x.size() != x2.size()) throw Error(ErrorCode::DimensionMismatch, "kernel arguments differ in dimension");
    return std::exp(-(x - x2).squaredNorm() / (gamma * gamma));
}

Eigen::MatrixXd cross_kernel(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& X, double gamma) {
    check_gamma(gamma);
    if (Z.cols() != X.cols()) throw Error(ErrorCode::DimensionMismatch, "kernel arguments differ in dimension");
    const double inv = 1.0 / (gamma * gamma);
    Eigen::MatrixXd out(Z.rows(), X.rows());
    for (Eigen::Index j = 0; j < X.rows(); ++j)
        for (Eigen::Index i = 0; i < Z.rows(); ++i)
            out(i, j) = std::exp(-(Z.row(i) - X.row(j)).squaredNorm() * inv);
    return out;
}

GramMatrix gram(const Eigen::MatrixXd& X, double gamma) {
    check_gamma(gamma);
    if (X.rows() == 0) throw Error(ErrorCode::EmptyInput, "gram matrix of no points");
    const Eigen::Index n = X.rows();
    const double inv = 1.0 / (gamma * gamma);
    GramMatrix K{Eigen::MatrixXd(n, n), gamma};
    for (Eigen::Index j = 0; j < n; ++j) {
        K.entries(j, j) = 1.0;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            const double v = std::exp(-(X.row(i) - X.row(j)).squaredNorm() * inv);
            K.entries(i, j) = v;
            K.entries(j, i) = v;
        }
    }
    return K;
}

bool check_gram(const GramMatrix& K, double psd_tol) {
    const auto& M = K.entries;
    if (M.rows() != M.cols()) return false;
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        if (M(i, i) != 1.0) return false;
        for (Eigen::Index j = 0; j < M.cols(); ++j)
            if (M(i, j) != M(j, i) || M(i, j) < 0.0 || M(i, j) > 1.0) return false;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff() >= -psd_tol;
}

std::pair<double, double> eval_rule(const IntervalRule& rule, const Eigen::Ref<const Eigen::VectorXd>& x) {
    rule.validate();
    if (x.size() != rule.anchors.cols())
        throw Error(ErrorCode::DimensionMismatch, "covariate dimension differs from rule anchors");
    double ell = rule.beta_L0;
    double u = rule.beta_U0;
    const double inv = 1.0 / (rule.gamma * rule.gamma);
    for (Eigen::Index i = 0; i < rule.anchors.rows(); ++i) {
        const double k = std::exp(-(rule.anchors.row(i).transpose() - x).squaredNorm() * inv);
        ell += rule.beta_L(i) * k;
        u += rule.beta_U(i) * k;
    }
    if (rule.width) u = ell + *rule.width;
    return {ell, u};
}

Eigen::MatrixX2d eval_rule_batch(const IntervalRule& rule, const Eigen::MatrixXd& Z) {
    rule.validate();
    if (Z.cols() != rule.anchors.cols())
        throw Error(ErrorCode::DimensionMismatch, "covariate dimension differs from rule anchors");
    Eigen::MatrixX2d out(Z.rows(), 2);
    if (rule.anchors.rows() == 0) {
        out.col(0).setConstant(rule.beta_L0);
        out.col(1).setConstant(rule.width ? rule.beta_L0 + *rule.width : rule.beta_U0);
        return out;
    }
    const Eigen::MatrixXd Kz = cross_kernel(Z, rule.anchors, rule.gamma);
    out.col(0) = (Kz * rule.beta_L).array() + rule.beta_L0;
    out.col(1) = (Kz * rule.beta_U).array() + rule.beta_U0;
    if (rule.width) out.col(1) = out.col(0).array() + *rule.width;
    return out;
}

double rkhs_penalty(const Eigen::VectorXd& beta, const GramMatrix& K) {
    if (beta.size() != K.size()) throw Error(ErrorCode::DimensionMismatch, "coefficient length differs from gram size");
    return beta.dot(K.entries * beta);
}

}  // namespace pdi
