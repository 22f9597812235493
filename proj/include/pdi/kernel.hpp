#pragma once

#include <utility>

#include <Eigen/Dense>

#include "pdi/core.hpp"

namespace pdi {

struct GramMatrix {
    Eigen::MatrixXd entries;
    double gamma = 1.0;

    Eigen::Index size() const { return entries.rows(); }
};

double gaussian_kernel(const Eigen::Ref<const Eigen::VectorXd>& x,
                       const Eigen::Ref<const Eigen::VectorXd>& x2, double gamma);

// Rows of X are points.
GramMatrix gram(const Eigen::MatrixXd& X, double gamma);

// M x N matrix of k(Z_m, X_n).
Eigen::MatrixXd cross_kernel(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& X, double gamma);

// Symmetry, unit diagonal, range and smallest-eigenvalue check.
bool check_gram(const GramMatrix& K, double psd_tol = 1e-8);

std::pair<double, double> eval_rule(const IntervalRule& rule, const Eigen::Ref<const Eigen::VectorXd>& x);

// Evaluates the rule at every row of Z; first column ell, second u.
Eigen::MatrixX2d eval_rule_batch(const IntervalRule& rule, const Eigen::MatrixXd& Z);

double rkhs_penalty(const Eigen::VectorXd& beta, const GramMatrix& K);

}  // namespace pdi
