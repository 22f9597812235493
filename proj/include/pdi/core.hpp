#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "pdi/error.hpp"

namespace pdi {

struct Observation {
    double y = 0.0;
    double a = 0.0;
    std::vector<double> x;
    double t_lo = 0.0;
    double t_hi = 0.0;
    bool r = false;
};

// Closed range membership: y in [t_lo, t_hi].
bool in_range(double y, double t_lo, double t_hi);

class Dataset {
public:
    Dataset() = default;
    Dataset(std::vector<Observation> obs, std::size_t d) : obs_(std::move(obs)), d_(d) {}

    std::size_t size() const { return obs_.size(); }
    bool empty() const { return obs_.empty(); }
    std::size_t dim() const { return d_; }
    const Observation& operator[](std::size_t i) const { return obs_[i]; }
    const std::vector<Observation>& observations() const { return obs_; }

    // N x d matrix of covariates.
    Eigen::MatrixXd covariates() const;
    Dataset subset(const std::vector<std::size_t>& rows) const;

private:
    std::vector<Observation> obs_;
    std::size_t d_ = 0;
};

// Returns a copy with r recomputed. When check_r is set, a supplied r that
// disagrees with the range is an IndicatorMismatch instead of being overwritten.
Dataset validate_dataset(const Dataset& ds, bool check_r = true);

struct SolverControls {
    int max_dc_iter = 50;
    double dc_tol = 1e-6;
    int max_sub_iter = 2000;
    int sub_window = 20;
    double sub_improve_tol = 1e-7;
    double sub_t0 = 10.0;
    // Largest move of any fitted bound on the first subproblem step.
    double sub_first_move = 0.05;
    // Tenfold step reductions allowed when a window of steps finds no descent.
    int sub_max_shrinks = 6;
    int quad_nodes = 101;
    int split_nodes = 201;
    int c_loss_nodes = 101;
    double e_floor = 1e-3;
};

struct HyperParams {
    double gamma = 1.0;
    double lambda = 1.0;
    double epsilon = 1e-3;
    double kappa = 0.0;
    double p_init = 0.5;
    double alpha = 0.7;
    double c_loss = 1.0;
    double c_cvx = 1e4;
    // When set, c_loss and c_cvx are derived from the training data.
    bool auto_constants = true;
    SolverControls solver;

    void validate() const;
};

struct TaskSpec {
    double alpha = 0.7;
    void validate() const;
};

struct IntervalRule {
    double beta_L0 = 0.0;
    Eigen::VectorXd beta_L;
    double beta_U0 = 0.0;
    Eigen::VectorXd beta_U;
    Eigen::MatrixXd anchors;  // N x d
    double gamma = 1.0;
    std::optional<double> width;

    std::size_t size() const { return static_cast<std::size_t>(beta_L.size()); }
    void validate() const;
};

}  // namespace pdi
