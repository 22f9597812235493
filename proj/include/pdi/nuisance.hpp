#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "pdi/core.hpp"

namespace pdi {

struct PropensityModel {
    Eigen::VectorXd coef;  // intercept followed by d slopes
    double sigma2 = 1.0;
    bool log_dose = false;

    double mean(const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

struct DoseProbModel {
    double theta0 = 0.0;
    double theta_a = 0.0;
    double theta_a2 = 0.0;
    Eigen::VectorXd theta_x;

    double linear_predictor(double a, const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

struct LogisticFitInfo {
    int iterations = 0;
    bool converged = false;
    bool separation = false;
    std::vector<double> loglik_trace;
};

// Monotone split of a dose curve on a uniform grid over [0,1].
// cum_plus/cum_minus are trapezoid integrals of the nodal parts from 0.
// Outside [0,1] the curve is treated as 0: both parts are 0 left of 0 and
// equal to mu_plus(1) right of 1.
struct MuSplit {
    std::vector<double> grid;
    std::vector<double> mu_plus;
    std::vector<double> mu_minus;
    std::vector<double> mu_plus_cum;
    std::vector<double> mu_minus_cum;

    double cum_plus(double a) const;
    double cum_minus(double a) const;
    // One-sided slopes of the cumulative tables.
    double slope_plus(double a, bool right = true) const;
    double slope_minus(double a, bool right = true) const;
};

PropensityModel fit_propensity(const Dataset& ds, bool log_dose = false);
double propensity_density(const PropensityModel& m, double a, const Eigen::Ref<const Eigen::VectorXd>& x);

DoseProbModel fit_dose_probability(const Dataset& ds, LogisticFitInfo* info = nullptr,
                                   bool throw_on_separation = false);
double mu_eval(const DoseProbModel& m, double a, const Eigen::Ref<const Eigen::VectorXd>& x);

double integral_alpha_minus_mu(const DoseProbModel& m, const Eigen::Ref<const Eigen::VectorXd>& x, double ell,
                               double u, double alpha, int nodes = 101);

MuSplit mu_split(const DoseProbModel& m, const Eigen::Ref<const Eigen::VectorXd>& x, int nodes = 201);
// Split of an arbitrary curve given by its values on a uniform grid over [0,1].
MuSplit split_from_nodes(const std::vector<double>& mu_nodes);

struct GPair {
    double g_plus;
    double g_minus;
};
GPair g_plus_minus(const MuSplit& split, double ell, double u, double alpha);

struct NuisanceModels {
    PropensityModel propensity;
    DoseProbModel dose_prob;
    LogisticFitInfo logistic_info;
    // Row indices of the dataset the models were fit on.
    std::vector<std::size_t> fitted_rows;
    double e_floor = 1e-3;

    double e_eval(double a, const Eigen::Ref<const Eigen::VectorXd>& x) const;
    bool e_floored(double a, const Eigen::Ref<const Eigen::VectorXd>& x) const;
};

NuisanceModels fit_nuisances(const Dataset& ds, bool log_dose = false, double e_floor = 1e-3);
// Fits on the listed rows only and records them in fitted_rows.
NuisanceModels fit_nuisances(const Dataset& ds, const std::vector<std::size_t>& rows, bool log_dose = false,
                             double e_floor = 1e-3);

}  // namespace pdi
