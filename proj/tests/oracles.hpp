#pragma once

// Independent reference implementations used only by the tests.

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "pileup/dictionary.hpp"

namespace oracle {

struct OracleFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Column k*p + s of the dictionary built from the closed form in long double.
Eigen::VectorXd gamma_column(double theta1, double theta2, std::size_t tau, std::size_t n,
                             std::size_t block);

/// Full N x Np matrix, column n = k p + s.
Eigen::MatrixXd dense_dictionary(const pileup::ShapeGrid& shapes, std::size_t n);

/// (1/2N)||y - A x||^2 + r sum(x)
double objective(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, double r,
                 const Eigen::VectorXd& x);

/// max over active |g - r|, over inactive (g - r)_+, g = A^T (y - A x) / N.
double kkt(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, double r, const Eigen::VectorXd& x);

/// Projected gradient with step 1/L (L the top eigenvalue of A^T A / N), Nesterov
/// momentum with restarts, 1e6 iteration cap, then an exact solve on the detected
/// support. Throws OracleFailure when the cap is hit.
Eigen::VectorXd brute_force(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, double r);

/// True when the columns with |g_j - r| <= tol (the equicorrelation set at x) are
/// linearly independent, which makes the minimizer unique.
bool unique_minimizer(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, double r,
                      const Eigen::VectorXd& x);

/// Tries every support; returns the KKT point of least objective. At most 16 columns.
Eigen::VectorXd enumerate_supports(const Eigen::MatrixXd& a, const Eigen::VectorXd& y, double r);

/// Scan of the rho conditions on an equispaced grid of `points` values in [0, 1].
struct LevelScan {
    std::optional<double> rho;  // largest grid value satisfying the condition
    double step = 0.0;
};
LevelScan scan_rho_r(const std::vector<double>& max_corr, std::size_t tau, double window,
                     double alpha, double r, double slope, double eta, std::size_t points);
LevelScan scan_mu(const std::vector<double>& max_corr, std::size_t tau, double eta, double g_min,
                  double e_max, std::size_t points);

/// Kolmogorov-Smirnov statistic of a sample against Exponential(rate).
double ks_exponential(std::vector<double> sample, double rate);

/// Two-pass Pearson correlation.
double pearson(const std::vector<double>& x, const std::vector<double>& y);

/// Standard error of a binomial frequency.
double binomial_se(double p, std::size_t n);

} // namespace oracle
