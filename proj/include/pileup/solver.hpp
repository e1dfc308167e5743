#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <vector>

#include "pileup/dictionary.hpp"
#include "pileup/signal.hpp"

namespace pileup {

struct Coefficient {
    std::size_t column;
    double value;
};

/// Nonnegative, block-structured coefficient vector. Only strictly positive entries are stored,
/// sorted by flat column index.
class SparseRegressor {
  public:
    SparseRegressor() = default;
    SparseRegressor(std::size_t n_columns, std::size_t n_shapes, std::vector<Coefficient> entries);
    /// Keeps the strictly positive entries of a dense vector.
    static SparseRegressor from_dense(std::span<const double> beta, std::size_t n_shapes);

    std::size_t n_columns() const noexcept { return n_columns_; }
    std::size_t n_shapes() const noexcept { return n_shapes_; }
    const std::vector<Coefficient>& entries() const noexcept { return entries_; }
    std::size_t l0() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

    std::vector<double> dense() const;
    /// block index -> l1 norm of that block, for the blocks in J(beta).
    std::map<std::size_t, double> block_l1() const;
    /// J(beta), ascending.
    std::vector<std::size_t> block_pattern() const;
    /// Drops every block outside `keep` (ascending).
    SparseRegressor restricted_to(const std::vector<std::size_t>& keep) const;

    double r = 0.0;
    double objective = 0.0;
    double kkt_violation = 0.0;
    std::size_t sweeps = 0;

  private:
    std::size_t n_columns_ = 0;
    std::size_t n_shapes_ = 1;
    std::vector<Coefficient> entries_;
};

struct SolverOptions {
    double tol = 1e-8;
    std::size_t max_sweeps = 10'000;
};

class NonConvergenceError : public std::runtime_error {
  public:
    NonConvergenceError(const std::string& what, SparseRegressor best)
        : std::runtime_error(what), best_(std::move(best)) {}
    const SparseRegressor& best() const noexcept { return best_; }
    double violation() const noexcept { return best_.kkt_violation; }

  private:
    SparseRegressor best_;
};

class PathExhaustedError : public std::runtime_error {
  public:
    PathExhaustedError(const std::string& what, double last_r, double last_residual)
        : std::runtime_error(what), last_r_(last_r), last_residual_(last_residual) {}
    double last_r() const noexcept { return last_r_; }
    double last_residual() const noexcept { return last_residual_; }

  private:
    double last_r_;
    double last_residual_;
};

/**
 * Nonnegative LASSO on the implicit dictionary:
 *   min (1/2N) ||y - A beta||^2 + r sum(beta)  s.t. beta >= 0.
 *
 * Cyclic coordinate descent over flat columns with active-set passes between full
 * sweeps; after each active phase the active face is solved exactly and the iterate
 * moved toward that solution as far as nonnegativity allows. Returns only when
 * the KKT violation is below options.tol. `warm_start` (dense, length Np) is optional.
 */
SparseRegressor nnlasso(const Dictionary& dict, std::span<const double> y, double r,
                        const SolverOptions& options = {},
                        std::span<const double> warm_start = {});

/// max over active columns of |g_n - r| and over inactive columns of (g_n - r)_+,
/// with g = (1/N) A^T (y - A beta). Degenerate columns are ignored.
double kkt_residual(const Dictionary& dict, std::span<const double> y, double r,
                    const SparseRegressor& beta);

/// max_n (1/N) A_n^T y, clipped below at 0.
double r_max(const Dictionary& dict, std::span<const double> y);

/// (1/2N) ||y - A beta||^2 + r ||beta||_1
double lasso_objective(const Dictionary& dict, std::span<const double> y, double r,
                       const SparseRegressor& beta);

struct RSelection {
    double r = 0.0;
    SparseRegressor beta;
    double residual_norm = 0.0;
    std::size_t path_index = 0;  // k in r_max * factor^k
};

struct PathOptions {
    double path_factor = 0.9;
    std::size_t max_steps = 40;
    SolverOptions solver;
};

/// Walks r_max * factor^k, k = 1, 2, ..., with warm starts and returns the first (largest) r
/// whose fit satisfies ||y - A beta(r)||_2 <= sigma sqrt(N).
RSelection select_r(const Dictionary& dict, std::span<const double> y, double sigma,
                    const PathOptions& options = {});

} // namespace pileup
