#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "pileup/signal.hpp"

namespace pileup {

struct ParamRange {
    double from = 0.1;
    double to = 10.0;
    double step = 0.1;

    /// Values from, from+step, ... up to `to` (inclusive within 1e-9 relative slack).
    std::vector<double> values() const;
};

/// The p (theta1, theta2) pairs of the dictionary and the common support length tau.
struct ShapeGrid {
    std::vector<ShapeParams> pairs;
    std::size_t tau = 1;

    /// Cartesian product theta1 x theta2, theta1 major.
    static ShapeGrid cartesian(const std::vector<double>& theta1, const std::vector<double>& theta2,
                               std::size_t tau);
    static ShapeGrid uniform(const ParamRange& theta1, const ParamRange& theta2, std::size_t tau);
};

/// Samples of a normalized truncated gamma shape at t = dt, 2dt, ..., tau*dt and its
/// normalizing constant c, chosen so that (1/N) sum_i Gamma(t_i)^2 = 1 over the grid.
struct GammaShape {
    std::vector<double> samples;
    double normalizer = 0.0;
};

GammaShape gamma_shape(double theta1, double theta2, std::size_t tau, const SamplingGrid& grid);

/// Value of c * u^theta1 * exp(-theta2 u) on 0 < u <= tau, zero elsewhere. u in samples.
double gamma_pulse(const ShapeParams& params, double normalizer, std::size_t tau, double u);

/// Offset-indexed maxima of block cross-correlations at an interior block.
struct CorrelationProfile {
    std::size_t tau = 0;
    std::vector<double> max_corr;  // index d + tau for d in [-tau, tau]
    double g_mass = 0.0;           // sum over offsets of the signed per-block maximum
    double g_min = 0.0;            // min_{i,j} G(i,j) of the single-block Gram

    double at(long d) const noexcept;
};

/**
 * Gamma-shape dictionary A = [A_0 ... A_{N-1}] on a sampling grid.
 *
 * Only the p normalized shape vectors are stored. Column n = k * p + s is shape s
 * shifted so its first nonzero sample sits at row k + 1, truncated at row N - 1.
 * Blocks with k > N - 1 - tau are boundary blocks (truncated columns); block N - 1
 * is entirely zero.
 *
 * Interior Gram blocks depend only on the offset l - k and are cached per offset
 * when p^2 (2 tau + 1) stays under kGramCacheLimit entries.
 */
class Dictionary {
  public:
    static constexpr std::size_t kGramCacheLimit = 4'000'000;

    Dictionary(ShapeGrid shapes, SamplingGrid grid);

    const SamplingGrid& grid() const noexcept { return grid_; }
    const ShapeGrid& shape_grid() const noexcept { return shapes_; }
    std::size_t n_samples() const noexcept { return grid_.n_samples; }
    std::size_t n_shapes() const noexcept { return shapes_.pairs.size(); }
    std::size_t tau() const noexcept { return shapes_.tau; }
    std::size_t n_columns() const noexcept { return n_samples() * n_shapes(); }

    std::span<const double> shape(std::size_t s) const noexcept
    {
        return {bank_.data() + s * tau(), tau()};
    }
    double normalizer(std::size_t s) const noexcept { return normalizers_[s]; }
    const ShapeParams& params(std::size_t s) const noexcept { return shapes_.pairs[s]; }

    std::size_t block_of(std::size_t column) const noexcept { return column / n_shapes(); }
    std::size_t shape_of(std::size_t column) const noexcept { return column % n_shapes(); }
    std::size_t column(std::size_t block, std::size_t s) const noexcept
    {
        return block * n_shapes() + s;
    }

    /// Number of in-grid samples of a column of block k: min(tau, N - 1 - k).
    std::size_t support_length(std::size_t block) const noexcept;
    bool is_boundary_block(std::size_t block) const noexcept;
    bool is_degenerate_block(std::size_t block) const noexcept
    {
        return support_length(block) == 0;
    }
    std::size_t last_interior_block() const noexcept { return n_samples() - 1 - tau(); }

    /// (1/N) ||A_n||^2, i.e. the diagonal Gram entry of column n.
    double column_energy(std::size_t column) const noexcept;

    /// A_n^T u (no 1/N factor).
    double column_dot(std::size_t column, std::span<const double> u) const noexcept;
    /// out += scale * A_n
    void add_column(std::size_t column, double scale, std::span<double> out) const noexcept;

    /// A beta for a dense coefficient vector of length N p.
    std::vector<double> apply(std::span<const double> beta) const;
    /// (1/N) A^T u for every column.
    std::vector<double> correlate(std::span<const double> u) const;

    /// Dense N x p time block A_k.
    Eigen::MatrixXd time_block(std::size_t block) const;
    /// G_{{k},{l}} = (1/N) A_k^T A_l.
    Eigen::MatrixXd gram_block(std::size_t k, std::size_t l) const;
    /// (1/N) A_a^T A_b for two columns.
    double gram_entry(std::size_t column_a, std::size_t column_b) const;
    /// Interior Gram block at offset d = l - k (zero for |d| >= tau).
    Eigen::MatrixXd offset_gram(long d) const;

  private:
    Eigen::MatrixXd compute_offset_gram(long d) const;

    ShapeGrid shapes_;
    SamplingGrid grid_;
    std::vector<double> bank_;  // p x tau, shape-major
    std::vector<double> normalizers_;
    std::vector<double> tail_energy_;  // per shape, prefix sums of squared samples
    std::vector<Eigen::MatrixXd> gram_cache_;  // index d + tau, empty if disabled
};

/// Correlation maxima m_d over offsets, the correlation mass and min Gram entry,
/// evaluated with the interior (untruncated) block geometry.
CorrelationProfile correlation_profile(const Dictionary& dict);

/// Largest |d| <= tau with m_d >= rho, 0 when none qualifies.
std::size_t rho_radius(const CorrelationProfile& profile, double rho);

} // namespace pileup
