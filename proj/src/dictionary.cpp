#include "pileup/dictionary.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pileup/errors.hpp"

namespace pileup {

std::vector<double> ParamRange::values() const
{
    if (!(step > 0.0) || !(to >= from))
        throw ParameterError("parameter range needs step > 0 and to >= from");
    std::vector<double> out;
    const double slack = 1e-9 * std::max(1.0, std::abs(to));
    for (std::size_t i = 0;; ++i) {
        // multiply rather than accumulate so 0.1-steps do not drift
        const double v = from + static_cast<double>(i) * step;
        if (v > to + slack) break;
        out.push_back(v);
    }
    return out;
}

ShapeGrid ShapeGrid::cartesian(const std::vector<double>& theta1,
                               const std::vector<double>& theta2, std::size_t tau)
{
    ShapeGrid g;
    g.tau = tau;
    g.pairs.reserve(theta1.size() * theta2.size());
    for (double a : theta1)
        for (double b : theta2) g.pairs.push_back({a, b});
    return g;
}

ShapeGrid ShapeGrid::uniform(const ParamRange& theta1, const ParamRange& theta2, std::size_t tau)
{
    return cartesian(theta1.values(), theta2.values(), tau);
}

namespace {

double log_gamma_kernel(const ShapeParams& p, double u)
{
    return p.theta1 * std::log(u) - p.theta2 * u;
}

void check_shape_args(double theta1, double theta2, std::size_t tau, const SamplingGrid& grid)
{
    if (!(theta1 > 0.0) || !(theta2 > 0.0) || !std::isfinite(theta1) || !std::isfinite(theta2))
        throw ParameterError("gamma shape parameters must be positive");
    if (tau < 1 || tau >= grid.n_samples)
        throw ParameterError("support length tau must satisfy 1 <= tau < N");
}

} // namespace

GammaShape gamma_shape(double theta1, double theta2, std::size_t tau, const SamplingGrid& grid)
{
    check_shape_args(theta1, theta2, tau, grid);
    const ShapeParams p{theta1, theta2};

    // Work relative to the largest log-sample so extreme parameters neither
    // overflow nor lose the whole shape to underflow prematurely.
    std::vector<double> logs(tau);
    double peak = -INFINITY;
    for (std::size_t u = 1; u <= tau; ++u) {
        logs[u - 1] = log_gamma_kernel(p, static_cast<double>(u));
        peak = std::max(peak, logs[u - 1]);
    }
    GammaShape out;
    out.samples.resize(tau);
    double energy = 0.0;
    for (std::size_t i = 0; i < tau; ++i) {
        out.samples[i] = std::exp(logs[i] - peak);
        energy += out.samples[i] * out.samples[i];
    }
    if (!(energy > 0.0) || !std::isfinite(energy) || !std::isfinite(peak))
        throw DegenerateShapeError("gamma shape (" + std::to_string(theta1) + ", " +
                                   std::to_string(theta2) + ") has no representable samples");

    const double scale = std::sqrt(static_cast<double>(grid.n_samples) / energy);
    for (double& v : out.samples) v *= scale;
    out.normalizer = scale * std::exp(-peak);
    if (!std::isfinite(out.normalizer) || out.normalizer == 0.0)
        throw DegenerateShapeError("gamma shape normalizer is not representable");
    return out;
}

double gamma_pulse(const ShapeParams& params, double normalizer, std::size_t tau, double u)
{
    if (!(u > 0.0) || u > static_cast<double>(tau)) return 0.0;
    return normalizer * std::exp(log_gamma_kernel(params, u));
}

double CorrelationProfile::at(long d) const noexcept
{
    const long t = static_cast<long>(tau);
    if (d < -t || d > t) return 0.0;
    return max_corr[static_cast<std::size_t>(d + t)];
}

Dictionary::Dictionary(ShapeGrid shapes, SamplingGrid grid)
    : shapes_(std::move(shapes)), grid_(grid)
{
    if (shapes_.pairs.empty()) throw ParameterError("shape grid is empty");
    const std::size_t tau = shapes_.tau;
    const std::size_t p = shapes_.pairs.size();
    bank_.resize(p * tau);
    normalizers_.resize(p);
    tail_energy_.resize(p * (tau + 1));
    for (std::size_t s = 0; s < p; ++s) {
        const auto g = gamma_shape(shapes_.pairs[s].theta1, shapes_.pairs[s].theta2, tau, grid_);
        std::copy(g.samples.begin(), g.samples.end(), bank_.begin() + s * tau);
        normalizers_[s] = g.normalizer;
        double acc = 0.0;
        tail_energy_[s * (tau + 1)] = 0.0;
        for (std::size_t u = 0; u < tau; ++u) {
            acc += g.samples[u] * g.samples[u];
            tail_energy_[s * (tau + 1) + u + 1] = acc;
        }
    }

    if (p * p * (2 * tau + 1) <= kGramCacheLimit) {
        gram_cache_.reserve(2 * tau + 1);
        for (long d = -static_cast<long>(tau); d <= static_cast<long>(tau); ++d)
            gram_cache_.push_back(compute_offset_gram(d));
    }
}

std::size_t Dictionary::support_length(std::size_t block) const noexcept
{
    const std::size_t room = n_samples() - 1 - std::min(block, n_samples() - 1);
    return std::min(tau(), room);
}

bool Dictionary::is_boundary_block(std::size_t block) const noexcept
{
    return block > last_interior_block();
}

double Dictionary::column_energy(std::size_t column) const noexcept
{
    const std::size_t len = support_length(block_of(column));
    return tail_energy_[shape_of(column) * (tau() + 1) + len] /
           static_cast<double>(n_samples());
}

double Dictionary::column_dot(std::size_t column, std::span<const double> u) const noexcept
{
    const std::size_t k = block_of(column);
    const std::size_t len = support_length(k);
    const double* sh = bank_.data() + shape_of(column) * tau();
    const double* x = u.data() + k + 1;
    double acc = 0.0;
    for (std::size_t i = 0; i < len; ++i) acc += sh[i] * x[i];
    return acc;
}

void Dictionary::add_column(std::size_t column, double scale, std::span<double> out) const noexcept
{
    const std::size_t k = block_of(column);
    const std::size_t len = support_length(k);
    const double* sh = bank_.data() + shape_of(column) * tau();
    double* x = out.data() + k + 1;
    for (std::size_t i = 0; i < len; ++i) x[i] += scale * sh[i];
}

std::vector<double> Dictionary::apply(std::span<const double> beta) const
{
    if (beta.size() != n_columns()) throw ParameterError("coefficient vector has wrong length");
    std::vector<double> out(n_samples(), 0.0);
    for (std::size_t n = 0; n < beta.size(); ++n)
        if (beta[n] != 0.0) add_column(n, beta[n], out);
    return out;
}

std::vector<double> Dictionary::correlate(std::span<const double> u) const
{
    if (u.size() != n_samples()) throw ParameterError("vector length does not match the grid");
    std::vector<double> out(n_columns());
    const double inv_n = 1.0 / static_cast<double>(n_samples());
    for (std::size_t n = 0; n < out.size(); ++n) out[n] = column_dot(n, u) * inv_n;
    return out;
}

Eigen::MatrixXd Dictionary::time_block(std::size_t block) const
{
    if (block >= n_samples()) throw ParameterError("block index outside the grid");
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_samples()),
                                              static_cast<Eigen::Index>(n_shapes()));
    const std::size_t len = support_length(block);
    for (std::size_t s = 0; s < n_shapes(); ++s)
        for (std::size_t i = 0; i < len; ++i)
            a(static_cast<Eigen::Index>(block + 1 + i), static_cast<Eigen::Index>(s)) =
                bank_[s * tau() + i];
    return a;
}

Eigen::MatrixXd Dictionary::compute_offset_gram(long d) const
{
    const std::size_t p = n_shapes();
    const long t = static_cast<long>(tau());
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p),
                                              static_cast<Eigen::Index>(p));
    if (d >= t || d <= -t) return g;
    const double inv_n = 1.0 / static_cast<double>(n_samples());
    // row k+u of column i (u in 1..tau) meets row k+d+v of column j with v = u - d
    const long u_lo = std::max(1L, 1 + d);
    const long u_hi = std::min(t, t + d);
    for (std::size_t i = 0; i < p; ++i) {
        const double* a = bank_.data() + i * tau();
        for (std::size_t j = 0; j < p; ++j) {
            const double* b = bank_.data() + j * tau();
            double acc = 0.0;
            for (long u = u_lo; u <= u_hi; ++u) acc += a[u - 1] * b[u - d - 1];
            g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = acc * inv_n;
        }
    }
    return g;
}

Eigen::MatrixXd Dictionary::offset_gram(long d) const
{
    const long t = static_cast<long>(tau());
    if (!gram_cache_.empty() && d >= -t && d <= t)
        return gram_cache_[static_cast<std::size_t>(d + t)];
    return compute_offset_gram(d);
}

double Dictionary::gram_entry(std::size_t column_a, std::size_t column_b) const
{
    const std::size_t k = block_of(column_a);
    const std::size_t l = block_of(column_b);
    const long d = static_cast<long>(l) - static_cast<long>(k);
    const long t = static_cast<long>(tau());
    if (d >= t || d <= -t) return 0.0;
    if (!is_boundary_block(k) && !is_boundary_block(l) && !gram_cache_.empty())
        return gram_cache_[static_cast<std::size_t>(d + t)](
            static_cast<Eigen::Index>(shape_of(column_a)),
            static_cast<Eigen::Index>(shape_of(column_b)));

    // direct overlap of the two (possibly truncated) supports
    const std::size_t first = std::max(k, l) + 1;
    const std::size_t last_a = k + support_length(k);
    const std::size_t last_b = l + support_length(l);
    const std::size_t last = std::min(last_a, last_b);
    const double* a = bank_.data() + shape_of(column_a) * tau();
    const double* b = bank_.data() + shape_of(column_b) * tau();
    double acc = 0.0;
    for (std::size_t row = first; row <= last; ++row) acc += a[row - k - 1] * b[row - l - 1];
    return acc / static_cast<double>(n_samples());
}

Eigen::MatrixXd Dictionary::gram_block(std::size_t k, std::size_t l) const
{
    if (k >= n_samples() || l >= n_samples()) throw ParameterError("block index outside the grid");
    const long d = static_cast<long>(l) - static_cast<long>(k);
    if (!is_boundary_block(k) && !is_boundary_block(l)) return offset_gram(d);
    const std::size_t p = n_shapes();
    Eigen::MatrixXd g(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    for (std::size_t i = 0; i < p; ++i)
        for (std::size_t j = 0; j < p; ++j)
            g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                gram_entry(column(k, i), column(l, j));
    return g;
}

CorrelationProfile correlation_profile(const Dictionary& dict)
{
    if (dict.n_samples() < 2 * dict.tau() + 1)
        throw ParameterError("grid too short for an interior reference block");
    CorrelationProfile prof;
    prof.tau = dict.tau();
    const long t = static_cast<long>(dict.tau());
    prof.max_corr.assign(2 * dict.tau() + 1, 0.0);
    for (long d = -t; d <= t; ++d) {
        const Eigen::MatrixXd g = dict.offset_gram(d);
        prof.max_corr[static_cast<std::size_t>(d + t)] = g.cwiseAbs().maxCoeff();
        prof.g_mass += g.maxCoeff();
        if (d == 0) prof.g_min = g.minCoeff();
    }
    return prof;
}

std::size_t rho_radius(const CorrelationProfile& profile, double rho)
{
    if (!(rho >= 0.0 && rho <= 1.0)) throw ParameterError("correlation level must lie in [0, 1]");
    const long t = static_cast<long>(profile.tau);
    for (long d = t; d >= 0; --d)
        if (profile.at(d) >= rho || profile.at(-d) >= rho) return static_cast<std::size_t>(d);
    return 0;
}

} // namespace pileup
