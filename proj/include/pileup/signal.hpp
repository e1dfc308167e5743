#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

namespace pileup {

class Dictionary;

/// Uniform sampling grid t_i = i * dt, 0 <= i < n_samples. n_samples is even.
struct SamplingGrid {
    std::size_t n_samples = 0;
    double dt = 1.0;

    SamplingGrid() = default;
    SamplingGrid(std::size_t n, double dt);

    double time(std::size_t i) const noexcept { return static_cast<double>(i) * dt; }
    double span() const noexcept { return static_cast<double>(n_samples - 1) * dt; }
    friend bool operator==(const SamplingGrid&, const SamplingGrid&) = default;
};

/// Gamma pulse parameters: t^theta1 * exp(-theta2 * t), t in sample units.
struct ShapeParams {
    double theta1 = 1.0;
    double theta2 = 1.0;
    friend bool operator==(const ShapeParams&, const ShapeParams&) = default;
};

/// Pulse drawn from the dictionary's shape bank (index into the bank).
struct DictionaryShape {
    std::size_t shape_index = 0;
    friend bool operator==(const DictionaryShape&, const DictionaryShape&) = default;
};

using EventShape = std::variant<DictionaryShape, ShapeParams>;

struct EnergyBounds {
    double e_min = 0.0;
    double e_max = 0.0;
};

/// Default bounds for a Gaussian energy law: [max(1e-3, mean - 6 std), mean + 6 std].
EnergyBounds default_energy_bounds(double mean, double std);

struct GroundTruth {
    std::vector<double> arrivals;  // seconds, strictly increasing
    std::vector<double> energies;
    std::vector<EventShape> shapes;
    double lambda_true = 0.0;

    std::size_t size() const noexcept { return arrivals.size(); }
    /// Throws ParameterError when the invariants (ordering, lengths, energy window) fail.
    void validate(std::optional<EnergyBounds> bounds = std::nullopt) const;
};

struct SampledSignal {
    std::vector<double> samples;
    SamplingGrid grid;
    double noise_sigma = 0.0;
    bool padded = false;  // a trailing zero was appended to make N even

    std::size_t size() const noexcept { return samples.size(); }
};

struct TimeLimit {
    double horizon;  // seconds
};
struct EventCount {
    std::size_t count;
};
using Horizon = std::variant<TimeLimit, EventCount>;

/// Arrival times of a homogeneous Poisson process (cumulative Exponential(lambda) gaps).
/// Only `arrivals` and `lambda_true` are filled.
GroundTruth sample_poisson_process(double lambda, Horizon horizon, std::uint64_t seed);

/// Gaussian(mean, std^2) draws restricted to [max(0, e_min), e_max] by rejection.
std::vector<double> sample_energies(std::size_t count, double mean, double std,
                                    std::optional<EnergyBounds> bounds, std::uint64_t seed);

/// y_i = sum_n E_n Phi_n(t_i - T_n) + eps_i with eps_i ~ N(0, sigma^2).
/// Pulses share the dictionary's support (0, tau*dt] and normalization rule.
SampledSignal synthesize_signal(const GroundTruth& truth, const Dictionary& dict, double sigma,
                                std::uint64_t seed);

/// Nearest sample index of every arrival, duplicates collapsed, ascending.
/// Ties at .5 round up.
std::vector<std::size_t> optimal_index_set(const GroundTruth& truth, const SamplingGrid& grid);

} // namespace pileup
