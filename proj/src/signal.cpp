#include "pileup/signal.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pileup/dictionary.hpp"
#include "pileup/errors.hpp"
#include "pileup/random.hpp"

namespace pileup {

SamplingGrid::SamplingGrid(std::size_t n, double step) : n_samples(n), dt(step)
{
    if (n < 2 || n % 2 != 0)
        throw ParameterError("sampling grid needs an even sample count >= 2, got " +
                             std::to_string(n));
    if (!(step > 0.0) || !std::isfinite(step))
        throw ParameterError("sampling period must be positive");
}

EnergyBounds default_energy_bounds(double mean, double std)
{
    return {std::max(1e-3, mean - 6.0 * std), mean + 6.0 * std};
}

void GroundTruth::validate(std::optional<EnergyBounds> bounds) const
{
    if (energies.size() != arrivals.size() || shapes.size() != arrivals.size())
        throw ParameterError("ground truth columns have different lengths");
    for (std::size_t n = 1; n < arrivals.size(); ++n)
        if (!(arrivals[n] > arrivals[n - 1]))
            throw ParameterError("arrival times must be strictly increasing");
    for (double e : energies) {
        if (!(e > 0.0)) throw ParameterError("energies must be positive");
        if (bounds && (e < bounds->e_min || e > bounds->e_max))
            throw ParameterError("energy outside the configured bounds");
    }
}

GroundTruth sample_poisson_process(double lambda, Horizon horizon, std::uint64_t seed)
{
    if (!(lambda > 0.0) || !std::isfinite(lambda))
        throw ParameterError("Poisson intensity must be positive");
    GroundTruth truth;
    truth.lambda_true = lambda;
    auto rng = make_rng(seed, Stream::arrivals);
    std::exponential_distribution<double> gap(lambda);

    if (const auto* limit = std::get_if<TimeLimit>(&horizon)) {
        if (!(limit->horizon > 0.0)) throw ParameterError("time horizon must be positive");
        double t = gap(rng);
        while (t <= limit->horizon) {
            truth.arrivals.push_back(t);
            t += gap(rng);
        }
    } else {
        const auto count = std::get<EventCount>(horizon).count;
        if (count == 0) throw ParameterError("event count must be positive");
        truth.arrivals.reserve(count);
        double t = 0.0;
        for (std::size_t n = 0; n < count; ++n) {
            t += gap(rng);
            truth.arrivals.push_back(t);
        }
    }
    return truth;
}

namespace {

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

} // namespace

std::vector<double> sample_energies(std::size_t count, double mean, double std,
                                    std::optional<EnergyBounds> bounds, std::uint64_t seed)
{
    if (!(std > 0.0)) throw ParameterError("energy standard deviation must be positive");
    const EnergyBounds b = bounds.value_or(default_energy_bounds(mean, std));
    if (!(b.e_min < b.e_max)) throw ParameterError("energy bounds need e_min < e_max");
    const double lo = std::max(0.0, b.e_min);
    const double accept = normal_cdf((b.e_max - mean) / std) - normal_cdf((lo - mean) / std);
    if (!(accept >= 1e-6))
        throw InfeasibleBoundsError("energy bounds keep less than 1e-6 of the Gaussian mass");

    auto rng = make_rng(seed, Stream::energies);
    std::normal_distribution<double> draw(mean, std);
    std::vector<double> out;
    out.reserve(count);
    while (out.size() < count) {
        const double e = draw(rng);
        if (e >= lo && e <= b.e_max && e > 0.0) out.push_back(e);
    }
    return out;
}

SampledSignal synthesize_signal(const GroundTruth& truth, const Dictionary& dict, double sigma,
                                std::uint64_t seed)
{
    if (!(sigma >= 0.0)) throw ParameterError("noise level must be nonnegative");
    if (truth.energies.size() != truth.size() || truth.shapes.size() != truth.size())
        throw ParameterError("ground truth columns have different lengths");

    const SamplingGrid& grid = dict.grid();
    const std::size_t n = grid.n_samples;
    const std::size_t tau = dict.tau();
    SampledSignal out{std::vector<double>(n, 0.0), grid, sigma, false};

    for (std::size_t e = 0; e < truth.size(); ++e) {
        const double t = truth.arrivals[e];
        if (!(t >= 0.0) || !(t < grid.span()))
            throw ParameterError("arrival " + std::to_string(t) + " outside the sampling grid");

        ShapeParams params;
        double c = 0.0;
        if (const auto* col = std::get_if<DictionaryShape>(&truth.shapes[e])) {
            if (col->shape_index >= dict.n_shapes())
                throw ParameterError("event shape index outside the dictionary");
            params = dict.params(col->shape_index);
            c = dict.normalizer(col->shape_index);
        } else {
            params = std::get<ShapeParams>(truth.shapes[e]);
            c = gamma_shape(params.theta1, params.theta2, tau, grid).normalizer;
        }

        const double start = t / grid.dt;
        // first sample strictly after the arrival
        auto i = static_cast<std::size_t>(std::floor(start)) + 1;
        for (; i < n; ++i) {
            const double u = static_cast<double>(i) - start;
            if (u > static_cast<double>(tau)) break;
            out.samples[i] += truth.energies[e] * gamma_pulse(params, c, tau, u);
        }
    }

    if (sigma > 0.0) {
        auto rng = make_rng(seed, Stream::noise);
        std::normal_distribution<double> noise(0.0, sigma);
        for (double& y : out.samples) y += noise(rng);
    }
    return out;
}

std::vector<std::size_t> optimal_index_set(const GroundTruth& truth, const SamplingGrid& grid)
{
    std::vector<std::size_t> p0;
    p0.reserve(truth.size());
    for (double t : truth.arrivals) {
        const double x = std::floor(t / grid.dt + 0.5);
        if (x < 0.0 || x > static_cast<double>(grid.n_samples - 1))
            throw ParameterError("arrival outside the sampling grid");
        p0.push_back(static_cast<std::size_t>(x));
    }
    std::sort(p0.begin(), p0.end());
    p0.erase(std::unique(p0.begin(), p0.end()), p0.end());
    return p0;
}

} // namespace pileup
