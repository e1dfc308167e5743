#include "pileup/estimation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "pileup/errors.hpp"

namespace pileup {

SparseRegressor threshold_blocks(const SparseRegressor& beta, double eta)
{
    if (!(eta > 0.0)) throw ParameterError("threshold eta must be positive");
    std::vector<std::size_t> keep;
    for (const auto& [block, l1] : beta.block_l1())
        if (l1 >= eta) keep.push_back(block);
    auto out = beta.restricted_to(keep);
    out.objective = beta.objective;
    out.kkt_violation = beta.kkt_violation;
    return out;
}

EventEstimate extract_events(const std::vector<std::size_t>& active_blocks, double dt)
{
    if (!(dt > 0.0)) throw ParameterError("sampling period must be positive");
    EventEstimate ev;
    ev.active_blocks = active_blocks;
    std::sort(ev.active_blocks.begin(), ev.active_blocks.end());
    for (std::size_t i = 0; i < ev.active_blocks.size(); ++i) {
        const std::size_t k = ev.active_blocks[i];
        if (i == 0 || ev.active_blocks[i - 1] + 1 != k)
            ev.t_hat.push_back(static_cast<double>(k) * dt);
    }
    ev.m_hat = ev.t_hat.size();
    return ev;
}

EventEstimate extract_events(const SparseRegressor& beta_thresholded, double dt)
{
    auto ev = extract_events(beta_thresholded.block_pattern(), dt);
    ev.r = beta_thresholded.r;
    return ev;
}

double estimate_rate(const EventEstimate& events)
{
    if (events.m_hat == 0 || events.t_hat.empty())
        throw UndefinedRateError("no estimated events");
    const double last = events.t_hat.back();
    if (!(last > 0.0)) throw UndefinedRateError("last estimated arrival is at time 0");
    return static_cast<double>(events.m_hat) / last;
}

double ideal_rate(const GroundTruth& truth)
{
    if (truth.arrivals.empty()) throw UndefinedRateError("no arrivals");
    const double last = truth.arrivals.back();
    if (!(last > 0.0)) throw UndefinedRateError("last arrival is at time 0");
    return static_cast<double>(truth.arrivals.size()) / last;
}

double optimal_rate(const std::vector<std::size_t>& p0, double dt)
{
    if (p0.empty()) throw UndefinedRateError("empty optimal index set");
    const std::size_t last = *std::max_element(p0.begin(), p0.end());
    if (last == 0) throw UndefinedRateError("optimal index set reduced to index 0");
    return static_cast<double>(p0.size()) / (dt * static_cast<double>(last));
}

double idle_time_rate(const SampledSignal& signal, double threshold)
{
    if (!(threshold > 0.0)) throw ParameterError("idle threshold must be positive");
    const auto& y = signal.samples;
    std::size_t runs = 0;
    std::size_t idle_samples = 0;
    bool seen_busy = false;
    std::size_t run = 0;
    for (double v : y) {
        if (v > threshold) {
            if (seen_busy && run > 0) {
                ++runs;
                idle_samples += run;
            }
            seen_busy = true;
            run = 0;
        } else {
            ++run;
        }
    }
    if (runs == 0) throw UndefinedRateError("no complete idle period");
    return static_cast<double>(runs) / (static_cast<double>(idle_samples) * signal.grid.dt);
}

PipelineResult run_pipeline(const Dictionary& dict, const SampledSignal& signal,
                            const PipelineOptions& options)
{
    if (signal.grid != dict.grid())
        throw ParameterError("signal grid does not match the dictionary grid");
    PipelineResult out;
    if (options.r) {
        out.beta = nnlasso(dict, signal.samples, *options.r, options.path.solver);
        std::vector<double> residual = signal.samples;
        for (const auto& c : out.beta.entries()) dict.add_column(c.column, -c.value, residual);
        out.residual_norm =
            std::sqrt(std::inner_product(residual.begin(), residual.end(), residual.begin(), 0.0));
    } else {
        auto sel = select_r(dict, signal.samples, options.sigma, options.path);
        out.beta = std::move(sel.beta);
        out.residual_norm = sel.residual_norm;
    }
    const double eta = options.eta.value_or(3.0 * options.sigma);
    out.beta_post = threshold_blocks(out.beta, eta);
    out.events = extract_events(out.beta_post, dict.grid().dt);
    out.events.eta = eta;
    out.events.r = out.beta.r;

    out.report.events = out.events;
    try {
        out.report.lambda_hat = estimate_rate(out.events);
    } catch (const UndefinedRateError& e) {
        out.report.lambda_hat_note = e.what();
    }
    try {
        out.report.lambda_std = idle_time_rate(signal, 3.0 * options.sigma);
    } catch (const UndefinedRateError&) {
    }
    return out;
}

} // namespace pileup
