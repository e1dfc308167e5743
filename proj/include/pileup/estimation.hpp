#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "pileup/dictionary.hpp"
#include "pileup/signal.hpp"
#include "pileup/solver.hpp"

namespace pileup {

struct EventEstimate {
    std::size_t m_hat = 0;
    std::vector<double> t_hat;                // seconds, ascending
    std::vector<std::size_t> active_blocks;   // post-threshold block pattern
    double eta = 0.0;
    double r = 0.0;
};

struct RateReport {
    std::optional<double> lambda_hat;
    std::optional<double> lambda_c;
    std::optional<double> lambda_opt;
    std::optional<double> lambda_std;
    std::string lambda_hat_note;  // why lambda_hat is missing, when it is
    EventEstimate events;
};

/// Removes every block whose l1 norm is below eta.
SparseRegressor threshold_blocks(const SparseRegressor& beta, double eta);

/// Event starts are the rising edges of the active-block indicator. A virtual inactive
/// block at index -1 lets an active block 0 open an event.
EventEstimate extract_events(const std::vector<std::size_t>& active_blocks, double dt);
EventEstimate extract_events(const SparseRegressor& beta_thresholded, double dt);

/// M_hat / T_hat_{M_hat}; throws UndefinedRateError without events or with T_hat = 0.
double estimate_rate(const EventEstimate& events);

/// M / T_M from the true arrivals.
double ideal_rate(const GroundTruth& truth);

/// |P0| / (dt * max P0).
double optimal_rate(const std::vector<std::size_t>& p0, double dt);

/// Busy samples exceed `threshold`. Counts idle runs flanked by busy runs on both sides and
/// returns count / total idle duration.
double idle_time_rate(const SampledSignal& signal, double threshold);

struct PipelineOptions {
    double sigma = 1.0;
    std::optional<double> eta;  // default 3 sigma
    std::optional<double> r;    // default: residual-matched along the path
    PathOptions path;
};

struct PipelineResult {
    SparseRegressor beta;        // beta(r)
    SparseRegressor beta_post;   // beta(r, eta)
    EventEstimate events;
    RateReport report;
    double residual_norm = 0.0;
};

/// Solve, threshold, extract events and estimate the rate for one signal.
PipelineResult run_pipeline(const Dictionary& dict, const SampledSignal& signal,
                            const PipelineOptions& options);

} // namespace pileup
