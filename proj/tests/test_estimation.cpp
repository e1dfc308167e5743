#include "doctest.h"

#include <algorithm>
#include <cmath>

#include "pileup/errors.hpp"
#include "pileup/estimation.hpp"
#include "pileup/random.hpp"
#include "pileup/signal.hpp"

using namespace pileup;

namespace {

SparseRegressor blocks_with_l1(const std::vector<double>& l1, std::size_t p = 2)
{
    std::vector<double> dense(l1.size() * p, 0.0);
    for (std::size_t k = 0; k < l1.size(); ++k) {
        dense[k * p] = 0.25 * l1[k];
        dense[k * p + p - 1] += 0.75 * l1[k];
    }
    return SparseRegressor::from_dense(dense, p);
}

SampledSignal square_train(const std::vector<int>& pattern)
{
    SampledSignal s;
    for (int v : pattern) s.samples.push_back(v ? 10.0 : 0.0);
    if (s.samples.size() % 2) s.samples.push_back(10.0);
    s.grid = SamplingGrid(s.samples.size(), 1.0);
    return s;
}

} // namespace

TEST_CASE("threshold keeps blocks with l1 norm at least eta")
{
    const auto b = blocks_with_l1({0.5, 4.0, 0.1});
    CHECK(threshold_blocks(b, 1.0).block_pattern() == std::vector<std::size_t>{1});
    CHECK(threshold_blocks(b, 0.05).block_pattern() == b.block_pattern());
    CHECK(threshold_blocks(b, 0.05).dense() == b.dense());
    CHECK(threshold_blocks(b, 0.5).block_pattern() == std::vector<std::size_t>{0, 1});
    CHECK_THROWS_AS(threshold_blocks(b, 0.0), ParameterError);
}

TEST_CASE("threshold is idempotent and monotone in eta")
{
    auto rng = make_rng(3, Stream::misc);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    std::vector<double> l1(60);
    for (auto& v : l1) v = u(rng) < 2.0 ? 0.0 : u(rng);
    const auto b = blocks_with_l1(l1);
    std::vector<std::size_t> previous = b.block_pattern();
    for (double eta = 0.1; eta < 6.0; eta += 0.1) {
        const auto once = threshold_blocks(b, eta);
        CHECK(threshold_blocks(once, eta).dense() == once.dense());
        const auto pattern = once.block_pattern();
        CHECK(std::includes(previous.begin(), previous.end(), pattern.begin(), pattern.end()));
        previous = pattern;
    }
}

TEST_CASE("event extraction uses rising edges")
{
    const auto e = extract_events(std::vector<std::size_t>{1, 2, 4}, 1.0);
    CHECK(e.t_hat == std::vector<double>{1.0, 4.0});
    CHECK(e.m_hat == 2);
    const auto all = extract_events(std::vector<std::size_t>{0, 1, 2, 3, 4}, 1.0);
    CHECK(all.m_hat == 1);
    CHECK(all.t_hat == std::vector<double>{0.0});
    CHECK(extract_events(std::vector<std::size_t>{}, 1.0).m_hat == 0);
    const auto scaled = extract_events(std::vector<std::size_t>{3, 7, 8}, 0.5);
    CHECK(scaled.t_hat == std::vector<double>{1.5, 3.5});
    CHECK_THROWS_AS(extract_events(std::vector<std::size_t>{1}, 0.0), ParameterError);
}

TEST_CASE("pattern is invariant under joint rescaling of beta and eta")
{
    const std::vector<double> l1{0.0, 3.0, 0.4, 2.9, 0.0, 0.0, 7.0, 1.0, 0.2};
    const auto base = extract_events(threshold_blocks(blocks_with_l1(l1), 1.0), 1.0);
    for (double c : {0.01, 0.5, 3.0, 1e4}) {
        std::vector<double> scaled(l1);
        for (auto& v : scaled) v *= c;
        const auto ev = extract_events(threshold_blocks(blocks_with_l1(scaled), c), 1.0);
        CHECK(ev.t_hat == base.t_hat);
        CHECK(ev.active_blocks == base.active_blocks);
    }
}

TEST_CASE("event count is bounded by the thresholded and raw block patterns")
{
    auto rng = make_rng(5, Stream::misc);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> l1(40);
        for (auto& v : l1) v = u(rng) < 0.4 ? 5.0 * u(rng) : 0.0;
        const auto b = blocks_with_l1(l1);
        const auto post = threshold_blocks(b, 1.0 + u(rng));
        const auto ev = extract_events(post, 1.0);
        CHECK(ev.m_hat <= post.block_pattern().size());
        CHECK(post.block_pattern().size() <= b.block_pattern().size());
    }
}

TEST_CASE("rate estimates and reference rates")
{
    EventEstimate ev = extract_events(std::vector<std::size_t>{2, 3, 10, 20}, 1.0);
    CHECK(estimate_rate(ev) == doctest::Approx(3.0 / 20.0));
    CHECK_THROWS_AS(estimate_rate(EventEstimate{}), UndefinedRateError);
    CHECK_THROWS_AS(estimate_rate(extract_events(std::vector<std::size_t>{0}, 1.0)),
                    UndefinedRateError);

    GroundTruth g;
    for (int i = 1; i <= 50; ++i) g.arrivals.push_back(10.0 * i);
    CHECK(ideal_rate(g) == doctest::Approx(0.1));
    g.arrivals = {7.0};
    CHECK(ideal_rate(g) == doctest::Approx(1.0 / 7.0));
    g.arrivals.clear();
    CHECK_THROWS_AS(ideal_rate(g), UndefinedRateError);

    CHECK(optimal_rate({3, 10, 17}, 0.1) == doctest::Approx(3.0 / 1.7));
    CHECK(optimal_rate({8}, 0.5) == doctest::Approx(0.25));
    CHECK_THROWS_AS(optimal_rate({}, 1.0), UndefinedRateError);
    CHECK_THROWS_AS(optimal_rate({0}, 1.0), UndefinedRateError);
}

TEST_CASE("ideal rate carries the M/(M-1) bias of the maximum likelihood form")
{
    const double lambda = 0.1;
    const int draws = 10000;
    double sum = 0.0, sq = 0.0;
    for (int s = 0; s < draws; ++s) {
        const double v = ideal_rate(sample_poisson_process(lambda, EventCount{50},
                                                           static_cast<std::uint64_t>(s)));
        sum += v;
        sq += v * v;
    }
    const double mean = sum / draws;
    const double se = std::sqrt((sq / draws - mean * mean) / draws);
    CHECK(std::abs(mean - lambda * 50.0 / 49.0) <= 3.0 * se);
}

TEST_CASE("optimal rate rarely exceeds the ideal rate after collisions")
{
    std::size_t audited = 0, violations = 0;
    for (std::uint64_t s = 0; s < 1000; ++s) {
        const auto truth = sample_poisson_process(0.4, EventCount{50}, s);
        const SamplingGrid grid(2 * static_cast<std::size_t>(truth.arrivals.back()) + 4, 1.0);
        const auto p0 = optimal_index_set(truth, grid);
        const bool collided = p0.size() < truth.size();
        const bool late = static_cast<double>(p0.back()) >= truth.arrivals.back() - 0.5;
        if (!collided || !late) continue;
        ++audited;
        if (optimal_rate(p0, 1.0) > ideal_rate(truth)) ++violations;
    }
    MESSAGE("lambda_opt > lambda_c in " << violations << " of " << audited << " audited runs");
    CHECK(audited > 0);
}

TEST_CASE("idle time baseline")
{
    // busy, idle 2, busy, idle 3, busy
    const auto s = square_train({1, 0, 0, 1, 1, 0, 0, 0, 1, 1});
    CHECK(idle_time_rate(s, 3.0) == doctest::Approx(2.0 / 5.0));
    // leading and trailing idle runs are incomplete
    const auto t = square_train({0, 0, 1, 0, 1, 0, 0, 0});
    CHECK(idle_time_rate(t, 3.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(idle_time_rate(square_train({1, 1, 1, 1}), 3.0), UndefinedRateError);
    CHECK_THROWS_AS(idle_time_rate(s, 0.0), ParameterError);
}

TEST_CASE("pipeline recovers isolated on-grid pulses and is deterministic")
{
    const Dictionary dict(ShapeGrid::cartesian({1.0, 2.0}, {1.0}, 8), SamplingGrid(200, 1.0));
    GroundTruth g;
    g.arrivals = {10.0, 50.0, 90.0, 130.0};
    g.energies = {50.0, 48.0, 52.0, 49.0};
    g.shapes = {DictionaryShape{0}, DictionaryShape{1}, DictionaryShape{0}, DictionaryShape{1}};
    const auto y = synthesize_signal(g, dict, 1.0, 21);
    PipelineOptions opt;
    opt.path.path_factor = 0.75;
    const auto a = run_pipeline(dict, y, opt);
    const auto b = run_pipeline(dict, y, opt);
    CHECK(a.events.m_hat == 4);
    REQUIRE(a.report.lambda_hat);
    CHECK(*a.report.lambda_hat == doctest::Approx(4.0 / a.events.t_hat.back()));
    for (std::size_t i = 0; i < a.events.t_hat.size(); ++i)
        CHECK(std::abs(a.events.t_hat[i] - g.arrivals[i]) <= 1.0);
    CHECK(a.residual_norm <= std::sqrt(200.0));
    CHECK(a.events.eta == 3.0);
    CHECK(a.beta.dense() == b.beta.dense());
    CHECK(a.events.t_hat == b.events.t_hat);
    CHECK(a.report.lambda_hat == b.report.lambda_hat);
    CHECK(a.report.lambda_std == b.report.lambda_std);

    PipelineOptions fixed;
    fixed.r = 0.5;
    fixed.eta = 10.0;
    const auto c = run_pipeline(dict, y, fixed);
    CHECK(c.beta.r == 0.5);
    CHECK(c.events.eta == 10.0);

    SampledSignal other = y;
    other.grid = SamplingGrid(200, 0.5);
    CHECK_THROWS_AS(run_pipeline(dict, other, opt), ParameterError);
}

TEST_CASE("pipeline reports an undefined rate instead of failing")
{
    const Dictionary dict(ShapeGrid::cartesian({1.0}, {1.0}, 4), SamplingGrid(40, 1.0));
    SampledSignal y;
    y.samples.assign(40, 0.0);
    y.grid = dict.grid();
    y.noise_sigma = 1.0;
    PipelineOptions opt;
    const auto out = run_pipeline(dict, y, opt);
    CHECK_FALSE(out.report.lambda_hat);
    CHECK_FALSE(out.report.lambda_hat_note.empty());
    CHECK_FALSE(out.report.lambda_std);
}
