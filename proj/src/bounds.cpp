#include "pileup/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "pileup/errors.hpp"

namespace pileup {

BoundInputs make_bound_inputs(const Dictionary& dict, const CorrelationProfile& profile,
                              EnergyBounds energy, double sigma, double alpha, double r, double eta)
{
    BoundInputs in;
    in.e_min = energy.e_min;
    in.e_max = energy.e_max;
    in.sigma = sigma;
    in.alpha = alpha;
    in.g_min = profile.g_min;
    in.g_mass = profile.g_mass;
    in.tau = dict.tau();
    in.p = dict.n_shapes();
    in.n = dict.n_samples();
    in.dt = dict.grid().dt;
    in.r = r;
    in.eta = eta;
    return in;
}

Probability Probability::of(double raw)
{
    return {raw, std::clamp(raw, 0.0, 1.0)};
}

double tail_t(double x)
{
    if (!(x > 0.0)) throw ParameterError("tail function needs a positive argument");
    return std::exp(-0.5 * x * x) / (x * std::sqrt(2.0 * std::numbers::pi));
}

namespace {

double window_term(const BoundInputs& in)
{
    return in.e_min * in.e_min * std::sqrt(in.g_min) / in.e_max;
}

// argument sqrt(N) E_min^2 sqrt(g_min) / (4 E_max sigma)
double energy_tail(const BoundInputs& in)
{
    return tail_t(std::sqrt(static_cast<double>(in.n)) * window_term(in) / (4.0 * in.sigma));
}

// argument sqrt(N) (r - alpha) / sigma
double noise_tail(const BoundInputs& in)
{
    return tail_t(std::sqrt(static_cast<double>(in.n)) * (in.r - in.alpha) / in.sigma);
}

bool probabilities_defined(const BoundInputs& in)
{
    return in.g_min > 0.0 && in.r > in.alpha && in.sigma > 0.0;
}

} // namespace

std::optional<double> theoretical_eta(const BoundInputs& in)
{
    if (!(in.g_min > 0.0)) return std::nullopt;
    return window_term(in) / (4.0 * static_cast<double>(2 * in.tau + 1));
}

Admissibility check_r_admissible(const BoundInputs& in)
{
    Admissibility a;
    if (!(in.g_min > 0.0)) return a;
    a.applicable = true;
    a.margin = window_term(in) / 2.0 - (in.r + in.alpha);
    a.holds = in.r + in.alpha < window_term(in) / 2.0;
    return a;
}

Prop2Probabilities prop2_probabilities(const BoundInputs& in, std::size_t beta_l0)
{
    Prop2Probabilities out;
    if (!probabilities_defined(in)) return out;
    out.applicable = true;
    const double p = static_cast<double>(in.p);
    const double width = static_cast<double>(2 * in.tau + 1);
    const double noise = noise_tail(in);
    out.forward = Probability::of(1.0 - p * energy_tail(in) - p * width * noise);
    out.converse = Probability::of(1.0 - static_cast<double>(beta_l0) * noise);
    return out;
}

namespace {

// Levels where a_rho changes, ascending, starting with 0.
std::vector<double> breakpoints(const CorrelationProfile& profile)
{
    std::vector<double> v{0.0};
    for (double m : profile.max_corr)
        if (m > 0.0 && m <= 1.0) v.push_back(m);
        else if (m > 1.0) v.push_back(1.0);
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    if (v.back() < 1.0) v.push_back(1.0);
    return v;
}

// Largest rho in the half-open interval (lo, hi] with slope * rho <= rhs, if any.
std::optional<double> sup_linear(double lo, double hi, double slope, double rhs)
{
    if (slope > 0.0) {
        const double cap = rhs / slope;
        if (cap > lo) return std::min(hi, cap);
        return std::nullopt;
    }
    if (slope < 0.0) {
        const double floor = rhs / slope;
        if (hi >= floor) return hi;
        return std::nullopt;
    }
    if (rhs >= 0.0) return hi;
    return std::nullopt;
}

} // namespace

CorrelationLevel rho_r(const CorrelationProfile& profile, const BoundInputs& in)
{
    CorrelationLevel out;
    if (!(in.g_min > 0.0) || !(in.eta > 0.0)) {
        out.empty = true;
        return out;
    }
    const double c0 = window_term(in) - in.alpha - in.r;
    const double slope_c = static_cast<double>(2 * in.tau + 1) * in.g_mass *
                           static_cast<double>(in.p) * in.e_max / std::sqrt(in.g_min);
    const auto levels = breakpoints(profile);

    // rho = 1 uses the limit convention: satisfied iff C_{r,1} > 0.
    if (c0 - slope_c > 0.0) {
        out.level = 1.0;
        out.radius = rho_radius(profile, 1.0);
        return out;
    }
    // On (lo, hi] the radius is constant; the condition
    //   eta K (1 - rho) <= c0 - slope_c rho
    // is linear there: (slope_c - eta K) rho <= c0 - eta K.
    for (std::size_t i = levels.size() - 1; i >= 1; --i) {
        const double lo = levels[i - 1];
        const double hi = levels[i];
        const double k = static_cast<double>(2 * rho_radius(profile, hi) + 1);
        auto s = sup_linear(lo, hi, slope_c - in.eta * k, c0 - in.eta * k);
        // the closed-form sup may touch 1, where the limit convention already failed
        if (s && *s >= 1.0) s = std::nextafter(1.0, 0.0);
        if (s) {
            out.level = *s;
            out.radius = rho_radius(profile, *s);
            return out;
        }
    }
    const double k0 = static_cast<double>(2 * in.tau + 1);
    if (in.eta * k0 <= c0) {
        out.level = 0.0;
        out.radius = in.tau;
        return out;
    }
    out.empty = true;
    return out;
}

CorrelationLevel mu_level(const CorrelationProfile& profile, const BoundInputs& in)
{
    CorrelationLevel out;
    const double rhs = in.g_min > 0.0 ? in.eta * std::pow(in.g_min, 1.5) / in.e_max : 0.0;
    const auto levels = breakpoints(profile);
    for (std::size_t i = levels.size() - 1; i >= 1; --i) {
        const double lo = levels[i - 1];
        const double hi = levels[i];
        const double outside = 2.0 * static_cast<double>(in.tau - rho_radius(profile, hi));
        if (auto s = sup_linear(lo, hi, outside, rhs)) {
            out.level = *s;
            out.radius = rho_radius(profile, *s);
            return out;
        }
    }
    // rho = 0 always satisfies the condition
    out.level = 0.0;
    out.radius = rho_radius(profile, 0.0);
    return out;
}

std::size_t interval_count(std::vector<IndexInterval> intervals)
{
    if (intervals.empty()) return 0;
    std::sort(intervals.begin(), intervals.end(),
              [](const IndexInterval& a, const IndexInterval& b) { return a.lo < b.lo; });
    std::size_t count = 1;
    long reach = intervals.front().hi;
    for (std::size_t i = 1; i < intervals.size(); ++i) {
        if (intervals[i].lo > reach + 1) ++count;
        reach = std::max(reach, intervals[i].hi);
    }
    return count;
}

namespace {

long to_index(double t, double dt) { return std::lround(t / dt); }

} // namespace

GapBound theorem1_gap(const EventEstimate& events, const SparseRegressor& beta_post,
                      std::size_t a_rho, std::size_t a_mu, const BoundInputs& in,
                      std::size_t beta_l0)
{
    GapBound g;
    if (events.m_hat == 0 || events.t_hat.empty()) {
        g.reason = "no estimated events";
        return g;
    }
    const auto pattern = beta_post.block_pattern();
    if (pattern.empty()) {
        g.reason = "empty block pattern";
        return g;
    }
    double lambda_hat = 0.0;
    try {
        lambda_hat = estimate_rate(events);
    } catch (const UndefinedRateError&) {
        g.reason = "undefined rate";
        return g;
    }
    const long n_last = static_cast<long>(in.n) - 1;
    const long max_j = static_cast<long>(pattern.back());
    const long amu = static_cast<long>(a_mu);
    const long arho = static_cast<long>(a_rho);

    std::vector<IndexInterval> windows;
    bool truncated = max_j + arho > n_last;
    for (double t : events.t_hat) {
        const long k = to_index(t, in.dt);
        if (k - amu < 0 || k + amu > n_last) truncated = true;
        windows.push_back({std::max(0L, k - amu), std::min(n_last, k + amu)});
    }
    const double components = static_cast<double>(interval_count(windows));
    const double last = static_cast<double>(to_index(events.t_hat.back(), in.dt));
    g.bracket = 1.0 - last / static_cast<double>(arho + max_j) * components /
                          static_cast<double>(events.m_hat);
    g.bound = lambda_hat * g.bracket;

    if (probabilities_defined(in)) {
        const double p = static_cast<double>(in.p);
        const double width = static_cast<double>(2 * in.tau + 1);
        const double noise = noise_tail(in);
        g.probability = Probability::of(1.0 - p * energy_tail(in) - p * width * noise -
                                        static_cast<double>(beta_l0) * noise);
    }

    if (truncated) g.reason = "neighbourhood truncated at the grid edge";
    else if (!(in.g_min > 0.0)) g.reason = "min Gram entry not positive";
    else if (!(in.r > in.alpha)) g.reason = "r <= alpha";
    else if (!check_r_admissible(in).holds) g.reason = "r + alpha exceeds the admissible level";
    g.applicable = g.reason.empty();
    return g;
}

GapBound theorem2_gap(const EventEstimate& events, const SparseRegressor& beta_post,
                      std::size_t a_rho, std::size_t a_mu, const BoundInputs& in,
                      double lambda_nominal, std::size_t beta_l0, std::size_t p0_size)
{
    GapBound g;
    if (events.m_hat == 0 || events.t_hat.empty()) {
        g.reason = "no estimated events";
        return g;
    }
    const auto pattern = beta_post.block_pattern();
    double lambda_hat = 0.0;
    try {
        lambda_hat = estimate_rate(events);
    } catch (const UndefinedRateError&) {
        g.reason = "undefined rate";
        return g;
    }
    const long max_j = static_cast<long>(pattern.back());
    const long denom = max_j - static_cast<long>(a_mu);
    if (denom <= 0) {
        g.reason = "max J does not exceed a_mu";
        return g;
    }
    const double last = static_cast<double>(to_index(events.t_hat.back(), in.dt));
    g.bracket = 1.0 - static_cast<double>(pattern.size()) / static_cast<double>(events.m_hat) *
                          last / static_cast<double>(denom);
    g.bound = lambda_hat * g.bracket;

    const double ld = lambda_nominal * in.dt;
    const double separation = ld * ld * static_cast<double>(in.n) * static_cast<double>(a_rho);
    if (probabilities_defined(in)) {
        const double p = static_cast<double>(in.p);
        const double width = static_cast<double>(2 * in.tau + 1);
        const double noise = noise_tail(in);
        // conservative reading: both tail terms are subtracted
        g.probability = Probability::of(
            1.0 - separation -
            static_cast<double>(p0_size) *
                (p * energy_tail(in) + (p * width + static_cast<double>(beta_l0)) * noise));
    }

    if (!(separation < 1.0)) g.reason = "(lambda dt)^2 N a_rho >= 1";
    else if (!(in.g_min > 0.0)) g.reason = "min Gram entry not positive";
    else if (!(in.r > in.alpha)) g.reason = "r <= alpha";
    else if (!check_r_admissible(in).holds) g.reason = "r + alpha exceeds the admissible level";
    g.applicable = g.reason.empty();
    return g;
}

std::optional<double> lemma2_separation_probability(double lambda, double t_total, double delta)
{
    if (!(delta > 0.0) || !(lambda > 0.0) || !(t_total > 0.0)) return std::nullopt;
    const double x = lambda * lambda * t_total * delta;
    if (!(x < 1.0)) return std::nullopt;
    return 1.0 - x;
}

Lemma1Bounds lemma1_bounds(double g_min, EnergyBounds energy)
{
    if (!(g_min > 0.0)) throw ParameterError("Lemma bounds need a positive min Gram entry");
    const double root = std::sqrt(g_min);
    return {energy.e_max / root, root * energy.e_min * energy.e_min / energy.e_max};
}

namespace {

// Noise-free pulse of one event on the grid.
std::vector<double> isolated_pulse(const GroundTruth& truth, std::size_t e, const Dictionary& dict)
{
    GroundTruth one;
    one.arrivals = {truth.arrivals[e]};
    one.energies = {truth.energies[e]};
    one.shapes = {truth.shapes[e]};
    one.lambda_true = truth.lambda_true;
    return synthesize_signal(one, dict, 0.0, 0).samples;
}

// min ||v - A x|| over x >= 0, Lawson-Hanson active set on the normal equations.
Eigen::VectorXd small_nnls(const Eigen::MatrixXd& a, const Eigen::VectorXd& v)
{
    const Eigen::MatrixXd q = a.transpose() * a;
    const Eigen::VectorXd b = a.transpose() * v;
    const Eigen::Index m = a.cols();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(m);
    std::vector<bool> passive(static_cast<std::size_t>(m), false);
    const double tol = 1e-12 * std::max(1.0, b.cwiseAbs().maxCoeff());

    auto solve_passive = [&] {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < m; ++i)
            if (passive[static_cast<std::size_t>(i)]) idx.push_back(i);
        const auto k = static_cast<Eigen::Index>(idx.size());
        Eigen::MatrixXd qs(k, k);
        Eigen::VectorXd bs(k);
        for (Eigen::Index i = 0; i < k; ++i) {
            bs(i) = b(idx[i]);
            for (Eigen::Index j = 0; j < k; ++j) qs(i, j) = q(idx[i], idx[j]);
        }
        const Eigen::VectorXd zs = qs.ldlt().solve(bs);
        Eigen::VectorXd z = Eigen::VectorXd::Zero(m);
        for (Eigen::Index i = 0; i < k; ++i) z(idx[i]) = zs(i);
        return z;
    };

    for (Eigen::Index outer = 0; outer < 3 * m + 3; ++outer) {
        const Eigen::VectorXd w = b - q * x;
        Eigen::Index enter = -1;
        double best = tol;
        for (Eigen::Index i = 0; i < m; ++i)
            if (!passive[static_cast<std::size_t>(i)] && q(i, i) > 0.0 && w(i) > best) {
                best = w(i);
                enter = i;
            }
        if (enter < 0) break;
        passive[static_cast<std::size_t>(enter)] = true;
        Eigen::VectorXd z = solve_passive();
        for (Eigen::Index inner = 0; inner <= m; ++inner) {
            double step = 1.0;
            Eigen::Index block = -1;
            for (Eigen::Index i = 0; i < m; ++i)
                if (passive[static_cast<std::size_t>(i)] && z(i) <= 0.0) {
                    const double s = x(i) / (x(i) - z(i));
                    if (block < 0 || s < step) {
                        step = s;
                        block = i;
                    }
                }
            if (block < 0) break;
            x += step * (z - x);
            x(block) = 0.0;
            for (Eigen::Index i = 0; i < m; ++i)
                if (passive[static_cast<std::size_t>(i)] && x(i) <= 0.0) {
                    passive[static_cast<std::size_t>(i)] = false;
                    x(i) = 0.0;
                }
            z = solve_passive();
        }
        x = z.cwiseMax(0.0);
    }
    return x;
}

} // namespace

std::vector<double> discrepancy_coefficients(const GroundTruth& truth, const Dictionary& dict,
                                             std::optional<EnergyBounds> energy)
{
    const SamplingGrid& grid = dict.grid();
    const std::size_t n = grid.n_samples;
    const std::size_t p = dict.n_shapes();
    std::vector<double> beta(dict.n_columns(), 0.0);

    // group events by their nearest block
    std::vector<std::pair<std::size_t, std::size_t>> order;  // (block, event)
    for (std::size_t e = 0; e < truth.size(); ++e) {
        const double x = std::floor(truth.arrivals[e] / grid.dt + 0.5);
        order.emplace_back(static_cast<std::size_t>(std::clamp(x, 0.0, double(n - 1))), e);
    }
    std::sort(order.begin(), order.end());

    const double root_n = std::sqrt(static_cast<double>(n));
    for (std::size_t i = 0; i < order.size();) {
        const std::size_t k = order[i].first;
        Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
        for (; i < order.size() && order[i].first == k; ++i) {
            const auto pulse = isolated_pulse(truth, order[i].second, dict);
            v += Eigen::Map<const Eigen::VectorXd>(pulse.data(), static_cast<Eigen::Index>(n));
        }
        if (dict.is_degenerate_block(k)) continue;
        const Eigen::MatrixXd a = dict.time_block(k);
        Eigen::VectorXd x = small_nnls(a, v);
        if (energy) {
            double level = (a * x).norm() / root_n;
            if (level == 0.0) {
                // no fit at all: start from the single best-aligned column
                const Eigen::VectorXd corr = a.transpose() * v;
                Eigen::Index best = 0;
                corr.maxCoeff(&best);
                x.setZero();
                x(best) = 1.0;
                level = a.col(best).norm() / root_n;
            }
            if (level < energy->e_min) x *= energy->e_min / level;
            else if (level > energy->e_max) x *= energy->e_max / level;
        }
        for (std::size_t s = 0; s < p; ++s) beta[dict.column(k, s)] = x(static_cast<Eigen::Index>(s));
    }
    return beta;
}

double discrepancy_alpha(const GroundTruth& truth, const Dictionary& dict,
                         std::optional<EnergyBounds> energy)
{
    const auto clean = synthesize_signal(truth, dict, 0.0, 0).samples;
    const auto beta = discrepancy_coefficients(truth, dict, energy);
    const auto fit = dict.apply(beta);
    double acc = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i) acc += (clean[i] - fit[i]) * (clean[i] - fit[i]);
    return std::sqrt(acc / static_cast<double>(clean.size()));
}

IrrepresentabilityReport irrepresentability_check(const Dictionary& dict,
                                                  const std::vector<std::size_t>& p0, double eta0,
                                                  double sigma, double alpha)
{
    if (!(eta0 > 0.0 && eta0 < 1.0)) throw ParameterError("eta0 must lie in (0, 1)");
    if (p0.empty()) throw ParameterError("optimal index set is empty");
    IrrepresentabilityReport rep;
    const std::size_t n = dict.n_samples();
    const std::size_t p = dict.n_shapes();
    const std::size_t in = p0.size();
    const std::size_t out = n - in;

    const double nd = static_cast<double>(n);
    rep.r_threshold = std::max(
        2.0 * alpha / eta0,
        2.0 * std::numbers::sqrt2 * sigma / eta0 *
            std::sqrt(std::log(static_cast<double>(out * p)) / nd));

    if ((out * p) * (in * p) + (in * p) * (in * p) > 4'000'000) {
        rep.too_large = true;
        return rep;
    }
    std::vector<std::size_t> rest;
    for (std::size_t k = 0; k < n; ++k)
        if (!std::binary_search(p0.begin(), p0.end(), k)) rest.push_back(k);

    const auto pi = static_cast<Eigen::Index>(p);
    Eigen::MatrixXd g_in(static_cast<Eigen::Index>(in * p), static_cast<Eigen::Index>(in * p));
    for (std::size_t a = 0; a < in; ++a)
        for (std::size_t b = 0; b < in; ++b)
            g_in.block(static_cast<Eigen::Index>(a) * pi, static_cast<Eigen::Index>(b) * pi, pi, pi) =
                dict.gram_block(p0[a], p0[b]);
    Eigen::MatrixXd g_cross(static_cast<Eigen::Index>(out * p), static_cast<Eigen::Index>(in * p));
    for (std::size_t a = 0; a < out; ++a)
        for (std::size_t b = 0; b < in; ++b)
            g_cross.block(static_cast<Eigen::Index>(a) * pi, static_cast<Eigen::Index>(b) * pi, pi,
                          pi) = dict.gram_block(rest[a], p0[b]);

    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g_in, Eigen::EigenvaluesOnly);
    const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
    if (!(eig.eigenvalues().minCoeff() > 1e-10 * std::max(top, 1e-300))) {
        rep.singular = true;
        return rep;
    }
    // M = G_cross G_in^{-1}  <=>  G_in M^T = G_cross^T (G_in symmetric)
    const Eigen::MatrixXd m = g_in.ldlt().solve(g_cross.transpose()).transpose();
    rep.min_entry = m.size() ? m.minCoeff() : 0.0;
    rep.entries_nonnegative = rep.min_entry >= -1e-10;
    rep.max_row_sum = m.rows() ? m.rowwise().sum().maxCoeff() : 0.0;
    rep.holds = rep.entries_nonnegative && rep.max_row_sum < 1.0 - eta0;
    return rep;
}

BoundReport evaluate_bounds(const CorrelationProfile& profile, const BoundInputs& inputs,
                            const EventEstimate& events, const SparseRegressor& beta,
                            const SparseRegressor& beta_post, double lambda_nominal,
                            std::size_t p0_size)
{
    BoundReport rep;
    rep.inputs = inputs;
    rep.eta_theory = theoretical_eta(inputs);
    rep.admissibility = check_r_admissible(inputs);
    rep.prop2 = prop2_probabilities(inputs, beta.l0());
    rep.rho = rho_r(profile, inputs);
    rep.mu = mu_level(profile, inputs);
    if (rep.rho.empty) {
        rep.upper_gap.reason = rep.lower_gap.reason = "no admissible correlation level rho_r";
        return rep;
    }
    rep.upper_gap = theorem1_gap(events, beta_post, rep.rho.radius, rep.mu.radius, inputs, beta.l0());
    rep.lower_gap = theorem2_gap(events, beta_post, rep.rho.radius, rep.mu.radius, inputs,
                                 lambda_nominal, beta.l0(), p0_size);
    return rep;
}

} // namespace pileup
