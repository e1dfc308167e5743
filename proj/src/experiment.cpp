#include "pileup/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <thread>

#include "pileup/bounds.hpp"
#include "pileup/errors.hpp"
#include "pileup/estimation.hpp"
#include "pileup/random.hpp"

namespace pileup {

namespace fs = std::filesystem;

EnergyBounds ExperimentConfig::energy() const
{
    return energy_bounds.value_or(default_energy_bounds(energy_mean, energy_std));
}

void ExperimentConfig::validate() const
{
    if (lambda_grid.empty()) throw ParameterError("lambda_grid is empty");
    for (double l : lambda_grid)
        if (!(l > 0.0) || !std::isfinite(l)) throw ParameterError("lambda values must be positive");
    if (replications < 1) throw ParameterError("replications must be >= 1");
    if (!horizon && events_per_signal < 1) throw ParameterError("events_per_signal must be >= 1");
    if (horizon && !(*horizon > 0.0)) throw ParameterError("horizon must be positive");
    if (!(sigma > 0.0)) throw ParameterError("sigma must be positive");
    if (!(dt > 0.0)) throw ParameterError("dt must be positive");
    if (shape_grid.pairs.empty()) throw ParameterError("shape grid is empty");
    if (!(energy_std > 0.0)) throw ParameterError("energy std must be positive");
    const auto e = energy();
    if (!(e.e_min > 0.0 && e.e_min < e.e_max)) throw ParameterError("need 0 < e_min < e_max");
    if (theta1_range.first >= theta1_range.second || theta2_range.first >= theta2_range.second)
        throw ParameterError("case II theta ranges must be nonempty");
    if (eta_rule.kind == EtaRule::Kind::fixed && !(eta_rule.value > 0.0))
        throw ParameterError("eta must be positive");
    if (r_fixed && !(*r_fixed >= 0.0)) throw ParameterError("r must be nonnegative");
    if (!(path.path_factor > 0.0 && path.path_factor < 1.0))
        throw ParameterError("path factor must lie in (0, 1)");
}

namespace {

std::pair<double, double> parse_pair(const Json& j, const char* what)
{
    const auto v = j.get<std::vector<double>>();
    if (v.size() != 2) throw ParameterError(std::string(what) + " must be [lo, hi]");
    return {v[0], v[1]};
}

} // namespace

ExperimentConfig parse_experiment_config(const Json& j)
{
    if (!j.is_object()) throw ParameterError("config must be a JSON object");
    ExperimentConfig cfg;
    try {
        if (j.contains("case")) {
            const auto c = j.at("case").get<std::string>();
            if (c == "I") cfg.simulation_case = SimulationCase::bank_shapes;
            else if (c == "II") cfg.simulation_case = SimulationCase::random_shapes;
            else throw ParameterError("case must be \"I\" or \"II\"");
        }
        if (j.contains("lambda_grid")) cfg.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
        if (j.contains("events_per_signal"))
            cfg.events_per_signal = j.at("events_per_signal").get<std::size_t>();
        if (j.contains("horizon")) cfg.horizon = j.at("horizon").get<double>();
        if (j.contains("replications")) cfg.replications = j.at("replications").get<std::size_t>();
        if (j.contains("sigma")) cfg.sigma = j.at("sigma").get<double>();
        if (j.contains("grid")) {
            const auto& g = j.at("grid");
            if (g.contains("dt")) cfg.dt = g.at("dt").get<double>();
            if (g.contains("n_samples")) cfg.n_samples = g.at("n_samples").get<std::size_t>();
        }
        if (!j.contains("shape_grid")) throw ParameterError("config lacks shape_grid");
        cfg.shape_grid = parse_shape_grid(j.at("shape_grid"));
        if (j.contains("case2_theta_ranges")) {
            const auto& t = j.at("case2_theta_ranges");
            cfg.theta1_range = parse_pair(t.at("theta1"), "theta1 range");
            cfg.theta2_range = parse_pair(t.at("theta2"), "theta2 range");
        }
        if (j.contains("energy")) {
            const auto& e = j.at("energy");
            if (e.contains("mean")) cfg.energy_mean = e.at("mean").get<double>();
            if (e.contains("std")) cfg.energy_std = e.at("std").get<double>();
            if (e.contains("variance")) cfg.energy_std = std::sqrt(e.at("variance").get<double>());
            auto b = default_energy_bounds(cfg.energy_mean, cfg.energy_std);
            if (e.contains("e_min")) b.e_min = e.at("e_min").get<double>();
            if (e.contains("e_max")) b.e_max = e.at("e_max").get<double>();
            cfg.energy_bounds = b;
        }
        if (j.contains("eta_rule")) {
            const auto& e = j.at("eta_rule");
            if (e.is_number()) {
                cfg.eta_rule = {EtaRule::Kind::fixed, e.get<double>()};
            } else {
                const auto s = e.get<std::string>();
                if (s == "3sigma") cfg.eta_rule = {EtaRule::Kind::three_sigma, 0.0};
                else if (s == "theoretical") cfg.eta_rule = {EtaRule::Kind::theoretical, 0.0};
                else throw ParameterError("eta_rule must be a number, \"3sigma\" or \"theoretical\"");
            }
        }
        if (j.contains("r_rule")) {
            const auto& r = j.at("r_rule");
            if (r.is_number()) cfg.r_fixed = r.get<double>();
            else if (r.get<std::string>() != "residual")
                throw ParameterError("r_rule must be a number or \"residual\"");
        }
        if (j.contains("path")) {
            const auto& p = j.at("path");
            if (p.contains("factor")) cfg.path.path_factor = p.at("factor").get<double>();
            if (p.contains("max_steps")) cfg.path.max_steps = p.at("max_steps").get<std::size_t>();
            if (p.contains("tol")) cfg.path.solver.tol = p.at("tol").get<double>();
            if (p.contains("max_sweeps"))
                cfg.path.solver.max_sweeps = p.at("max_sweeps").get<std::size_t>();
        }
        if (j.contains("bounds")) cfg.evaluate_bounds = j.at("bounds").get<bool>();
        if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("threads")) cfg.threads = j.at("threads").get<unsigned>();
    } catch (const Json::exception& e) {
        throw ParameterError(std::string("config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path)
{
    return parse_experiment_config(read_json(path));
}

std::size_t samples_for(const ExperimentConfig& cfg, double lambda)
{
    if (cfg.n_samples) return *cfg.n_samples;
    double span = 0.0;
    if (cfg.horizon) {
        span = *cfg.horizon / cfg.dt;
    } else {
        const double m = static_cast<double>(cfg.events_per_signal);
        span = (m + 6.0 * std::sqrt(m)) / (lambda * cfg.dt);
    }
    auto n = static_cast<std::size_t>(std::ceil(span)) + cfg.shape_grid.tau + 2;
    return n + (n % 2);
}

ReplicationContext::ReplicationContext(const ExperimentConfig& config, double l)
    : cfg(config), lambda(l), dict(config.shape_grid, SamplingGrid(samples_for(config, l), config.dt))
{
    const bool theoretical = cfg.eta_rule.kind == EtaRule::Kind::theoretical;
    if (cfg.evaluate_bounds || theoretical) profile = correlation_profile(dict);
    switch (cfg.eta_rule.kind) {
    case EtaRule::Kind::fixed: eta = cfg.eta_rule.value; break;
    case EtaRule::Kind::three_sigma: eta = 3.0 * cfg.sigma; break;
    case EtaRule::Kind::theoretical: {
        const auto in = make_bound_inputs(dict, *profile, cfg.energy(), cfg.sigma, 0.0, 0.0, 0.0);
        const auto t = theoretical_eta(in);
        if (!t) throw ParameterError("theoretical eta undefined: min Gram entry is not positive");
        eta = *t;
        break;
    }
    }
}

GroundTruth simulate_truth(const ReplicationContext& ctx, std::uint64_t seed)
{
    const auto& cfg = ctx.cfg;
    Horizon h = cfg.horizon ? Horizon{TimeLimit{*cfg.horizon}} : Horizon{EventCount{cfg.events_per_signal}};
    GroundTruth truth = sample_poisson_process(ctx.lambda, h, seed);
    truth.energies = sample_energies(truth.size(), cfg.energy_mean, cfg.energy_std, cfg.energy(), seed);
    auto rng = make_rng(seed, Stream::shapes);
    if (cfg.simulation_case == SimulationCase::bank_shapes) {
        std::uniform_int_distribution<std::size_t> pick(0, ctx.dict.n_shapes() - 1);
        for (std::size_t e = 0; e < truth.size(); ++e) truth.shapes.emplace_back(DictionaryShape{pick(rng)});
    } else {
        std::uniform_real_distribution<double> u(0.0, 1.0);
        const auto [a1, b1] = cfg.theta1_range;
        const auto [a2, b2] = cfg.theta2_range;
        for (std::size_t e = 0; e < truth.size(); ++e) {
            // 1 - u lies in (0, 1], so draws land in (lo, hi]
            const double t1 = a1 + (b1 - a1) * (1.0 - u(rng));
            const double t2 = a2 + (b2 - a2) * (1.0 - u(rng));
            truth.shapes.emplace_back(ShapeParams{t1, t2});
        }
    }
    return truth;
}

namespace {

void fill_bounds(RunRecord& rec, const ReplicationContext& ctx, const GroundTruth& truth,
                 const PipelineResult& res)
{
    const auto& cfg = ctx.cfg;
    const double alpha = discrepancy_alpha(truth, ctx.dict, cfg.energy());
    rec.alpha = alpha;
    const auto in = make_bound_inputs(ctx.dict, *ctx.profile, cfg.energy(), cfg.sigma, alpha,
                                      res.beta.r, ctx.eta);
    const auto rep = evaluate_bounds(*ctx.profile, in, res.events, res.beta, res.beta_post,
                                     ctx.lambda, rec.p0_size);
    if (!rep.rho.empty) rec.a_rho = rep.rho.radius;
    rec.a_mu = rep.mu.radius;
    rec.upper_applicable = rep.upper_gap.applicable;
    rec.lower_applicable = rep.lower_gap.applicable;
    if (!rep.rho.empty && res.events.m_hat > 0) {
        rec.upper_bound = rep.upper_gap.bound;
        rec.upper_prob_raw = rep.upper_gap.probability.raw;
        rec.upper_prob = rep.upper_gap.probability.clipped;
        if (rep.lower_gap.reason != "max J does not exceed a_mu") {
            rec.lower_bound = rep.lower_gap.bound;
            rec.lower_prob_raw = rep.lower_gap.probability.raw;
            rec.lower_prob = rep.lower_gap.probability.clipped;
        }
    }
}

} // namespace

RunRecord run_replication(const ReplicationContext& ctx, std::size_t replication, std::uint64_t seed)
{
    const auto& cfg = ctx.cfg;
    RunRecord rec;
    rec.lambda_true = ctx.lambda;
    rec.replication = replication;
    rec.seed = seed;
    rec.n_samples = ctx.dict.n_samples();
    rec.eta = ctx.eta;
    try {
        const GroundTruth truth = simulate_truth(ctx, seed);
        rec.m_true = truth.size();
        if (truth.size() > 0 && truth.arrivals.back() >= ctx.dict.grid().span())
            throw ParameterError("last arrival falls outside the sampling window");
        if (truth.size() > 0) {
            rec.lambda_c = ideal_rate(truth);
            const auto p0 = optimal_index_set(truth, ctx.dict.grid());
            rec.p0_size = p0.size();
            try {
                rec.lambda_opt = optimal_rate(p0, cfg.dt);
            } catch (const UndefinedRateError&) {
            }
        }
        const SampledSignal signal = synthesize_signal(truth, ctx.dict, cfg.sigma, seed);

        PipelineOptions opts;
        opts.sigma = cfg.sigma;
        opts.eta = ctx.eta;
        opts.r = cfg.r_fixed;
        opts.path = cfg.path;
        const PipelineResult res = run_pipeline(ctx.dict, signal, opts);
        rec.m_hat = res.events.m_hat;
        rec.lambda_hat = res.report.lambda_hat;
        rec.lambda_std = res.report.lambda_std;
        rec.selected_r = res.beta.r;
        rec.beta_l0 = res.beta.l0();
        if (!rec.lambda_hat) {
            rec.status = "undefined_rate";
            rec.note = res.report.lambda_hat_note;
        }
        if (cfg.evaluate_bounds) fill_bounds(rec, ctx, truth, res);
    } catch (const NonConvergenceError& e) {
        rec.status = "nonconvergence";
        rec.note = e.what();
    } catch (const PathExhaustedError& e) {
        rec.status = "path_exhausted";
        rec.note = e.what();
    } catch (const std::exception& e) {
        rec.status = "error";
        rec.note = e.what();
    }
    return rec;
}

ExperimentResults run_experiment(const ExperimentConfig& cfg)
{
    cfg.validate();
    ExperimentResults out;
    const std::size_t reps = cfg.replications;
    out.records.resize(cfg.lambda_grid.size() * reps);
    unsigned workers = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());

    for (std::size_t li = 0; li < cfg.lambda_grid.size(); ++li) {
        const ReplicationContext ctx(cfg, cfg.lambda_grid[li]);
        std::atomic<std::size_t> next{0};
        auto work = [&] {
            for (std::size_t r = next++; r < reps; r = next++) {
                const std::size_t run = li * reps + r;
                out.records[run] = run_replication(ctx, r, cfg.seed + run);
            }
        };
        std::vector<std::thread> pool;
        const unsigned n = static_cast<unsigned>(std::min<std::size_t>(workers, reps));
        for (unsigned t = 1; t < n; ++t) pool.emplace_back(work);
        work();
        for (auto& t : pool) t.join();
    }
    std::stable_sort(out.records.begin(), out.records.end(), [](const RunRecord& a, const RunRecord& b) {
        return a.lambda_true < b.lambda_true ||
               (a.lambda_true == b.lambda_true && a.replication < b.replication);
    });
    out.summary = summarize(out.records);
    return out;
}

double quantile(const std::vector<double>& sorted, double q)
{
    if (sorted.empty()) throw ParameterError("quantile of empty data");
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

namespace {

const std::vector<std::pair<std::string, std::optional<double> RunRecord::*>> kEstimators{
    {"lambda_c", &RunRecord::lambda_c},
    {"lambda_opt", &RunRecord::lambda_opt},
    {"lambda_hat", &RunRecord::lambda_hat},
    {"lambda_std", &RunRecord::lambda_std},
};

} // namespace

std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records)
{
    std::map<double, std::vector<const RunRecord*>> by_lambda;
    for (const auto& r : records) by_lambda[r.lambda_true].push_back(&r);
    std::vector<SummaryRow> rows;
    for (const auto& [lambda, recs] : by_lambda) {
        for (const auto& [name, field] : kEstimators) {
            std::vector<double> v;
            for (const auto* r : recs)
                if (r->*field) v.push_back(*(r->*field));
            SummaryRow row;
            row.lambda = lambda;
            row.estimator = name;
            row.count = v.size();
            if (!v.empty()) {
                std::sort(v.begin(), v.end());
                row.median = quantile(v, 0.5);
                row.q1 = quantile(v, 0.25);
                row.q3 = quantile(v, 0.75);
                row.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
                double ss = 0.0;
                for (double x : v) ss += (x - row.mean) * (x - row.mean);
                row.variance = v.size() > 1 ? ss / static_cast<double>(v.size() - 1) : 0.0;
            }
            rows.push_back(row);
        }
    }
    return rows;
}

std::optional<LinearFit> fit_line(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size()) throw ParameterError("fit_line needs equal-length inputs");
    const std::size_t n = x.size();
    if (n < 2) return std::nullopt;
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (!(sxx > 0.0) || !(syy > 0.0)) return std::nullopt;
    LinearFit fit;
    fit.n = n;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.pearson = sxy / std::sqrt(sxx * syy);
    return fit;
}

const std::vector<std::string>& record_columns()
{
    static const std::vector<std::string> cols{
        "lambda_true", "replication", "seed",          "n_samples",   "status",
        "m_true",      "m_hat",       "lambda_c",      "lambda_opt",  "lambda_hat",
        "lambda_std",  "selected_r",  "eta",           "beta_l0",     "p0_size",
        "alpha",       "a_rho",       "a_mu",          "upper_applicable", "upper_bound",
        "upper_prob_raw", "upper_prob", "lower_applicable", "lower_bound", "lower_prob_raw",
        "lower_prob",  "note"};
    return cols;
}

namespace {

std::string cell(const std::optional<double>& v) { return v ? format_real(*v) : std::string(); }
std::string cell(const std::optional<std::size_t>& v) { return v ? std::to_string(*v) : std::string(); }

// Notes are free text; keep the CSV one line per record.
std::string quote(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else if (c == '\n') out += ' ';
        else out += c;
    }
    return out + "\"";
}

std::ofstream open_report(const fs::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

} // namespace

void emit_report(const ExperimentResults& results, const fs::path& out_dir)
{
    if (results.records.empty()) throw ParameterError("no records to report");
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

    {
        auto out = open_report(out_dir / "records.csv");
        const auto& cols = record_columns();
        for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
        out << '\n';
        for (const auto& r : results.records) {
            out << format_real(r.lambda_true) << ',' << r.replication << ',' << r.seed << ','
                << r.n_samples << ',' << r.status << ',' << r.m_true << ',' << r.m_hat << ','
                << cell(r.lambda_c) << ',' << cell(r.lambda_opt) << ',' << cell(r.lambda_hat) << ','
                << cell(r.lambda_std) << ',' << cell(r.selected_r) << ',' << cell(r.eta) << ','
                << r.beta_l0 << ',' << r.p0_size << ',' << cell(r.alpha) << ',' << cell(r.a_rho)
                << ',' << cell(r.a_mu) << ',' << int(r.upper_applicable) << ','
                << cell(r.upper_bound) << ',' << cell(r.upper_prob_raw) << ',' << cell(r.upper_prob)
                << ',' << int(r.lower_applicable) << ',' << cell(r.lower_bound) << ','
                << cell(r.lower_prob_raw) << ',' << cell(r.lower_prob) << ',' << quote(r.note)
                << '\n';
        }
        if (!out) throw IoError("write failed: records.csv");
    }
    {
        auto out = open_report(out_dir / "summary.csv");
        out << "lambda,estimator,count,median,q1,q3,mean,variance\n";
        for (const auto& s : results.summary) {
            out << format_real(s.lambda) << ',' << s.estimator << ',' << s.count << ',';
            if (s.count)
                out << format_real(s.median) << ',' << format_real(s.q1) << ',' << format_real(s.q3)
                    << ',' << format_real(s.mean) << ',' << format_real(s.variance);
            else
                out << ",,,,";
            out << '\n';
        }
        if (!out) throw IoError("write failed: summary.csv");
    }
    {
        std::vector<double> x, y;
        std::vector<const RunRecord*> used;
        for (const auto& r : results.records)
            if (r.lambda_opt && r.lambda_hat) {
                x.push_back(*r.lambda_opt);
                y.push_back(*r.lambda_hat);
                used.push_back(&r);
            }
        const auto fit = fit_line(x, y);
        auto out = open_report(out_dir / "scatter_lambda_opt.csv");
        out << "lambda_true,replication,lambda_opt,lambda_hat,ols_slope,ols_intercept,pearson_r\n";
        const std::string tail =
            fit ? format_real(fit->slope) + ',' + format_real(fit->intercept) + ',' + format_real(fit->pearson)
                : std::string(",,");
        for (std::size_t i = 0; i < used.size(); ++i)
            out << format_real(used[i]->lambda_true) << ',' << used[i]->replication << ','
                << format_real(x[i]) << ',' << format_real(y[i]) << ',' << tail << '\n';
        if (!out) throw IoError("write failed: scatter_lambda_opt.csv");
    }
}

} // namespace pileup
