// pileup-rate: simulation sweeps, single-signal estimation and bound evaluation.

#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "pileup/bounds.hpp"
#include "pileup/errors.hpp"
#include "pileup/estimation.hpp"
#include "pileup/experiment.hpp"
#include "pileup/io.hpp"

namespace {

using namespace pileup;

constexpr int kConfigError = 2;
constexpr int kIoError = 3;
constexpr int kNonConvergence = 4;

ShapeGrid shape_grid_from(const std::string& path)
{
    try {
        return load_shape_grid(path);
    } catch (const FormatError& e) {
        throw ParameterError(e.what());
    }
}

// r path settings: the "path" object of the JSON file, then command-line overrides.
PathOptions path_from(const std::string& path, std::optional<double> factor,
                      std::optional<std::size_t> steps)
{
    PathOptions opts;
    Json j;
    try {
        j = read_json(path);
    } catch (const FormatError& e) {
        throw ParameterError(e.what());
    }
    if (j.is_object() && j.contains("path")) {
        const auto& p = j.at("path");
        try {
            if (p.contains("factor")) opts.path_factor = p.at("factor").get<double>();
            if (p.contains("max_steps")) opts.max_steps = p.at("max_steps").get<std::size_t>();
            if (p.contains("tol")) opts.solver.tol = p.at("tol").get<double>();
            if (p.contains("max_sweeps")) opts.solver.max_sweeps = p.at("max_sweeps").get<std::size_t>();
        } catch (const Json::exception& e) {
            throw ParameterError(std::string("path: ") + e.what());
        }
    }
    if (factor) opts.path_factor = *factor;
    if (steps) opts.max_steps = *steps;
    return opts;
}

ExperimentConfig config_from(const std::string& path)
{
    try {
        return load_experiment_config(path);
    } catch (const FormatError& e) {
        throw ParameterError(e.what());
    }
}

struct SimArgs {
    std::string config, out;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
};

int cmd_sim(const SimArgs& a)
{
    auto cfg = config_from(a.config);
    if (a.seed) cfg.seed = *a.seed;
    if (a.threads) cfg.threads = *a.threads;
    const auto results = run_experiment(cfg);
    emit_report(results, a.out);
    std::size_t flagged = 0;
    for (const auto& r : results.records) flagged += r.status != "ok";
    std::cout << results.records.size() << " runs, " << flagged << " flagged, written to " << a.out
              << '\n';
    return 0;
}

struct GenerateArgs {
    std::string config, signal, truth;
    double lambda = 0.1;
    std::size_t replication = 0;
    std::optional<std::uint64_t> seed;
};

int cmd_generate(const GenerateArgs& a)
{
    auto cfg = config_from(a.config);
    if (a.seed) cfg.seed = *a.seed;
    cfg.lambda_grid = {a.lambda};
    const ReplicationContext ctx(cfg, a.lambda);
    const std::uint64_t seed = cfg.seed + a.replication;
    const GroundTruth truth = simulate_truth(ctx, seed);
    const auto signal = synthesize_signal(truth, ctx.dict, cfg.sigma, seed);
    write_signal(a.signal, signal);
    write_truth(a.truth, truth);
    std::cout << truth.size() << " events, " << signal.size() << " samples\n";
    return 0;
}

struct SolveArgs {
    std::string signal, dict_config, out;
    std::optional<double> r, sigma, dt, tol, path_factor;
    std::optional<std::size_t> max_steps;
    bool auto_r = false;
};

int cmd_solve(const SolveArgs& a)
{
    const auto grid = shape_grid_from(a.dict_config);
    const auto signal = load_signal(a.signal, a.dt, a.sigma);
    const Dictionary dict(grid, signal.grid);
    PathOptions path = path_from(a.dict_config, a.path_factor, a.max_steps);
    if (a.tol) path.solver.tol = *a.tol;
    SparseRegressor beta;
    if (a.r && a.auto_r) throw ParameterError("give either --r or --auto-r");
    if (a.r) {
        beta = nnlasso(dict, signal.samples, *a.r, path.solver);
    } else if (a.auto_r) {
        beta = select_r(dict, signal.samples, signal.noise_sigma, path).beta;
    } else {
        throw ParameterError("solve needs --r or --auto-r");
    }
    write_json(a.out, to_json(dict, beta));
    return 0;
}

struct EstimateArgs {
    std::string signal, dict_config, out, truth;
    std::optional<double> sigma, dt, eta, r, path_factor;
    std::optional<std::size_t> max_steps;
};

int cmd_estimate(const EstimateArgs& a)
{
    const auto grid = shape_grid_from(a.dict_config);
    const auto signal = load_signal(a.signal, a.dt, a.sigma);
    const Dictionary dict(grid, signal.grid);
    PipelineOptions opts;
    opts.sigma = signal.noise_sigma;
    opts.eta = a.eta;
    opts.r = a.r;
    opts.path = path_from(a.dict_config, a.path_factor, a.max_steps);
    auto res = run_pipeline(dict, signal, opts);
    if (!a.truth.empty()) {
        const auto truth = read_truth(a.truth);
        try {
            res.report.lambda_c = ideal_rate(truth);
        } catch (const UndefinedRateError&) {
        }
        try {
            res.report.lambda_opt = optimal_rate(optimal_index_set(truth, signal.grid), signal.grid.dt);
        } catch (const UndefinedRateError&) {
        }
    }
    Json j = to_json(res.report);
    j["beta_l0"] = res.beta.l0();
    j["n_samples"] = signal.size();
    j["dt"] = signal.grid.dt;
    j["sigma"] = signal.noise_sigma;
    j["padded"] = signal.padded;
    write_json(a.out, j);
    if (res.report.lambda_hat) std::cout << "lambda_hat " << format_real(*res.report.lambda_hat) << '\n';
    else std::cout << "lambda_hat undefined: " << res.report.lambda_hat_note << '\n';
    return 0;
}

struct BoundsArgs {
    std::string report, dict_config, truth, out;
    std::optional<double> e_min, e_max;
    double energy_mean = 50.0;
    double energy_std = std::sqrt(5.0);
};

int cmd_bounds(const BoundsArgs& a)
{
    const auto grid = shape_grid_from(a.dict_config);
    Json rep;
    try {
        rep = read_json(a.report);
    } catch (const FormatError& e) {
        throw ParameterError(e.what());
    }
    EventEstimate events;
    std::size_t n = 0, beta_l0 = 0;
    double dt = 1.0, sigma = 1.0;
    try {
        events.t_hat = rep.at("t_hat").get<std::vector<double>>();
        events.m_hat = rep.at("m_hat").get<std::size_t>();
        events.active_blocks = rep.at("active_blocks").get<std::vector<std::size_t>>();
        events.r = rep.at("r").get<double>();
        events.eta = rep.at("eta").get<double>();
        n = rep.at("n_samples").get<std::size_t>();
        dt = rep.at("dt").get<double>();
        sigma = rep.at("sigma").get<double>();
        beta_l0 = rep.at("beta_l0").get<std::size_t>();
    } catch (const Json::exception& e) {
        throw ParameterError(std::string("rate report: ") + e.what());
    }
    const Dictionary dict(grid, SamplingGrid(n, dt));
    const auto truth = read_truth(a.truth);
    auto energy = default_energy_bounds(a.energy_mean, a.energy_std);
    if (a.e_min) energy.e_min = *a.e_min;
    if (a.e_max) energy.e_max = *a.e_max;

    const auto profile = correlation_profile(dict);
    const double alpha = discrepancy_alpha(truth, dict, energy);
    const auto inputs = make_bound_inputs(dict, profile, energy, sigma, alpha, events.r, events.eta);
    // only the block pattern of the thresholded estimate matters to the bounds
    std::vector<Coefficient> marks;
    for (auto k : events.active_blocks) marks.push_back({dict.column(k, 0), 1.0});
    const SparseRegressor post(dict.n_columns(), dict.n_shapes(), marks);
    std::vector<Coefficient> filler;
    for (std::size_t i = 0; i < beta_l0; ++i) filler.push_back({i, 1.0});
    const SparseRegressor beta(std::max(dict.n_columns(), beta_l0), dict.n_shapes(), filler);
    const auto p0 = optimal_index_set(truth, dict.grid());
    double lambda_nominal = truth.lambda_true;
    if (!(lambda_nominal > 0.0)) lambda_nominal = ideal_rate(truth);
    const auto report = evaluate_bounds(profile, inputs, events, beta, post, lambda_nominal, p0.size());
    Json j = to_json(report);
    j["p0_size"] = p0.size();
    write_json(a.out, j);
    return 0;
}

struct DumpArgs {
    std::string dict_config, out;
    std::size_t n_samples = 0;
    double dt = 1.0;
};

int cmd_dict_dump(const DumpArgs& a)
{
    const auto grid = shape_grid_from(a.dict_config);
    const std::size_t n = a.n_samples ? a.n_samples : 2 * (grid.tau + 1);
    const Dictionary dict(grid, SamplingGrid(n, a.dt));
    std::ofstream out(a.out, std::ios::binary);
    if (!out) throw IoError("cannot write " + a.out);
    out << "shape,theta1,theta2,normalizer,offset,value\n";
    for (std::size_t s = 0; s < dict.n_shapes(); ++s) {
        const auto shape = dict.shape(s);
        for (std::size_t u = 0; u < shape.size(); ++u)
            out << s << ',' << format_real(dict.params(s).theta1) << ','
                << format_real(dict.params(s).theta2) << ',' << format_real(dict.normalizer(s)) << ','
                << u + 1 << ',' << format_real(shape[u]) << '\n';
    }
    if (!out) throw IoError("write failed: " + a.out);
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Counting-rate estimation of piled-up pulse trains"};
    app.require_subcommand(1);

    SimArgs sim;
    auto* c_sim = app.add_subcommand("sim", "Run a configured simulation sweep");
    c_sim->add_option("--config", sim.config, "experiment JSON")->required()->check(CLI::ExistingFile);
    c_sim->add_option("--out", sim.out, "output directory")->required();
    c_sim->add_option("--seed", sim.seed, "overrides the config seed");
    c_sim->add_option("--threads", sim.threads, "worker threads (0: all cores)");

    GenerateArgs gen;
    auto* c_gen = app.add_subcommand("generate", "Simulate one signal and its ground truth");
    c_gen->add_option("--config", gen.config, "experiment JSON")->required()->check(CLI::ExistingFile);
    c_gen->add_option("--lambda", gen.lambda, "intensity per unit time")->required();
    c_gen->add_option("--replication", gen.replication, "replication index");
    c_gen->add_option("--seed", gen.seed, "overrides the config seed");
    c_gen->add_option("--signal", gen.signal, "signal CSV to write")->required();
    c_gen->add_option("--truth", gen.truth, "ground-truth CSV to write")->required();

    SolveArgs solve;
    auto* c_solve = app.add_subcommand("solve", "Nonnegative LASSO fit of a signal");
    c_solve->add_option("--signal", solve.signal)->required()->check(CLI::ExistingFile);
    c_solve->add_option("--dict-config", solve.dict_config)->required()->check(CLI::ExistingFile);
    c_solve->add_option("--r", solve.r, "sparsity parameter");
    c_solve->add_flag("--auto-r", solve.auto_r, "residual-matched r");
    c_solve->add_option("--sigma", solve.sigma, "noise level (default: sidecar)");
    c_solve->add_option("--dt", solve.dt, "sampling period (default: sidecar)");
    c_solve->add_option("--tol", solve.tol, "convergence tolerance");
    c_solve->add_option("--path-factor", solve.path_factor, "r path ratio (default: config or 0.9)");
    c_solve->add_option("--max-steps", solve.max_steps, "r path length (default: config or 40)");
    c_solve->add_option("--out", solve.out)->required();

    EstimateArgs est;
    auto* c_est = app.add_subcommand("estimate", "Estimate the counting rate of a signal");
    c_est->add_option("--signal", est.signal)->required()->check(CLI::ExistingFile);
    c_est->add_option("--dict-config", est.dict_config)->required()->check(CLI::ExistingFile);
    c_est->add_option("--sigma", est.sigma, "noise level (default: sidecar)");
    c_est->add_option("--dt", est.dt, "sampling period (default: sidecar)");
    c_est->add_option("--eta", est.eta, "block threshold (default 3 sigma)");
    c_est->add_option("--r", est.r, "sparsity parameter (default: residual-matched)");
    c_est->add_option("--truth", est.truth, "ground truth for lambda_c and lambda_opt")
        ->check(CLI::ExistingFile);
    c_est->add_option("--path-factor", est.path_factor, "r path ratio (default: config or 0.9)");
    c_est->add_option("--max-steps", est.max_steps, "r path length (default: config or 40)");
    c_est->add_option("--out", est.out)->required();

    BoundsArgs bnd;
    auto* c_bnd = app.add_subcommand("bounds", "Evaluate the confidence bounds of an estimate");
    c_bnd->add_option("--report", bnd.report, "estimate output JSON")->required()->check(CLI::ExistingFile);
    c_bnd->add_option("--dict-config", bnd.dict_config)->required()->check(CLI::ExistingFile);
    c_bnd->add_option("--truth", bnd.truth)->required()->check(CLI::ExistingFile);
    c_bnd->add_option("--energy-mean", bnd.energy_mean);
    c_bnd->add_option("--energy-std", bnd.energy_std);
    c_bnd->add_option("--e-min", bnd.e_min);
    c_bnd->add_option("--e-max", bnd.e_max);
    c_bnd->add_option("--out", bnd.out)->required();

    DumpArgs dump;
    auto* c_dict = app.add_subcommand("dict", "Dictionary utilities");
    c_dict->require_subcommand(1);
    auto* c_dump = c_dict->add_subcommand("dump", "Write the shape bank as CSV");
    c_dump->add_option("--dict-config", dump.dict_config)->required()->check(CLI::ExistingFile);
    c_dump->add_option("--n-samples", dump.n_samples, "grid size used for normalization");
    c_dump->add_option("--dt", dump.dt);
    c_dump->add_option("--out", dump.out)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigError;
    }

    try {
        if (c_sim->parsed()) return cmd_sim(sim);
        if (c_gen->parsed()) return cmd_generate(gen);
        if (c_solve->parsed()) return cmd_solve(solve);
        if (c_est->parsed()) return cmd_estimate(est);
        if (c_bnd->parsed()) return cmd_bounds(bnd);
        if (c_dump->parsed()) return cmd_dict_dump(dump);
    } catch (const NonConvergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNonConvergence;
    } catch (const PathExhaustedError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kNonConvergence;
    } catch (const ParameterError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigError;
    } catch (const FormatError& e) {
        std::cerr << "input error: " << e.what() << '\n';
        return kIoError;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIoError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
