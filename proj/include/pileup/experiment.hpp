#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pileup/dictionary.hpp"
#include "pileup/io.hpp"
#include "pileup/solver.hpp"

namespace pileup {

enum class SimulationCase { bank_shapes, random_shapes };  // cases I and II

struct EtaRule {
    enum class Kind { fixed, three_sigma, theoretical } kind = Kind::three_sigma;
    double value = 0.0;
};

struct ExperimentConfig {
    SimulationCase simulation_case = SimulationCase::bank_shapes;
    std::vector<double> lambda_grid{0.1};
    std::size_t events_per_signal = 50;
    std::optional<double> horizon;          // time-limit mode instead of an event count
    std::size_t replications = 100;
    double sigma = 1.0;
    double dt = 1.0;
    std::optional<std::size_t> n_samples;   // chosen per lambda when absent
    ShapeGrid shape_grid;
    std::pair<double, double> theta1_range{0.0, 10.0};  // case II draws from (lo, hi]
    std::pair<double, double> theta2_range{0.0, 2.0};
    double energy_mean = 50.0;
    double energy_std = 2.2360679774997898;  // variance 5
    std::optional<EnergyBounds> energy_bounds;  // default: mean -/+ 6 std
    EtaRule eta_rule;
    std::optional<double> r_fixed;          // residual-matched when absent
    PathOptions path;
    bool evaluate_bounds = false;
    std::uint64_t seed = 1;
    unsigned threads = 0;                   // 0: hardware concurrency

    EnergyBounds energy() const;
    void validate() const;
};

ExperimentConfig parse_experiment_config(const Json& j);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Sample count used for a given lambda: the configured one, or enough room for
/// M + 6 sqrt(M) arrivals plus one pulse length, rounded up to even.
std::size_t samples_for(const ExperimentConfig& cfg, double lambda);

struct RunRecord {
    double lambda_true = 0.0;
    std::size_t replication = 0;
    std::uint64_t seed = 0;
    std::size_t n_samples = 0;
    std::string status = "ok";  // ok | undefined_rate | nonconvergence | path_exhausted | error
    std::string note;
    std::size_t m_true = 0;
    std::size_t m_hat = 0;
    std::optional<double> lambda_c;
    std::optional<double> lambda_opt;
    std::optional<double> lambda_hat;
    std::optional<double> lambda_std;
    std::optional<double> selected_r;
    std::optional<double> eta;
    std::size_t beta_l0 = 0;
    std::size_t p0_size = 0;
    // bound fields, filled when bounds are evaluated
    std::optional<double> alpha;
    std::optional<std::size_t> a_rho;
    std::optional<std::size_t> a_mu;
    bool upper_applicable = false;
    std::optional<double> upper_bound;
    std::optional<double> upper_prob_raw;
    std::optional<double> upper_prob;
    bool lower_applicable = false;
    std::optional<double> lower_bound;
    std::optional<double> lower_prob_raw;
    std::optional<double> lower_prob;
};

struct SummaryRow {
    double lambda = 0.0;
    std::string estimator;
    std::size_t count = 0;
    double median = 0.0;
    double q1 = 0.0;
    double q3 = 0.0;
    double mean = 0.0;
    double variance = 0.0;  // unbiased, 0 for a single value
};

struct ExperimentResults {
    std::vector<RunRecord> records;    // sorted by (lambda, replication)
    std::vector<SummaryRow> summary;
};

/// Everything shared by the replications at one lambda.
struct ReplicationContext {
    ReplicationContext(const ExperimentConfig& cfg, double lambda);
    const ExperimentConfig& cfg;
    double lambda;
    Dictionary dict;
    std::optional<CorrelationProfile> profile;
    double eta = 0.0;
};

/// Arrivals, energies and shapes of one replication (signal not synthesized).
GroundTruth simulate_truth(const ReplicationContext& ctx, std::uint64_t seed);

RunRecord run_replication(const ReplicationContext& ctx, std::size_t replication,
                          std::uint64_t seed);

ExperimentResults run_experiment(const ExperimentConfig& cfg);

/// Type-7 (linear interpolation) quantile of sorted data.
double quantile(const std::vector<double>& sorted, double q);
std::vector<SummaryRow> summarize(const std::vector<RunRecord>& records);

struct LinearFit {
    std::size_t n = 0;
    double slope = 0.0;
    double intercept = 0.0;
    double pearson = 0.0;
};
/// Least squares y = slope x + intercept and the Pearson correlation; empty when
/// fewer than two points or either variable is constant.
std::optional<LinearFit> fit_line(const std::vector<double>& x, const std::vector<double>& y);

/// Writes records.csv, summary.csv and scatter_lambda_opt.csv into out_dir.
void emit_report(const ExperimentResults& results, const std::filesystem::path& out_dir);

/// Column names of records.csv in order.
const std::vector<std::string>& record_columns();

} // namespace pileup
