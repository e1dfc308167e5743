#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "pileup/dictionary.hpp"
#include "pileup/estimation.hpp"
#include "pileup/signal.hpp"
#include "pileup/solver.hpp"

namespace pileup {

/// Every scalar the recovery and confidence bounds depend on.
struct BoundInputs {
    double e_min = 0.0;
    double e_max = 0.0;
    double sigma = 1.0;
    double alpha = 0.0;    // discrepancy ||delta||_2 / sqrt(N)
    double g_min = 0.0;    // min_{i,j} G(i,j)
    double g_mass = 0.0;   // sum over offsets of per-block maximal correlation
    std::size_t tau = 1;
    std::size_t p = 1;
    std::size_t n = 2;
    double dt = 1.0;
    double r = 0.0;
    double eta = 0.0;
};

BoundInputs make_bound_inputs(const Dictionary& dict, const CorrelationProfile& profile,
                              EnergyBounds energy, double sigma, double alpha, double r, double eta);

/// Probability expression as computed and clipped to [0, 1].
struct Probability {
    double raw = 0.0;
    double clipped = 0.0;
    static Probability of(double raw);
};

/// exp(-x^2/2) / (x sqrt(2 pi)); x must be positive.
double tail_t(double x);

/// E_min^2 sqrt(g_min) / (4 (2 tau + 1) E_max); empty when g_min <= 0.
std::optional<double> theoretical_eta(const BoundInputs& in);

struct Admissibility {
    bool applicable = false;  // g_min > 0
    bool holds = false;       // r + alpha < E_min^2 sqrt(g_min) / (2 E_max), strictly
    double margin = 0.0;      // right side minus left side
};
Admissibility check_r_admissible(const BoundInputs& in);

struct Prop2Probabilities {
    bool applicable = false;  // r > alpha and g_min > 0
    Probability forward;      // every true block has a selected block nearby
    Probability converse;     // a selected block has a true block nearby
};
Prop2Probabilities prop2_probabilities(const BoundInputs& in, std::size_t beta_l0);

struct CorrelationLevel {
    bool empty = false;  // no level in [0, 1] satisfies the defining condition
    double level = 0.0;
    std::size_t radius = 0;
};

/// sup of rho in [0,1] with eta <= C_{r,rho} / ((1 - rho) |T_rho|), |T_rho| = 2 a_rho + 1.
CorrelationLevel rho_r(const CorrelationProfile& profile, const BoundInputs& in);
/// sup of rho in [0,1] with rho * 2 (tau - a_rho) <= eta g_min^{3/2} / E_max.
CorrelationLevel mu_level(const CorrelationProfile& profile, const BoundInputs& in);

struct IndexInterval {
    long lo;
    long hi;
};
/// Connected components of a union of integer intervals; adjacent intervals merge.
std::size_t interval_count(std::vector<IndexInterval> intervals);

struct GapBound {
    bool applicable = false;
    std::string reason;           // first failed hypothesis when not applicable
    double bracket = 0.0;
    double bound = 0.0;           // lambda_hat * bracket
    Probability probability;
};

/// Upper confidence bound on lambda_hat(r, eta) - lambda_opt.
GapBound theorem1_gap(const EventEstimate& events, const SparseRegressor& beta_post,
                      std::size_t a_rho, std::size_t a_mu, const BoundInputs& in,
                      std::size_t beta_l0);

/// Lower confidence bound on lambda_hat(r, eta) - lambda_opt; needs (lambda dt)^2 N a_rho < 1.
GapBound theorem2_gap(const EventEstimate& events, const SparseRegressor& beta_post,
                      std::size_t a_rho, std::size_t a_mu, const BoundInputs& in,
                      double lambda_nominal, std::size_t beta_l0, std::size_t p0_size);

/// 1 - lambda^2 T delta, empty unless 0 < lambda^2 T delta < 1 with delta > 0.
std::optional<double> lemma2_separation_probability(double lambda, double t_total, double delta);

struct Lemma1Bounds {
    double block_l1_max;     // E_max / sqrt(g_min)
    double gram_inf_min;     // sqrt(g_min) E_min^2 / E_max
};
Lemma1Bounds lemma1_bounds(double g_min, EnergyBounds energy);

/// Upper estimate of the discrepancy alpha: every group of events sharing a nearest
/// block is fitted by NNLS on that block, with the block energy projected into
/// [E_min, E_max] when `energy` is given, and alpha = ||ybar - A beta||_2 / sqrt(N).
double discrepancy_alpha(const GroundTruth& truth, const Dictionary& dict,
                         std::optional<EnergyBounds> energy = std::nullopt);

/// Coefficients of the feasible point used by discrepancy_alpha (dense, length Np).
std::vector<double> discrepancy_coefficients(const GroundTruth& truth, const Dictionary& dict,
                                             std::optional<EnergyBounds> energy);

struct IrrepresentabilityReport {
    bool singular = false;
    bool too_large = false;
    bool entries_nonnegative = false;
    double min_entry = 0.0;
    double max_row_sum = 0.0;
    bool holds = false;
    double r_threshold = 0.0;  // r must exceed this for support recovery
};

/// Block irrepresentability of P0: with M = G_{P0c,P0} G_{P0,P0}^{-1}, the condition
/// M z < (1 - eta0) 1 for every z <= 1 holds iff M >= 0 entrywise and every row sum
/// is below 1 - eta0.
IrrepresentabilityReport irrepresentability_check(const Dictionary& dict,
                                                  const std::vector<std::size_t>& p0, double eta0,
                                                  double sigma, double alpha);

/// Everything the confidence analysis reports for one estimate.
struct BoundReport {
    BoundInputs inputs;
    std::optional<double> eta_theory;
    Admissibility admissibility;
    Prop2Probabilities prop2;
    CorrelationLevel rho;
    CorrelationLevel mu;
    GapBound upper_gap;  // theorem 1
    GapBound lower_gap;  // theorem 2
};

BoundReport evaluate_bounds(const CorrelationProfile& profile, const BoundInputs& inputs,
                            const EventEstimate& events, const SparseRegressor& beta,
                            const SparseRegressor& beta_post, double lambda_nominal,
                            std::size_t p0_size);

} // namespace pileup
