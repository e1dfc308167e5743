#include "pileup/solver.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>

#include <Eigen/Sparse>

#include "pileup/errors.hpp"

namespace pileup {

SparseRegressor::SparseRegressor(std::size_t n_columns, std::size_t n_shapes,
                                 std::vector<Coefficient> entries)
    : n_columns_(n_columns), n_shapes_(n_shapes), entries_(std::move(entries))
{
    if (n_shapes_ == 0) throw ParameterError("regressor needs at least one shape per block");
    std::sort(entries_.begin(), entries_.end(),
              [](const Coefficient& a, const Coefficient& b) { return a.column < b.column; });
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (!(entries_[i].value > 0.0)) throw ParameterError("stored coefficients must be positive");
        if (entries_[i].column >= n_columns_) throw ParameterError("coefficient column out of range");
        if (i > 0 && entries_[i].column == entries_[i - 1].column)
            throw ParameterError("duplicate coefficient column");
    }
}

SparseRegressor SparseRegressor::from_dense(std::span<const double> beta, std::size_t n_shapes)
{
    std::vector<Coefficient> e;
    for (std::size_t n = 0; n < beta.size(); ++n)
        if (beta[n] > 0.0) e.push_back({n, beta[n]});
    return SparseRegressor(beta.size(), n_shapes, std::move(e));
}

std::vector<double> SparseRegressor::dense() const
{
    std::vector<double> out(n_columns_, 0.0);
    for (const auto& c : entries_) out[c.column] = c.value;
    return out;
}

std::map<std::size_t, double> SparseRegressor::block_l1() const
{
    std::map<std::size_t, double> out;
    for (const auto& c : entries_) out[c.column / n_shapes_] += c.value;
    return out;
}

std::vector<std::size_t> SparseRegressor::block_pattern() const
{
    std::vector<std::size_t> out;
    for (const auto& c : entries_) {
        const std::size_t k = c.column / n_shapes_;
        if (out.empty() || out.back() != k) out.push_back(k);
    }
    return out;
}

SparseRegressor SparseRegressor::restricted_to(const std::vector<std::size_t>& keep) const
{
    std::vector<Coefficient> e;
    for (const auto& c : entries_)
        if (std::binary_search(keep.begin(), keep.end(), c.column / n_shapes_)) e.push_back(c);
    SparseRegressor out(n_columns_, n_shapes_, std::move(e));
    out.r = r;
    return out;
}

namespace {

double squared_norm(std::span<const double> v)
{
    return std::inner_product(v.begin(), v.end(), v.begin(), 0.0);
}

class CoordinateDescent {
  public:
    CoordinateDescent(const Dictionary& dict, std::span<const double> y, double r,
                      std::span<const double> warm)
        : dict_(dict), y_(y), r_(r), inv_n_(1.0 / static_cast<double>(dict.n_samples())),
          beta_(dict.n_columns(), 0.0), diag_(dict.n_columns())
    {
        for (std::size_t n = 0; n < diag_.size(); ++n) diag_[n] = dict.column_energy(n);
        if (!warm.empty()) {
            if (warm.size() != beta_.size()) throw ParameterError("warm start has wrong length");
            for (std::size_t n = 0; n < beta_.size(); ++n)
                beta_[n] = (warm[n] > 0.0 && diag_[n] > 0.0) ? warm[n] : 0.0;
        }
        refresh_residual();
        rebuild_active();
    }

    double full_sweep()
    {
        double change = 0.0;
        for (std::size_t n = 0; n < beta_.size(); ++n) change = std::max(change, update(n));
        rebuild_active();
        return change;
    }

    double active_sweep()
    {
        double change = 0.0;
        for (std::size_t n : active_) change = std::max(change, update(n));
        return change;
    }

    // Active-set refinement: solve the quadratic exactly on the current face; when the
    // face minimizer leaves the orthant, move to the first boundary hit, drop the
    // zeroed coefficients and solve again on the smaller face. Blocks at least tau
    // apart do not interact, so each connected run of active blocks is solved alone.
    void polish()
    {
        rebuild_active();
        if (active_.empty()) return;
        bool changed = false;
        std::size_t first = 0;
        for (std::size_t i = 1; i <= active_.size(); ++i) {
            if (i == active_.size() ||
                dict_.block_of(active_[i]) >= dict_.block_of(active_[i - 1]) + dict_.tau()) {
                changed |= polish_component(std::span<const std::size_t>(active_).subspan(first, i - first));
                first = i;
            }
        }
        if (!changed) return;
        refresh_residual();
        rebuild_active();
    }

    void refresh_residual()
    {
        residual_.assign(y_.begin(), y_.end());
        for (std::size_t n = 0; n < beta_.size(); ++n)
            if (beta_[n] != 0.0) dict_.add_column(n, -beta_[n], residual_);
    }

    double objective() const
    {
        double l1 = 0.0;
        for (std::size_t n : active_) l1 += beta_[n];
        return 0.5 * inv_n_ * squared_norm(residual_) + r_ * l1;
    }

    double objective_exact() const
    {
        double l1 = 0.0;
        for (double b : beta_) l1 += b;
        return 0.5 * inv_n_ * squared_norm(residual_) + r_ * l1;
    }

    double kkt() const
    {
        double worst = 0.0;
        for (std::size_t n = 0; n < beta_.size(); ++n) {
            if (diag_[n] <= 0.0) continue;
            const double slack = dict_.column_dot(n, residual_) * inv_n_ - r_;
            worst = std::max(worst, beta_[n] > 0.0 ? std::abs(slack) : slack);
        }
        return worst;
    }

    SparseRegressor result(double violation, std::size_t sweeps) const
    {
        auto out = SparseRegressor::from_dense(beta_, dict_.n_shapes());
        out.r = r_;
        out.objective = objective_exact();
        out.kkt_violation = violation;
        out.sweeps = sweeps;
        return out;
    }

  private:
    // Returns whether the coefficients of `face` were changed.
    bool polish_component(std::span<const std::size_t> face)
    {
        constexpr int kPolishRounds = 50;
        const auto m = static_cast<Eigen::Index>(face.size());
        std::vector<Eigen::Triplet<double>> entries;
        Eigen::VectorXd b(m), start(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            const std::size_t ci = face[static_cast<std::size_t>(i)];
            start(i) = beta_[ci];
            b(i) = dict_.column_dot(ci, y_) * inv_n_ - r_;
            entries.emplace_back(i, i, diag_[ci]);
            for (Eigen::Index j = i + 1; j < m; ++j) {
                const std::size_t cj = face[static_cast<std::size_t>(j)];
                if (dict_.block_of(cj) >= dict_.block_of(ci) + dict_.tau()) break;
                const double v = dict_.gram_entry(ci, cj);
                if (v == 0.0) continue;
                entries.emplace_back(i, j, v);
                entries.emplace_back(j, i, v);
            }
        }
        Eigen::SparseMatrix<double> g(m, m);
        g.setFromTriplets(entries.begin(), entries.end());
        // objective restricted to the face, up to a constant
        auto quad = [&](const Eigen::VectorXd& x) { return 0.5 * x.dot(g * x) - b.dot(x); };

        Eigen::VectorXd current = start;
        std::vector<Eigen::Index> keep(static_cast<std::size_t>(m));
        std::iota(keep.begin(), keep.end(), Eigen::Index{0});
        std::vector<Eigen::Index> slot(static_cast<std::size_t>(m));
        bool moved = false;
        for (int round = 0; round < kPolishRounds && !keep.empty(); ++round) {
            const auto k = static_cast<Eigen::Index>(keep.size());
            std::fill(slot.begin(), slot.end(), -1);
            for (Eigen::Index i = 0; i < k; ++i) slot[static_cast<std::size_t>(keep[i])] = i;
            std::vector<Eigen::Triplet<double>> sub;
            double top = 0.0;
            for (const auto& t : entries) {
                const auto si = slot[static_cast<std::size_t>(t.row())];
                const auto sj = slot[static_cast<std::size_t>(t.col())];
                if (si >= 0 && sj >= 0) sub.emplace_back(si, sj, t.value());
                if (t.row() == t.col()) top = std::max(top, t.value());
            }
            Eigen::VectorXd bs(k), cur(k);
            for (Eigen::Index i = 0; i < k; ++i) {
                bs(i) = b(keep[i]);
                cur(i) = current(keep[i]);
            }
            // Proximal Newton step: a tiny pull toward the current point keeps nearly
            // collinear faces solvable without changing well-determined directions.
            const double damping = 1e-12 * top;
            for (Eigen::Index i = 0; i < k; ++i) sub.emplace_back(i, i, damping);
            Eigen::SparseMatrix<double> gs(k, k);
            gs.setFromTriplets(sub.begin(), sub.end());
            // columns are sorted by block, so the face Gram is banded already
            const Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>, Eigen::Lower,
                                        Eigen::NaturalOrdering<int>>
                ldlt(gs);
            if (ldlt.info() != Eigen::Success) break;
            const Eigen::VectorXd target = ldlt.solve(bs + damping * cur);
            if (ldlt.info() != Eigen::Success || !target.allFinite()) break;

            double step = 1.0;
            Eigen::Index blocking = -1;
            for (Eigen::Index i = 0; i < k; ++i)
                if (target(i) <= 0.0) {
                    const double s = cur(i) / (cur(i) - target(i));
                    if (s < step) {
                        step = s;
                        blocking = i;
                    }
                }
            moved = true;
            if (blocking < 0) {
                for (Eigen::Index i = 0; i < k; ++i) current(keep[i]) = target(i);
                break;
            }
            // Stop at the first bound, unless a projected step along the bent path
            // does better; the latter can release many coordinates at once.
            Eigen::VectorXd best = current;
            for (Eigen::Index i = 0; i < k; ++i) {
                const double v = cur(i) + step * (target(i) - cur(i));
                best(keep[i]) = (i == blocking || v <= 0.0) ? 0.0 : v;
            }
            double best_q = quad(best);
            for (double s = 1.0; s > 4.0 * step; s *= 0.5) {
                Eigen::VectorXd trial = current;
                for (Eigen::Index i = 0; i < k; ++i)
                    trial(keep[i]) = std::max(0.0, cur(i) + s * (target(i) - cur(i)));
                const double q = quad(trial);
                if (q < best_q) {
                    best_q = q;
                    best = std::move(trial);
                    break;
                }
            }
            current = std::move(best);
            std::vector<Eigen::Index> next;
            for (Eigen::Index i : keep)
                if (current(i) > 0.0) next.push_back(i);
            keep = std::move(next);
        }
        if (!moved || !(quad(current) < quad(start))) return false;
        for (Eigen::Index i = 0; i < m; ++i) beta_[face[static_cast<std::size_t>(i)]] = current(i);
        return true;
    }

    double update(std::size_t n)
    {
        const double d = diag_[n];
        if (d <= 0.0) return 0.0;
        const double old = beta_[n];
        const double grad = dict_.column_dot(n, residual_) * inv_n_;
        const double next = std::max(0.0, old + (grad - r_) / d);
        const double delta = next - old;
        if (delta == 0.0) return 0.0;
        beta_[n] = next;
        dict_.add_column(n, -delta, residual_);
        return std::abs(delta) / (1.0 + std::abs(next));
    }

    void rebuild_active()
    {
        active_.clear();
        for (std::size_t n = 0; n < beta_.size(); ++n)
            if (beta_[n] > 0.0) active_.push_back(n);
    }

    const Dictionary& dict_;
    std::span<const double> y_;
    double r_;
    double inv_n_;
    std::vector<double> beta_;
    std::vector<double> diag_;
    std::vector<double> residual_;
    std::vector<std::size_t> active_;
};

} // namespace

SparseRegressor nnlasso(const Dictionary& dict, std::span<const double> y, double r,
                        const SolverOptions& options, std::span<const double> warm_start)
{
    if (!(r >= 0.0) || !std::isfinite(r)) throw ParameterError("sparsity parameter must be >= 0");
    if (y.size() != dict.n_samples()) throw ParameterError("signal length does not match the dictionary");
    if (!(options.tol > 0.0)) throw ParameterError("solver tolerance must be positive");

    // active-only passes between exact face solves
    constexpr std::size_t kActiveSweeps = 25;
    CoordinateDescent cd(dict, y, r, warm_start);
    std::size_t sweeps = 0;
    double violation = INFINITY;
    [[maybe_unused]] double last_objective = cd.objective_exact();

    while (sweeps < options.max_sweeps) {
        const double change = cd.full_sweep();
        ++sweeps;
#ifndef NDEBUG
        const double now = cd.objective_exact();
        assert(now <= last_objective + 1e-12 * (1.0 + std::abs(last_objective)));
        last_objective = now;
#endif
        if (change <= options.tol) {
            cd.refresh_residual();
            violation = cd.kkt();
            if (violation <= options.tol) return cd.result(violation, sweeps);
        }
        for (std::size_t inner_sweeps = 0; inner_sweeps < kActiveSweeps && sweeps < options.max_sweeps;
             ++inner_sweeps) {
            const double inner = cd.active_sweep();
            ++sweeps;
            if (inner <= options.tol) break;
        }
        cd.polish();
    }
    cd.refresh_residual();
    violation = cd.kkt();
    if (violation <= options.tol) return cd.result(violation, sweeps);
    throw NonConvergenceError("nonnegative lasso did not reach tolerance within " +
                                  std::to_string(options.max_sweeps) + " sweeps",
                              cd.result(violation, sweeps));
}

double kkt_residual(const Dictionary& dict, std::span<const double> y, double r,
                    const SparseRegressor& beta)
{
    const std::vector<double> dense = beta.dense();
    std::vector<double> residual(y.begin(), y.end());
    for (const auto& c : beta.entries()) dict.add_column(c.column, -c.value, residual);
    const double inv_n = 1.0 / static_cast<double>(dict.n_samples());
    double worst = 0.0;
    for (std::size_t n = 0; n < dict.n_columns(); ++n) {
        if (dict.column_energy(n) <= 0.0) continue;
        const double slack = dict.column_dot(n, residual) * inv_n - r;
        worst = std::max(worst, dense[n] > 0.0 ? std::abs(slack) : slack);
    }
    return worst;
}

double r_max(const Dictionary& dict, std::span<const double> y)
{
    if (y.size() != dict.n_samples()) throw ParameterError("signal length does not match the dictionary");
    const double inv_n = 1.0 / static_cast<double>(dict.n_samples());
    double best = 0.0;
    for (std::size_t n = 0; n < dict.n_columns(); ++n)
        best = std::max(best, dict.column_dot(n, y) * inv_n);
    return best;
}

double lasso_objective(const Dictionary& dict, std::span<const double> y, double r,
                       const SparseRegressor& beta)
{
    std::vector<double> residual(y.begin(), y.end());
    double l1 = 0.0;
    for (const auto& c : beta.entries()) {
        dict.add_column(c.column, -c.value, residual);
        l1 += c.value;
    }
    return 0.5 * squared_norm(residual) / static_cast<double>(dict.n_samples()) + r * l1;
}

RSelection select_r(const Dictionary& dict, std::span<const double> y, double sigma,
                    const PathOptions& options)
{
    if (!(sigma > 0.0)) throw ParameterError("noise level must be positive for r selection");
    if (!(options.path_factor > 0.0 && options.path_factor < 1.0))
        throw ParameterError("path factor must lie in (0, 1)");

    const double target = sigma * std::sqrt(static_cast<double>(dict.n_samples()));
    const double top = r_max(dict, y);
    if (top <= 0.0) {
        // beta = 0 at every r > 0; no path to walk
        const double res = std::sqrt(squared_norm(y));
        if (res <= target) {
            RSelection out{0.0, SparseRegressor(dict.n_columns(), dict.n_shapes(), {}), res, 0};
            out.beta.objective = 0.5 * res * res / static_cast<double>(dict.n_samples());
            return out;
        }
        throw PathExhaustedError("no positive correlation with the signal; residual criterion unmet",
                                 0.0, res);
    }

    std::vector<double> warm;
    double r = top;
    double res = 0.0;
    for (std::size_t k = 1; k <= options.max_steps; ++k) {
        r *= options.path_factor;
        SparseRegressor beta = nnlasso(dict, y, r, options.solver, warm);
        std::vector<double> residual(y.begin(), y.end());
        for (const auto& c : beta.entries()) dict.add_column(c.column, -c.value, residual);
        res = std::sqrt(squared_norm(residual));
        if (res <= target) return {r, std::move(beta), res, k};
        warm = beta.dense();
    }
    throw PathExhaustedError("residual criterion unmet along the whole r path (last r = " +
                                 std::to_string(r) + ", residual = " + std::to_string(res) +
                                 ", target = " + std::to_string(target) + ")",
                             r, res);
}

} // namespace pileup
