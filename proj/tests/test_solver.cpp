#include "doctest.h"

#include <cmath>

#include "oracles.hpp"
#include "pileup/dictionary.hpp"
#include "pileup/errors.hpp"
#include "pileup/random.hpp"
#include "pileup/signal.hpp"
#include "pileup/solver.hpp"

using namespace pileup;

namespace {

struct Instance {
    ShapeGrid shapes;
    Dictionary dict;
    Eigen::MatrixXd a;
    std::vector<double> y;
};

// Sparse nonnegative ground truth on the dictionary plus Gaussian noise.
Instance make_instance(std::size_t n, std::vector<double> theta1, double theta2, std::size_t tau,
                       std::uint64_t seed, double noise = 0.3)
{
    auto shapes = ShapeGrid::cartesian(theta1, {theta2}, tau);
    Dictionary dict(shapes, SamplingGrid(n, 1.0));
    Eigen::MatrixXd a = oracle::dense_dictionary(shapes, n);
    auto rng = make_rng(seed, Stream::misc);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> z(0.0, noise);
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(a.cols());
    for (Eigen::Index j = 0; j < beta.size(); ++j)
        if (u(rng) < 0.1) beta(j) = 1.0 + 4.0 * u(rng);
    Eigen::VectorXd yv = a * beta;
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = yv(static_cast<Eigen::Index>(i)) + z(rng);
    return {shapes, std::move(dict), std::move(a), std::move(y)};
}

Eigen::VectorXd as_vector(const std::vector<double>& v)
{
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace

TEST_CASE("zero signal and large r give the empty solution")
{
    const auto inst = make_instance(32, {1.0, 2.0}, 1.0, 4, 1);
    const std::vector<double> zero(32, 0.0);
    const auto b0 = nnlasso(inst.dict, zero, 0.5);
    CHECK(b0.empty());
    CHECK(b0.objective == 0.0);
    CHECK(r_max(inst.dict, zero) == 0.0);

    const double top = r_max(inst.dict, inst.y);
    const auto b1 = nnlasso(inst.dict, inst.y, top);
    CHECK(b1.empty());
    CHECK(kkt_residual(inst.dict, inst.y, top, b1) == 0.0);
    CHECK(nnlasso(inst.dict, inst.y, 2.0 * top).empty());
}

TEST_CASE("r_max: dense oracle and unit column")
{
    const auto inst = make_instance(40, {1.0, 2.0, 3.0}, 1.5, 6, 2);
    const Eigen::VectorXd c = inst.a.transpose() * as_vector(inst.y) / 40.0;
    CHECK(r_max(inst.dict, inst.y) == doctest::Approx(std::max(0.0, c.maxCoeff())).epsilon(1e-12));

    std::vector<double> col(40);
    for (std::size_t i = 0; i < 40; ++i) col[i] = inst.a(static_cast<Eigen::Index>(i), 3 * 10 + 1);
    CHECK(r_max(inst.dict, col) == doctest::Approx(1.0).epsilon(1e-12));

    std::vector<double> neg(40, -1.0);
    CHECK(r_max(inst.dict, neg) == 0.0);
}

TEST_CASE("oracle self checks")
{
    const auto inst = make_instance(16, {1.0, 2.0}, 1.0, 3, 3);
    CHECK(oracle::brute_force(inst.a, Eigen::VectorXd::Zero(16), 0.2).isZero());

    // r = 0 with full column rank: nonnegative least squares
    const auto small = make_instance(24, {1.0}, 1.0, 3, 4);
    const Eigen::MatrixXd a = small.a.leftCols(8);
    const Eigen::VectorXd y = as_vector(small.y);
    const Eigen::VectorXd x = oracle::brute_force(a, y, 0.0);
    const Eigen::VectorXd g = a.transpose() * (y - a * x);
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        CHECK(x(j) >= 0.0);
        if (x(j) > 0.0) CHECK(std::abs(g(j)) < 1e-9);
        else CHECK(g(j) <= 1e-9);
    }
}

TEST_CASE("projected gradient oracle agrees with support enumeration")
{
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        // 6 samples x 2 shapes = 12 columns
        const auto inst = make_instance(6, {1.0, 2.0}, 1.0, 3, 100 + seed, 0.5);
        const Eigen::VectorXd y = as_vector(inst.y);
        const double top = (inst.a.transpose() * y / 6.0).maxCoeff();
        const double r = 0.05 * top + 0.01;
        const Eigen::VectorXd x1 = oracle::brute_force(inst.a, y, r);
        const Eigen::VectorXd x2 = oracle::enumerate_supports(inst.a, y, r);
        CHECK((x1 - x2).cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("nnlasso matches the oracle on a random instance")
{
    const auto inst = make_instance(32, {1.0, 2.0}, 1.0, 4, 7);
    const double r = 0.1;
    const auto beta = nnlasso(inst.dict, inst.y, r);
    const Eigen::VectorXd ref = oracle::brute_force(inst.a, as_vector(inst.y), r);
    const Eigen::VectorXd got = as_vector(beta.dense());
    CHECK((got - ref).cwiseAbs().maxCoeff() <= 1e-6);
    const double f_got = oracle::objective(inst.a, as_vector(inst.y), r, got);
    const double f_ref = oracle::objective(inst.a, as_vector(inst.y), r, ref);
    CHECK(std::abs(f_got - f_ref) <= 1e-10);
    CHECK(beta.objective == doctest::Approx(f_got).epsilon(1e-10));
    CHECK(lasso_objective(inst.dict, inst.y, r, beta) == doctest::Approx(f_got).epsilon(1e-12));
    CHECK(beta.kkt_violation <= 1e-8);
    CHECK(oracle::kkt(inst.a, as_vector(inst.y), r, ref) <= 1e-8);
    for (const auto& c : beta.entries()) CHECK(c.value > 0.0);
}

TEST_CASE("kkt residual against the dense formula and under perturbation")
{
    const auto inst = make_instance(32, {1.0, 2.5}, 1.2, 5, 9);
    const double r = 0.2;
    const auto beta = nnlasso(inst.dict, inst.y, r);
    CHECK(kkt_residual(inst.dict, inst.y, r, beta) <= 1e-8);

    REQUIRE_FALSE(beta.empty());
    const double eps = 1e-4;
    auto dense = beta.dense();
    const std::size_t n = beta.entries().front().column;
    dense[n] += eps;
    const auto moved = SparseRegressor::from_dense(dense, inst.dict.n_shapes());
    const double v = kkt_residual(inst.dict, inst.y, r, moved);
    CHECK(v == doctest::Approx(oracle::kkt(inst.a, as_vector(inst.y), r, as_vector(dense))).epsilon(1e-9));
    // first order: coordinate n moves by eps * G_nn, every other slack by at most eps * |G_jn|
    const double v0 = beta.kkt_violation;
    const double g_nn = inst.dict.column_energy(n);
    CHECK(v >= eps * g_nn - v0 - 1e-12);
    const Eigen::VectorXd g_col = inst.a.transpose() * inst.a.col(static_cast<Eigen::Index>(n)) / 32.0;
    CHECK(v <= v0 + eps * g_col.cwiseAbs().maxCoeff() + 1e-12);
}

TEST_CASE("solver properties: warm starts, degenerate columns, nonconvergence, errors")
{
    const auto inst = make_instance(32, {1.0, 2.0, 3.0}, 1.0, 6, 11);
    const double r = 0.05;
    const auto cold = nnlasso(inst.dict, inst.y, r);
    const auto warm = nnlasso(inst.dict, inst.y, r, {}, nnlasso(inst.dict, inst.y, 2 * r).dense());
    CHECK((as_vector(cold.dense()) - as_vector(warm.dense())).cwiseAbs().maxCoeff() < 1e-6);
    for (const auto& c : cold.entries()) CHECK(inst.dict.block_of(c.column) != 31);

    SolverOptions tight;
    tight.max_sweeps = 1;
    tight.tol = 1e-14;
    bool thrown = false;
    try {
        nnlasso(inst.dict, inst.y, r, tight);
    } catch (const NonConvergenceError& e) {
        thrown = true;
        CHECK(e.violation() > 1e-14);
        CHECK(e.best().n_columns() == inst.dict.n_columns());
    }
    CHECK(thrown);

    CHECK_THROWS_AS(nnlasso(inst.dict, inst.y, -1.0), ParameterError);
    CHECK_THROWS_AS(nnlasso(inst.dict, std::vector<double>(30, 0.0), 0.1), ParameterError);
    SolverOptions bad;
    bad.tol = 0.0;
    CHECK_THROWS_AS(nnlasso(inst.dict, inst.y, 0.1, bad), ParameterError);
}

TEST_CASE("objective is non-increasing along a decreasing r path")
{
    const auto inst = make_instance(32, {1.0, 2.0}, 1.0, 5, 13);
    double r = r_max(inst.dict, inst.y);
    double last = INFINITY;
    std::vector<double> warm;
    for (int k = 0; k < 25; ++k) {
        r *= 0.8;
        const auto b = nnlasso(inst.dict, inst.y, r, {}, warm);
        CHECK(b.objective <= last + 1e-12);
        last = b.objective;
        warm = b.dense();
    }
}

TEST_CASE("sparse regressor views")
{
    const std::vector<double> dense{0.0, 2.0, 1.0, 0.0, 0.0, 0.0, 0.5, 0.0};
    const auto b = SparseRegressor::from_dense(dense, 2);
    CHECK(b.l0() == 3);
    CHECK(b.block_pattern() == std::vector<std::size_t>{0, 1, 3});
    const auto l1 = b.block_l1();
    CHECK(l1.at(0) == 2.0);
    CHECK(l1.at(1) == 1.0);
    CHECK(l1.at(3) == 0.5);
    CHECK(b.dense() == dense);
    const auto kept = b.restricted_to({1, 3});
    CHECK(kept.block_pattern() == std::vector<std::size_t>{1, 3});
    CHECK(kept.l0() == 2);
}

TEST_CASE("select_r: residual rule and its neighbours on the path")
{
    const auto inst = make_instance(64, {1.0, 2.0}, 1.0, 6, 17, 1.0);
    PathOptions opt;
    const auto sel = select_r(inst.dict, inst.y, 1.0, opt);
    const double target = std::sqrt(64.0);
    CHECK(sel.residual_norm <= target);
    const double top = r_max(inst.dict, inst.y);
    CHECK(sel.r == doctest::Approx(top * std::pow(0.9, static_cast<double>(sel.path_index))));
    if (sel.path_index > 1) {
        const double prev = top * std::pow(0.9, static_cast<double>(sel.path_index - 1));
        const auto b = nnlasso(inst.dict, inst.y, prev);
        auto res = inst.y;
        for (const auto& c : b.entries()) inst.dict.add_column(c.column, -c.value, res);
        double s = 0.0;
        for (double v : res) s += v * v;
        CHECK(std::sqrt(s) > target);
    }

    // huge sigma: the first visited r already qualifies
    const auto loose = select_r(inst.dict, inst.y, 1e6, opt);
    CHECK(loose.path_index == 1);
    CHECK(loose.r == doctest::Approx(0.9 * top));

    PathOptions short_path;
    short_path.max_steps = 2;
    CHECK_THROWS_AS(select_r(inst.dict, inst.y, 1e-3, short_path), PathExhaustedError);
    CHECK_THROWS_AS(select_r(inst.dict, inst.y, 0.0, opt), ParameterError);
    PathOptions bad;
    bad.path_factor = 1.0;
    CHECK_THROWS_AS(select_r(inst.dict, inst.y, 1.0, bad), ParameterError);
}

TEST_CASE("select_r on pure noise stops near r_max")
{
    const Dictionary dict(ShapeGrid::cartesian({1.0, 2.0}, {1.0}, 6), SamplingGrid(128, 1.0));
    std::vector<std::size_t> steps;
    for (std::uint64_t s = 0; s < 100; ++s) {
        auto rng = make_rng(s, Stream::noise);
        std::normal_distribution<double> z(0.0, 1.0);
        std::vector<double> y(128);
        for (auto& v : y) v = z(rng);
        try {
            steps.push_back(select_r(dict, y, 1.0).path_index);
        } catch (const PathExhaustedError&) {
            steps.push_back(41);
        }
    }
    std::sort(steps.begin(), steps.end());
    const std::size_t median = steps[50];
    MESSAGE("median selected path step on pure noise: " << median << " of 40 (decile "
                                                               << (median - 1) / 4 + 1 << ")");
    CHECK(median <= 20);
}
