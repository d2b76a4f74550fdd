#include <doctest.h>

#include <cmath>
#include <random>

#include "evpinn/autodiff.hpp"
#include "evpinn/dynamics.hpp"

using namespace evpinn;

namespace {

// Reference tanh from its exponential definition in extended precision,
// independent of std::tanh and of the tape.
double tanh_reference(double x) {
    const long double e2x = expl(2.0L * static_cast<long double>(x));
    return static_cast<double>((e2x - 1.0L) / (e2x + 1.0L));
}

// Random expression trees over {add, mul, tanh, pow-const}, bounded depth.
Var random_expr(Tape& tape, const std::vector<Var>& leaves, std::mt19937_64& rng, int depth) {
    const auto pick_leaf = [&]() { return leaves[rng() % leaves.size()]; };
    if (depth <= 0 || rng() % 4 == 0) return pick_leaf();
    switch (rng() % 4) {
        case 0:
            return random_expr(tape, leaves, rng, depth - 1) +
                   random_expr(tape, leaves, rng, depth - 1);
        case 1:
            return random_expr(tape, leaves, rng, depth - 1) *
                   random_expr(tape, leaves, rng, depth - 1);
        case 2:
            return tanh(random_expr(tape, leaves, rng, depth - 1));
        default:
            return pow(random_expr(tape, leaves, rng, depth - 1), rng() % 2 == 0 ? 2.0 : 3.0);
    }
}

}  // namespace

TEST_CASE("lift creates leaves with the given value") {
    Tape tape;
    CHECK(tape.lift(3.0).value == 3.0);
    CHECK(tape.lift(0.0).value == 0.0);

    const Var c = tape.lift(7.5);
    const auto adj = backward(c);
    CHECK(gradient(adj, c) == 1.0);  // d c / d c
}

TEST_CASE("apply computes the cached values") {
    Tape tape;
    const Var two = tape.lift(2.0);
    const Var three = tape.lift(3.0);
    CHECK((two * three).value == 6.0);
    CHECK(tanh(tape.lift(0.0)).value == 0.0);
    CHECK(tanh(tape.lift(0.5)).value == doctest::Approx(tanh_reference(0.5)).epsilon(1e-14));
    CHECK(tanh_reference(0.5) == doctest::Approx(0.462117).epsilon(1e-5));
}

TEST_CASE("domain violations throw instead of producing NaN") {
    Tape tape;
    const Var x = tape.lift(1.0);
    const Var zero = tape.lift(0.0);
    CHECK_THROWS_AS(x / zero, std::domain_error);
    CHECK_THROWS_AS(log(tape.lift(-1.0)), std::domain_error);
    CHECK_THROWS_AS(log(zero), std::domain_error);
}

TEST_CASE("backward: product partials") {
    Tape tape;
    const Var x = tape.lift(2.0);
    const Var y = tape.lift(3.0);
    const auto adj = backward(x * y);
    CHECK(gradient(adj, x) == 3.0);
    CHECK(gradient(adj, y) == 2.0);
}

TEST_CASE("backward: tanh derivative matches central differences") {
    Tape tape;
    const Var x = tape.lift(0.5);
    const auto adj = backward(tanh(x));
    const double h = 1e-6;
    const double fd = (std::tanh(0.5 + h) - std::tanh(0.5 - h)) / (2.0 * h);
    CHECK(gradient(adj, x) == doctest::Approx(fd).epsilon(1e-9));
    CHECK(gradient(adj, x) == doctest::Approx(0.786448).epsilon(1e-5));
}

TEST_CASE("backward: pow-const cubic") {
    Tape tape;
    const Var x = tape.lift(2.0);
    const auto adj = backward(pow(x, 3.0));
    CHECK(gradient(adj, x) == 12.0);
}

TEST_CASE("backward: abs subgradient at zero is 0") {
    Tape tape;
    const Var x = tape.lift(0.0);
    const auto adj = backward(abs(x));
    CHECK(gradient(adj, x) == 0.0);
}

TEST_CASE("backward: unreachable leaves get zero") {
    Tape tape;
    const Var x = tape.lift(2.0);
    const Var unused = tape.lift(5.0);
    const auto adj = backward(x * x);
    CHECK(gradient(adj, unused) == 0.0);
}

TEST_CASE("check_gradient: sum of squares") {
    const ExprBuilder f = [](Tape& tape, const std::vector<Var>& x) {
        Var acc = tape.lift(0.0);
        for (const Var& xi : x) acc = acc + square(xi);
        return acc;
    };
    const Eigen::Vector3d at(1.0, 2.0, 3.0);
    CHECK(check_gradient(f, at, 1e-5) < 1e-8);

    // the analytic gradient itself
    Tape tape;
    std::vector<Var> leaves{tape.lift(1.0), tape.lift(2.0), tape.lift(3.0)};
    const auto adj = backward(f(tape, leaves));
    CHECK(gradient(adj, leaves[0]) == doctest::Approx(2.0));
    CHECK(gradient(adj, leaves[1]) == doctest::Approx(4.0));
    CHECK(gradient(adj, leaves[2]) == doctest::Approx(6.0));
}

TEST_CASE("check_gradient: constant expression has zero error") {
    const ExprBuilder f = [](Tape& tape, const std::vector<Var>&) { return tape.lift(4.2); };
    CHECK(check_gradient(f, Eigen::Vector2d(1.0, -1.0), 1e-5) == 0.0);
}

TEST_CASE("check_gradient: battery power w.r.t. (eta, m, c_rr, c_d)") {
    const VehiclePreset preset = vehicle_preset("model3lr");
    const ExprBuilder f = [&](Tape& tape, const std::vector<Var>& x) {
        const PhysParamsT<Var> phys{x[0], tape.lift(preset.initial.mu), x[1], x[2], x[3]};
        return battery_power(tape.lift(30.0), tape.lift(0.0), preset.fixed, phys);
    };
    Eigen::Vector4d at(preset.initial.eta, preset.initial.mass, preset.initial.c_rr,
                       preset.initial.c_d);
    CHECK(check_gradient(f, at, 1e-5) < 1e-6);
}

TEST_CASE("gradient correctness on random expression graphs") {
    std::mt19937_64 rng(20240811);
    int cases = 0;
    while (cases < 120) {
        const int n_leaves = 2 + static_cast<int>(rng() % 4);
        Eigen::VectorXd at(n_leaves);
        for (int i = 0; i < n_leaves; ++i)
            at[i] = -1.5 + 3.0 * static_cast<double>(rng() % 1000) / 999.0;
        const std::uint64_t expr_seed = rng();
        const ExprBuilder f = [&](Tape& tape, const std::vector<Var>& leaves) {
            std::mt19937_64 expr_rng(expr_seed);
            return random_expr(tape, leaves, expr_rng, 8);
        };
        CHECK(check_gradient(f, at, 1e-5) < 1e-6);
        ++cases;
    }
}

TEST_CASE("linearity of backward") {
    std::mt19937_64 rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        Tape tape;
        std::vector<Var> leaves;
        for (int i = 0; i < 3; ++i)
            leaves.push_back(tape.lift(-1.0 + 2.0 * static_cast<double>(rng() % 1000) / 999.0));
        std::mt19937_64 rf(rng()), rg(rng());
        const Var f = random_expr(tape, leaves, rf, 5);
        const Var g = random_expr(tape, leaves, rg, 5);
        const double a = 2.5, b = -1.25;
        const Var combo = a * f + b * g;

        const auto adj_f = backward(f);
        const auto adj_g = backward(g);
        const auto adj_c = backward(combo);
        for (const Var& leaf : leaves) {
            const double expect = a * gradient(adj_f, leaf) + b * gradient(adj_g, leaf);
            const double got = gradient(adj_c, leaf);
            CHECK(std::abs(got - expect) <= 1e-12 * std::max(1.0, std::abs(expect)));
        }
    }
}

TEST_CASE("determinism: identical construction gives bit-identical values and gradients") {
    auto build = [] {
        Tape tape;
        const Var x = tape.lift(0.7);
        const Var y = tape.lift(-0.3);
        const Var f = tanh(x * y + pow(x, 3.0)) * exp(y) + abs(y) / (x + 2.0);
        const auto adj = backward(f);
        return std::pair<double, Eigen::VectorXd>(f.value, adj);
    };
    const auto [v1, g1] = build();
    const auto [v2, g2] = build();
    CHECK(v1 == v2);
    CHECK(g1 == g2);
}

TEST_CASE("replaying the tape reproduces every cached value exactly") {
    Tape tape;
    const Var x = tape.lift(1.3);
    const Var y = tape.lift(0.4);
    (void)(tanh(x / y) - exp(y * y) + log(x) * pow(y, 2.0));
    const Eigen::VectorXd replayed = tape.replay();
    REQUIRE(replayed.size() == static_cast<Eigen::Index>(tape.size()));
    for (Eigen::Index i = 0; i < replayed.size(); ++i)
        CHECK(replayed[i] == tape.value(static_cast<std::int32_t>(i)));
}

TEST_CASE("topological invariant: operands precede their node") {
    Tape tape;
    const Var x = tape.lift(2.0);
    (void)(tanh(x) * x + exp(x));
    for (std::size_t i = 0; i < tape.nodes().size(); ++i) {
        const auto& n = tape.nodes()[i];
        CHECK(n.a < static_cast<std::int32_t>(i));
        CHECK(n.b < static_cast<std::int32_t>(i));
    }
}

TEST_CASE("overflow surfaces as an error") {
    Tape tape;
    Var x = tape.lift(1e200);
    CHECK_THROWS_AS(backward(x * x * x), std::overflow_error);
}
