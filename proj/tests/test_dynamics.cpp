#include <doctest.h>

#include <cmath>
#include <random>

#include "evpinn/data.hpp"
#include "evpinn/dynamics.hpp"
#include "evpinn/rng.hpp"

using namespace evpinn;

namespace {
const VehiclePreset kModel3 = vehicle_preset("model3lr");
const VehiclePreset kModelS = vehicle_preset("modelS");
}  // namespace

TEST_CASE("presets carry the published starting values") {
    CHECK(kModel3.initial.eta == 0.7);
    CHECK(kModel3.initial.mu == 0.5);
    CHECK(kModel3.initial.mass == 1823.0);
    CHECK(kModel3.initial.c_rr == 0.0096);
    CHECK(kModel3.initial.c_d == 0.23);
    CHECK(kModel3.fixed.rho == 1.17);
    CHECK(kModel3.fixed.frontal_area == 2.22);
    CHECK(kModel3.fixed.p_aux == 1100.0);
    CHECK(kModel3.fixed.beta == -0.045);
    CHECK(kModel3.fixed.theta == 0.0);

    CHECK(kModelS.initial.mass == 2250.0);
    CHECK(kModelS.fixed.frontal_area == 2.40);
    CHECK(kModelS.fixed.p_aux == 390.0);

    CHECK_THROWS_AS(vehicle_preset("cybertruck"), std::invalid_argument);
}

TEST_CASE("force components at rest") {
    const auto f = force_components(0.0, 0.0, kModel3.fixed, kModel3.initial);
    CHECK(f.drag == 0.0);
    CHECK(f.inertia == 0.0);
    CHECK(f.gravity == 0.0);  // theta = 0
    CHECK(f.rolling ==
          doctest::Approx(0.0096 * 1823.0 * 9.81).epsilon(1e-12));
}

TEST_CASE("drag at 30 m/s matches the hand evaluation") {
    // 0.5 * 1.17 * 2.22 * 0.23 * 30^2 = 268.83 N
    const auto f = force_components(30.0, 0.0, kModel3.fixed, kModel3.initial);
    CHECK(f.drag == doctest::Approx(268.8309).epsilon(1e-6));
}

TEST_CASE("gravity force vanishes on flat roads for any input") {
    std::mt19937_64 rng(3);
    for (int i = 0; i < 20; ++i) {
        const auto f = force_components(uniform(rng, 0.0, 40.0), uniform(rng, -3.0, 3.0),
                                        kModel3.fixed, kModel3.initial);
        CHECK(f.gravity == 0.0);
    }
}

TEST_CASE("battery power at idle is exactly the auxiliary draw") {
    CHECK(battery_power(0.0, 0.0, kModel3.fixed, kModel3.initial) == 1100.0);
    CHECK(battery_power(0.0, 0.0, kModelS.fixed, kModelS.initial) == 390.0);
}

TEST_CASE("battery power at 30 m/s cruise") {
    // drag 0.5*1.17*2.22*0.23*27000 = 8064.927 W
    // rolling 0.0096*1823*9.81*30 = 5150.499264 W
    // (8064.927 + 5150.499264)/0.7 + 1100 = 19979.18 W
    const double p = battery_power(30.0, 0.0, kModel3.fixed, kModel3.initial);
    const double drag_w = 0.5 * 1.17 * 2.22 * 0.23 * 30.0 * 30.0 * 30.0;      // 8064.927
    const double rolling_w = 0.0096 * 1823.0 * 9.81 * 30.0;                   // 5150.485
    CHECK(p == doctest::Approx((drag_w + rolling_w) / 0.7 + 1100.0).epsilon(1e-12));
    CHECK(p == doctest::Approx(19979.0).epsilon(1e-3));
}

TEST_CASE("regenerating braking case") {
    // v=20, dvdt=-1 < beta, mu=0.5:
    // drag 0.298701*8000 = 2389.608 W, rolling 17.5008*9.81*20 = 3433.657 W,
    // inertia 1823*20*(-1)*(1-0.5) = -18230 W -> sum/0.7 + 1100 = -16623.907 W
    const double p = battery_power(20.0, -1.0, kModel3.fixed, kModel3.initial);
    const double drag_w = 0.5 * 1.17 * 2.22 * 0.23 * 20.0 * 20.0 * 20.0;
    const double rolling_w = 0.0096 * 1823.0 * 9.81 * 20.0;
    const double inertia_w = 1823.0 * 20.0 * -1.0 * (1.0 - 0.5);
    const double expect = (drag_w + rolling_w + inertia_w) / 0.7 + 1100.0;
    CHECK(p == doctest::Approx(expect).epsilon(1e-12));
    CHECK(p == doctest::Approx(-16624.0).epsilon(1e-4));
    CHECK(p < 0.0);  // net regeneration
}

TEST_CASE("regen_power") {
    CHECK(regen_power(20.0, 0.0, kModel3.initial, kModel3.fixed) == 0.0);
    // -mu*m*v*dvdt = 0.5*1823*20*1 = 18230 W recovered
    CHECK(regen_power(20.0, -1.0, kModel3.initial, kModel3.fixed) ==
          doctest::Approx(0.5 * 1823.0 * 20.0 * 1.0).epsilon(1e-12));
    PhysParams no_regen = kModel3.initial;
    no_regen.mu = 0.0;
    CHECK(regen_power(20.0, -2.0, no_regen, kModel3.fixed) == 0.0);
    // threshold itself does not activate regen
    CHECK(regen_power(20.0, kModel3.fixed.beta, kModel3.initial, kModel3.fixed) == 0.0);
}

TEST_CASE("ground truth power is signed I*V") {
    CHECK(ground_truth_power(10.0, 400.0) == 4000.0);
    CHECK(ground_truth_power(0.0, 371.5) == 0.0);
    CHECK(ground_truth_power(-20.0, 395.0) == -7900.0);
}

TEST_CASE("force balance ties battery power to the force sum") {
    // eta*(P - P_aux)/v == F_drag + F_rolling + F_gravity + F_inertia
    // for v > 0 and dvdt >= beta, including nonzero incline.
    std::mt19937_64 rng(12);
    for (int i = 0; i < 50; ++i) {
        FixedParams fixed = kModel3.fixed;
        fixed.theta = uniform(rng, -0.05, 0.05);
        const double v = uniform(rng, 0.5, 40.0);
        const double dvdt = uniform(rng, fixed.beta, 2.5);
        const double p = battery_power(v, dvdt, fixed, kModel3.initial);
        const auto f = force_components(v, dvdt, fixed, kModel3.initial);
        const double lhs = kModel3.initial.eta * (p - fixed.p_aux) / v;
        const double rhs = f.drag + f.rolling + f.gravity + f.inertia;
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-9));
    }
}

TEST_CASE("battery power is strictly increasing in v at dvdt=0") {
    double prev = battery_power(0.0, 0.0, kModel3.fixed, kModel3.initial);
    for (double v = 0.5; v <= 45.0; v += 0.5) {
        const double p = battery_power(v, 0.0, kModel3.fixed, kModel3.initial);
        CHECK(p > prev);
        prev = p;
    }
}

TEST_CASE("the regen indicator makes power discontinuous exactly at beta") {
    const double v = 15.0;
    const double beta = kModel3.fixed.beta;
    const double eps = 1e-12;
    const double left = battery_power(v, beta - eps, kModel3.fixed, kModel3.initial);
    const double right = battery_power(v, beta + eps, kModel3.fixed, kModel3.initial);
    const double at = battery_power(v, beta, kModel3.fixed, kModel3.initial);

    // left limit carries the (1 - mu) factor; the jump is mu*m*v*beta/eta
    const double jump = kModel3.initial.mu * kModel3.initial.mass * v * beta /
                        kModel3.initial.eta;
    CHECK(at == doctest::Approx(right).epsilon(1e-9));
    CHECK(right - left == doctest::Approx(jump).epsilon(1e-4));

    PhysParams no_regen = kModel3.initial;
    no_regen.mu = 0.0;
    const double l0 = battery_power(v, beta - eps, kModel3.fixed, no_regen);
    const double r0 = battery_power(v, beta + eps, kModel3.fixed, no_regen);
    CHECK(l0 == doctest::Approx(r0).epsilon(1e-9));  // continuous when mu=0
}

TEST_CASE("battery power agrees between plain reals and tape variables") {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 40; ++i) {
        const double v = uniform(rng, 0.0, 40.0);
        const double dvdt = uniform(rng, -3.0, 3.0);
        const double plain = battery_power(v, dvdt, kModel3.fixed, kModel3.initial);

        Tape tape;
        const PhysParamsT<Var> phys{tape.lift(kModel3.initial.eta), tape.lift(kModel3.initial.mu),
                                    tape.lift(kModel3.initial.mass),
                                    tape.lift(kModel3.initial.c_rr),
                                    tape.lift(kModel3.initial.c_d)};
        const Var taped = battery_power(tape.lift(v), tape.lift(dvdt), kModel3.fixed, phys);
        CHECK(taped.value == doctest::Approx(plain).epsilon(1e-12));
    }
}

TEST_CASE("battery_power_series matches elementwise evaluation") {
    Eigen::VectorXd v(3), a(3);
    v << 0.0, 20.0, 30.0;
    a << 0.0, -1.0, 0.0;
    const Eigen::VectorXd p = battery_power_series(v, a, kModel3.fixed, kModel3.initial);
    for (int i = 0; i < 3; ++i)
        CHECK(p[i] == battery_power(v[i], a[i], kModel3.fixed, kModel3.initial));
}

TEST_CASE("bounds clamping") {
    PhysParams wild{1.7, -0.2, 9000.0, 0.5, 1.4};
    const PhysParams c = clamp_to_bounds(wild);
    CHECK(within_bounds(c));
    CHECK(c.eta == 1.0);
    CHECK(c.mu == 0.0);
    CHECK(c.mass == 5000.0);
    CHECK(c.c_rr == 0.1);
    CHECK(c.c_d == 1.0);
    CHECK(within_bounds(clamp_to_bounds(PhysParams{-1.0, 2.0, 0.0, -1.0, 0.0})));
    CHECK(within_bounds(kModel3.initial));
}

TEST_CASE("estimate_aux_power on an idle log") {
    const Eigen::Index n = 1000;
    DriveLog log;
    log.t.setLinSpaced(n, 0.0, static_cast<double>(n - 1));
    log.v = Eigen::VectorXd::Zero(n);
    log.dvdt = Eigen::VectorXd::Zero(n);

    SUBCASE("constant power recovers exactly") {
        log.power = Eigen::VectorXd::Constant(n, 1100.0);
        CHECK(estimate_aux_power(log) == 1100.0);
    }

    SUBCASE("zero-mean noise averages out to within 2 W") {
        Eigen::VectorXd p = Eigen::VectorXd::Constant(n, 1100.0);
        std::mt19937_64 rng(123);
        for (Eigen::Index i = 0; i < n; ++i) p[i] += 10.0 * gaussian(rng);
        log.power = p;
        CHECK(estimate_aux_power(log) == doctest::Approx(1100.0).epsilon(2.0 / 1100.0));
    }

    SUBCASE("a log with no idle samples is an error") {
        log.v = Eigen::VectorXd::Constant(n, 20.0);
        log.power = Eigen::VectorXd::Constant(n, 15000.0);
        CHECK_THROWS_WITH_AS(estimate_aux_power(log), doctest::Contains("no idle"),
                             std::runtime_error);
    }
}
