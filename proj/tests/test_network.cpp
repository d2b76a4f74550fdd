#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>

#include "evpinn/network.hpp"
#include "evpinn/rng.hpp"

using namespace evpinn;

namespace {

// Straightforward layer recursion with std::tanh, independent of mlp_eval,
// mlp_forward and the tape.
Eigen::VectorXd naive_forward(const Network& net, Eigen::VectorXd x) {
    for (std::size_t k = 0; k < net.weights.size(); ++k) {
        Eigen::VectorXd z = net.biases[k];
        for (Eigen::Index r = 0; r < net.weights[k].rows(); ++r)
            for (Eigen::Index c = 0; c < net.weights[k].cols(); ++c)
                z[r] += net.weights[k](r, c) * x[c];
        if (net.activations[k] == Activation::Tanh)
            for (Eigen::Index r = 0; r < z.size(); ++r) z[r] = std::tanh(z[r]);
        x = z;
    }
    return x;
}

}  // namespace

TEST_CASE("mlp_new builds the expected shapes") {
    const Network pinn_net = mlp_new({2, 128, 128, 128, 128, 1}, Activation::Tanh, 1);
    REQUIRE(pinn_net.weights.size() == 5);
    CHECK(pinn_net.weights[0].rows() == 128);
    CHECK(pinn_net.weights[0].cols() == 2);
    CHECK(pinn_net.weights[4].rows() == 1);
    CHECK(pinn_net.weights[4].cols() == 128);
    CHECK(pinn_net.activations.back() == Activation::Identity);
    CHECK(pinn_net.activations.front() == Activation::Tanh);

    const Network stage = mlp_new({2, 32, 32, 32, 1}, Activation::Tanh, 2);
    CHECK(stage.parameter_count() == 2 * 32 + 32 + 2 * (32 * 32 + 32) + 32 + 1);

    for (std::size_t k = 0; k < pinn_net.biases.size(); ++k)
        CHECK(pinn_net.biases[k].isZero());
}

TEST_CASE("mlp_new rejects invalid sizes") {
    CHECK_THROWS_AS(mlp_new({3}, Activation::Tanh, 0), std::invalid_argument);
    CHECK_THROWS_AS(mlp_new({2, 0, 1}, Activation::Tanh, 0), std::invalid_argument);
}

TEST_CASE("mlp_new is deterministic in the seed") {
    const Network a = mlp_new({2, 16, 1}, Activation::Tanh, 42);
    const Network b = mlp_new({2, 16, 1}, Activation::Tanh, 42);
    const Network c = mlp_new({2, 16, 1}, Activation::Tanh, 43);
    CHECK(a.flatten() == b.flatten());
    CHECK(a.flatten() != c.flatten());
}

TEST_CASE("xavier initialization variance") {
    const Network net = mlp_new({128, 128, 1}, Activation::Tanh, 5);
    const auto& W = net.weights[0];
    const double mean = W.mean();
    const double var = (W.array() - mean).square().sum() / static_cast<double>(W.size() - 1);
    const double expected = 2.0 / (128.0 + 128.0);
    CHECK(var == doctest::Approx(expected).epsilon(0.2));
}

TEST_CASE("forward of a zero network is zero") {
    Network net = mlp_new({3, 8, 8, 1}, Activation::Tanh, 0);
    for (auto& W : net.weights) W.setZero();
    CHECK(mlp_eval(net, Eigen::Vector3d(1.0, -2.0, 0.5))[0] == 0.0);
}

TEST_CASE("single identity layer computes w*x + b") {
    Network net;
    net.layer_sizes = {1, 1};
    net.weights = {Eigen::MatrixXd::Constant(1, 1, 2.5)};
    net.biases = {Eigen::VectorXd::Constant(1, -0.75)};
    net.activations = {Activation::Identity};
    CHECK(mlp_eval(net, Eigen::VectorXd::Constant(1, 3.0))[0] == doctest::Approx(2.5 * 3.0 - 0.75));
}

TEST_CASE("mlp_eval matches an independent forward recursion") {
    const Network net = mlp_new({2, 8, 1}, Activation::Tanh, 99);
    std::mt19937_64 rng(17);
    for (int rep = 0; rep < 10; ++rep) {
        const Eigen::Vector2d x(uniform(rng, -2.0, 2.0), uniform(rng, -2.0, 2.0));
        const double got = mlp_eval(net, x)[0];
        const double expect = naive_forward(net, x)[0];
        CHECK(got == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("tape forward agrees with mlp_eval and reaches all parameters") {
    const Network net = mlp_new({2, 6, 6, 1}, Activation::Tanh, 3);
    Tape tape;
    const Eigen::Vector2d x(0.3, -0.8);
    const std::vector<Var> out = mlp_forward(net, x, tape);
    REQUIRE(out.size() == 1);
    CHECK(out[0].value == doctest::Approx(mlp_eval(net, x)[0]).epsilon(1e-12));

    const auto adj = backward(out[0]);
    // every parameter leaf got an adjoint slot
    CHECK(static_cast<Eigen::Index>(adj.size()) >= net.parameter_count());
}

TEST_CASE("batched forward matches per-sample evaluation") {
    const Network net = mlp_new({2, 8, 8, 1}, Activation::Tanh, 11);
    Eigen::MatrixXd X(2, 7);
    std::mt19937_64 rng(4);
    for (Eigen::Index i = 0; i < X.size(); ++i) X(i / 7, i % 7) = uniform(rng, -1.5, 1.5);
    ForwardCache cache;
    const Eigen::MatrixXd Y = mlp_forward_batch(net, X, cache);
    for (Eigen::Index j = 0; j < X.cols(); ++j)
        CHECK(Y(0, j) == doctest::Approx(naive_forward(net, X.col(j))[0]).epsilon(1e-12));
}

TEST_CASE("batched backward matches the tape gradients") {
    const Network net = mlp_new({2, 8, 8, 1}, Activation::Tanh, 21);
    const int n = 13;
    Eigen::MatrixXd X(2, n);
    Eigen::VectorXd target(n);
    std::mt19937_64 rng(9);
    for (int j = 0; j < n; ++j) {
        X(0, j) = uniform(rng, -1.0, 1.0);
        X(1, j) = uniform(rng, -1.0, 1.0);
        target[j] = uniform(rng, -1.0, 1.0);
    }

    // batched path: loss = mean (pred - target)^2
    ForwardCache cache;
    const Eigen::MatrixXd pred = mlp_forward_batch(net, X, cache);
    const Eigen::MatrixXd dY = (2.0 / n) * (pred.row(0).transpose() - target).transpose();
    NetGrads grads;
    mlp_backward_batch(net, cache, dY, grads);
    const Eigen::VectorXd batched = grads.flatten();

    // tape path: same loss built node by node
    Tape tape;
    const TapedNetwork taped = lift_network(net, tape);
    Var loss = tape.lift(0.0);
    for (int j = 0; j < n; ++j) {
        const std::vector<Var> x{tape.lift(X(0, j)), tape.lift(X(1, j))};
        loss = loss + square(taped.forward(x)[0] - target[j]);
    }
    loss = loss / static_cast<double>(n);
    const auto adj = backward(loss);
    const std::vector<Var> params = taped.all_params();

    REQUIRE(batched.size() == static_cast<Eigen::Index>(params.size()));
    for (Eigen::Index i = 0; i < batched.size(); ++i) {
        const double g_tape = gradient(adj, params[static_cast<std::size_t>(i)]);
        CHECK(std::abs(batched[i] - g_tape) <= 1e-10 * std::max(1.0, std::abs(g_tape)));
    }

    // and the input gradient
    Eigen::MatrixXd dX;
    mlp_backward_batch(net, cache, dY, grads, &dX);
    CHECK(dX.rows() == 2);
    CHECK(dX.cols() == n);
}

TEST_CASE("forward/backward consistency via check_gradient") {
    std::mt19937_64 rng(31);
    for (int rep = 0; rep < 3; ++rep) {
        const Network net = mlp_new({2, 5, 4, 1}, Activation::Tanh, rng());
        const Eigen::Vector2d x(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
        const ExprBuilder f = [&](Tape&, const std::vector<Var>& leaves) {
            const TapedNetwork taped = taped_from_flat(net, leaves);
            std::vector<Var> in{leaves[0].tape->lift(x[0]), leaves[0].tape->lift(x[1])};
            return taped.forward(in)[0];
        };
        CHECK(check_gradient(f, net.flatten(), 1e-5) < 1e-6);
    }
}

TEST_CASE("tanh_in_place agrees with std::tanh") {
    Eigen::MatrixXd x(1, 101);
    for (int i = 0; i <= 100; ++i) x(0, i) = -25.0 + 0.5 * i;
    Eigen::MatrixXd y = x;
    tanh_in_place(y);
    for (int i = 0; i <= 100; ++i)
        CHECK(y(0, i) == doctest::Approx(std::tanh(x(0, i))).epsilon(1e-14));
}

TEST_CASE("adam first step moves by about -lr * sign(gradient)") {
    Eigen::VectorXd params = Eigen::VectorXd::Zero(2);
    Eigen::VectorXd grads(2);
    grads << 0.3, -2.0;
    AdamState state(2);
    adam_step(params, grads, state, 0.01);
    CHECK(params[0] == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(params[1] == doctest::Approx(0.01).epsilon(1e-6));
    CHECK(state.t == 1);
}

TEST_CASE("adam with zero gradient leaves parameters and moments unchanged") {
    Eigen::VectorXd params(3);
    params << 1.0, -2.0, 0.5;
    const Eigen::VectorXd before = params;
    AdamState state(3);
    adam_step(params, Eigen::VectorXd::Zero(3), state, 0.1);
    CHECK(params == before);
    CHECK(state.m.isZero());
    CHECK(state.v.isZero());
}

TEST_CASE("adam with lr=0 is a no-op on parameters") {
    Eigen::VectorXd params(2);
    params << 0.4, -0.9;
    const Eigen::VectorXd before = params;
    AdamState state(2);
    Eigen::VectorXd grads(2);
    grads << 5.0, -3.0;
    adam_step(params, grads, state, 0.0);
    CHECK(params == before);
}

TEST_CASE("adam two steps with constant gradient match the hand recurrence") {
    // independent evaluation of the update rule
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8, g = 1.0;
    double m = 0.0, v = 0.0, x_expect = 0.0;
    for (int t = 1; t <= 2; ++t) {
        m = b1 * m + (1 - b1) * g;
        v = b2 * v + (1 - b2) * g * g;
        const double mh = m / (1 - std::pow(b1, t));
        const double vh = v / (1 - std::pow(b2, t));
        x_expect -= lr * mh / (std::sqrt(vh) + eps);
    }

    Eigen::VectorXd params = Eigen::VectorXd::Zero(1);
    AdamState state(1);
    const Eigen::VectorXd grads = Eigen::VectorXd::Constant(1, g);
    adam_step(params, grads, state, lr);
    const double after_one = params[0];
    adam_step(params, grads, state, lr);
    CHECK(after_one < 0.0);
    CHECK(params[0] < after_one);  // decreases monotonically
    CHECK(params[0] == doctest::Approx(x_expect).epsilon(1e-15));
}

TEST_CASE("clip_global_norm scales the joint norm") {
    Eigen::VectorXd a(2), b(1);
    a << 30.0, 0.0;
    b << 40.0;
    clip_global_norm({Eigen::Ref<Eigen::VectorXd>(a), Eigen::Ref<Eigen::VectorXd>(b)}, 10.0);
    CHECK(std::sqrt(a.squaredNorm() + b.squaredNorm()) == doctest::Approx(10.0));
    CHECK(a[0] == doctest::Approx(6.0));
    CHECK(b[0] == doctest::Approx(8.0));

    Eigen::VectorXd c(1);
    c << 3.0;
    clip_global_norm({Eigen::Ref<Eigen::VectorXd>(c)}, 10.0);
    CHECK(c[0] == 3.0);  // under the bound: untouched
}

TEST_CASE("network serialization round-trips bit-exactly") {
    const Network net = mlp_new({2, 16, 8, 1}, Activation::Tanh, 77);
    std::stringstream ss;
    save_network(net, ss);
    const Network back = load_network(ss);
    CHECK(back.layer_sizes == net.layer_sizes);
    CHECK(back.seed == net.seed);
    CHECK(back.flatten() == net.flatten());
    REQUIRE(back.activations.size() == net.activations.size());
    for (std::size_t i = 0; i < back.activations.size(); ++i)
        CHECK(back.activations[i] == net.activations[i]);
}

TEST_CASE("multiple networks concatenate in one stream") {
    const Network a = mlp_new({1, 4, 1}, Activation::Tanh, 1);
    const Network b = mlp_new({2, 3, 1}, Activation::Tanh, 2);
    std::stringstream ss;
    save_network(a, ss);
    save_network(b, ss);
    const Network a2 = load_network(ss);
    const Network b2 = load_network(ss);
    CHECK(a2.flatten() == a.flatten());
    CHECK(b2.flatten() == b.flatten());
}

TEST_CASE("model loader rejects corrupt input") {
    std::stringstream bad("not a model file at all............");
    CHECK_THROWS_WITH_AS(load_network(bad), doctest::Contains("bad magic"), std::runtime_error);

    const Network net = mlp_new({2, 4, 1}, Activation::Tanh, 0);
    std::stringstream ss;
    save_network(net, ss);
    const std::string full = ss.str();
    std::stringstream truncated(full.substr(0, full.size() / 2));
    CHECK_THROWS_AS(load_network(truncated), std::runtime_error);
}
