#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "evpinn/autodiff.hpp"

namespace evpinn {

enum class Activation : std::uint8_t { Identity = 0, Tanh = 1 };

/// Dense feedforward network. weights[k] has shape (sizes[k+1] x sizes[k]);
/// the output layer activation is always Identity (power and energy are
/// unbounded targets).
struct Network {
    std::vector<int> layer_sizes;
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;
    std::vector<Activation> activations;  // one per weight layer
    std::uint64_t seed = 0;

    int input_size() const { return layer_sizes.front(); }
    int output_size() const { return layer_sizes.back(); }
    std::size_t num_weight_layers() const { return weights.size(); }
    Eigen::Index parameter_count() const;

    /// Parameters in declaration order: per layer, weights row-major, then bias.
    Eigen::VectorXd flatten() const;
    void set_from_flat(const Eigen::Ref<const Eigen::VectorXd>& flat);
};

/// Xavier-uniform weights (+-sqrt(6/(fan_in+fan_out))), zero biases, hidden
/// activation as given, identity output. Deterministic in the seed.
Network mlp_new(const std::vector<int>& layer_sizes, Activation hidden, std::uint64_t seed);

/// Plain forward pass on a single input vector.
Eigen::VectorXd mlp_eval(const Network& net, const Eigen::Ref<const Eigen::VectorXd>& input);

/// Network weights/biases lifted onto a tape as leaf variables, so a backward
/// sweep reaches every parameter. Layout mirrors Network.
struct TapedNetwork {
    const Network* net = nullptr;
    // taped[k] packs layer k row-major weights followed by the bias, matching
    // Network::flatten order.
    std::vector<std::vector<Var>> params;

    std::vector<Var> forward(const std::vector<Var>& input) const;
    std::vector<Var> all_params() const;
};

TapedNetwork lift_network(const Network& net, Tape& tape);

/// Assembles a TapedNetwork around externally created leaf variables given in
/// Network::flatten order; `shape` supplies the layer structure only.
TapedNetwork taped_from_flat(const Network& shape, const std::vector<Var>& flat_params);

/// Forward pass built on the tape: lifts the network, lifts the input, runs
/// the layer recursion. For shared weights across many inputs use
/// lift_network + TapedNetwork::forward.
std::vector<Var> mlp_forward(const Network& net, const Eigen::Ref<const Eigen::VectorXd>& input,
                             Tape& tape);

/// Batched forward pass over a column-per-sample input matrix. Keeps
/// post-activation values for the backward pass.
struct ForwardCache {
    std::vector<Eigen::MatrixXd> acts;  // acts[0] = input, acts[k] = layer k output
};

Eigen::MatrixXd mlp_forward_batch(const Network& net, const Eigen::Ref<const Eigen::MatrixXd>& X,
                                  ForwardCache& cache);

struct NetGrads {
    std::vector<Eigen::MatrixXd> dW;
    std::vector<Eigen::VectorXd> db;

    Eigen::VectorXd flatten() const;
};

/// Reverse pass for mlp_forward_batch. dY is dLoss/dOutput (same shape as the
/// forward result). When dX is non-null it receives dLoss/dInput. Gradients
/// match the tape's backward() to floating-point roundoff; tests pin this.
void mlp_backward_batch(const Network& net, const ForwardCache& cache,
                        const Eigen::Ref<const Eigen::MatrixXd>& dY, NetGrads& grads,
                        Eigen::MatrixXd* dX = nullptr);

/// Elementwise tanh via a vectorized exp; std::tanh falls back to a scalar
/// libm call for doubles, which dominates training time otherwise. Agrees
/// with std::tanh to a few ulps.
void tanh_in_place(Eigen::MatrixXd& x);

struct AdamState {
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    long t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    explicit AdamState(Eigen::Index n)
        : m(Eigen::VectorXd::Zero(n)), v(Eigen::VectorXd::Zero(n)) {}
};

/// One Adam update with bias correction, in place.
void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads,
               AdamState& state, double lr);

/// Scales the gradient groups so their joint 2-norm is at most max_norm.
void clip_global_norm(std::vector<Eigen::Ref<Eigen::VectorXd>> grads, double max_norm);

// Versioned binary serialization (magic "EVPINN-MODEL-v1", little-endian
// payload). See docs/model_format.md for the exact layout. Multiple networks
// may be concatenated in one stream.
void save_network(const Network& net, std::ostream& out);
Network load_network(std::istream& in);
void save_network_file(const Network& net, const std::string& path);
Network load_network_file(const std::string& path);

}  // namespace evpinn
