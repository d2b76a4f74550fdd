#include "evpinn/network.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "evpinn/rng.hpp"

namespace evpinn {

namespace {

constexpr char kMagic[] = "EVPINN-MODEL-v1\n";
constexpr std::size_t kMagicLen = 16;

void check_shapes(const Network& net) {
    const std::size_t layers = net.layer_sizes.size();
    if (layers < 2) throw std::invalid_argument("network: need at least 2 layers");
    if (net.weights.size() != layers - 1 || net.biases.size() != layers - 1 ||
        net.activations.size() != layers - 1) {
        throw std::invalid_argument("network: inconsistent layer arrays");
    }
}

Eigen::MatrixXd apply_activation(Activation act, Eigen::MatrixXd z) {
    if (act == Activation::Tanh) tanh_in_place(z);
    return z;
}

template <typename T>
void write_le(std::ostream& out, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
#endif
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    unsigned char buf[sizeof(T)];
    in.read(reinterpret_cast<char*>(buf), sizeof(T));
    if (!in) throw std::runtime_error("model file: truncated");
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
#endif
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

}  // namespace

void tanh_in_place(Eigen::MatrixXd& x) {
    // tanh(x) = (e^{2x} - 1) / (e^{2x} + 1); |x| clamped so e^{2x} cannot
    // overflow (tanh saturates to +-1 well before 20 at double precision).
    auto a = x.array();
    a = (2.0 * a.min(20.0).max(-20.0)).exp();
    a = (a - 1.0) / (a + 1.0);
}

Eigen::Index Network::parameter_count() const {
    Eigen::Index n = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) n += weights[k].size() + biases[k].size();
    return n;
}

Eigen::VectorXd Network::flatten() const {
    Eigen::VectorXd flat(parameter_count());
    Eigen::Index pos = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        const auto& W = weights[k];
        for (Eigen::Index r = 0; r < W.rows(); ++r)
            for (Eigen::Index c = 0; c < W.cols(); ++c) flat[pos++] = W(r, c);
        flat.segment(pos, biases[k].size()) = biases[k];
        pos += biases[k].size();
    }
    return flat;
}

void Network::set_from_flat(const Eigen::Ref<const Eigen::VectorXd>& flat) {
    if (flat.size() != parameter_count())
        throw std::invalid_argument("network: flat parameter size mismatch");
    Eigen::Index pos = 0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        auto& W = weights[k];
        for (Eigen::Index r = 0; r < W.rows(); ++r)
            for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = flat[pos++];
        biases[k] = flat.segment(pos, biases[k].size());
        pos += biases[k].size();
    }
}

Network mlp_new(const std::vector<int>& layer_sizes, Activation hidden, std::uint64_t seed) {
    if (layer_sizes.size() < 2) throw std::invalid_argument("mlp_new: need at least 2 layers");
    for (int s : layer_sizes)
        if (s < 1) throw std::invalid_argument("mlp_new: layer sizes must be >= 1");

    Network net;
    net.layer_sizes = layer_sizes;
    net.seed = seed;
    std::mt19937_64 rng(seed);
    const std::size_t nw = layer_sizes.size() - 1;
    for (std::size_t k = 0; k < nw; ++k) {
        const int fan_in = layer_sizes[k];
        const int fan_out = layer_sizes[k + 1];
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
        Eigen::MatrixXd W(fan_out, fan_in);
        for (Eigen::Index r = 0; r < W.rows(); ++r)
            for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = uniform(rng, -limit, limit);
        net.weights.push_back(std::move(W));
        net.biases.push_back(Eigen::VectorXd::Zero(fan_out));
        net.activations.push_back(k + 1 == nw ? Activation::Identity : hidden);
    }
    return net;
}

Eigen::VectorXd mlp_eval(const Network& net, const Eigen::Ref<const Eigen::VectorXd>& input) {
    check_shapes(net);
    if (input.size() != net.input_size())
        throw std::invalid_argument("mlp_eval: input size mismatch");
    Eigen::MatrixXd a = input;
    for (std::size_t k = 0; k < net.weights.size(); ++k) {
        Eigen::MatrixXd z = net.weights[k] * a + net.biases[k];
        a = apply_activation(net.activations[k], std::move(z));
    }
    return a.col(0);
}

TapedNetwork lift_network(const Network& net, Tape& tape) {
    check_shapes(net);
    TapedNetwork taped;
    taped.net = &net;
    taped.params.resize(net.weights.size());
    for (std::size_t k = 0; k < net.weights.size(); ++k) {
        const auto& W = net.weights[k];
        const auto& b = net.biases[k];
        auto& layer = taped.params[k];
        layer.reserve(static_cast<std::size_t>(W.size() + b.size()));
        for (Eigen::Index r = 0; r < W.rows(); ++r)
            for (Eigen::Index c = 0; c < W.cols(); ++c) layer.push_back(tape.lift(W(r, c)));
        for (Eigen::Index r = 0; r < b.size(); ++r) layer.push_back(tape.lift(b[r]));
    }
    return taped;
}

TapedNetwork taped_from_flat(const Network& shape, const std::vector<Var>& flat_params) {
    check_shapes(shape);
    if (flat_params.size() != static_cast<std::size_t>(shape.parameter_count()))
        throw std::invalid_argument("taped_from_flat: parameter count mismatch");
    TapedNetwork taped;
    taped.net = &shape;
    taped.params.resize(shape.weights.size());
    std::size_t pos = 0;
    for (std::size_t k = 0; k < shape.weights.size(); ++k) {
        const auto count =
            static_cast<std::size_t>(shape.weights[k].size() + shape.biases[k].size());
        taped.params[k].assign(flat_params.begin() + static_cast<std::ptrdiff_t>(pos),
                               flat_params.begin() + static_cast<std::ptrdiff_t>(pos + count));
        pos += count;
    }
    return taped;
}

std::vector<Var> TapedNetwork::forward(const std::vector<Var>& input) const {
    const Network& n = *net;
    if (static_cast<int>(input.size()) != n.input_size())
        throw std::invalid_argument("forward: input size mismatch");

    std::vector<Var> a = input;
    for (std::size_t k = 0; k < n.weights.size(); ++k) {
        const int rows = n.layer_sizes[k + 1];
        const int cols = n.layer_sizes[k];
        const auto& layer = params[k];
        std::vector<Var> next;
        next.reserve(static_cast<std::size_t>(rows));
        for (int r = 0; r < rows; ++r) {
            Var acc = layer[static_cast<std::size_t>(rows * cols + r)];  // bias
            for (int c = 0; c < cols; ++c) {
                acc = acc + layer[static_cast<std::size_t>(r * cols + c)] * a[static_cast<std::size_t>(c)];
            }
            next.push_back(n.activations[k] == Activation::Tanh ? evpinn::tanh(acc) : acc);
        }
        a = std::move(next);
    }
    return a;
}

std::vector<Var> TapedNetwork::all_params() const {
    std::vector<Var> out;
    for (const auto& layer : params) out.insert(out.end(), layer.begin(), layer.end());
    return out;
}

std::vector<Var> mlp_forward(const Network& net, const Eigen::Ref<const Eigen::VectorXd>& input,
                             Tape& tape) {
    const TapedNetwork taped = lift_network(net, tape);
    std::vector<Var> in;
    in.reserve(static_cast<std::size_t>(input.size()));
    for (Eigen::Index i = 0; i < input.size(); ++i) in.push_back(tape.lift(input[i]));
    return taped.forward(in);
}

Eigen::MatrixXd mlp_forward_batch(const Network& net, const Eigen::Ref<const Eigen::MatrixXd>& X,
                                  ForwardCache& cache) {
    check_shapes(net);
    if (X.rows() != net.input_size())
        throw std::invalid_argument("mlp_forward_batch: input row count mismatch");

    cache.acts.assign(1, X);
    for (std::size_t k = 0; k < net.weights.size(); ++k) {
        Eigen::MatrixXd z = net.weights[k] * cache.acts.back();
        z.colwise() += net.biases[k];
        cache.acts.push_back(apply_activation(net.activations[k], std::move(z)));
    }
    return cache.acts.back();
}

void mlp_backward_batch(const Network& net, const ForwardCache& cache,
                        const Eigen::Ref<const Eigen::MatrixXd>& dY, NetGrads& grads,
                        Eigen::MatrixXd* dX) {
    const std::size_t nw = net.weights.size();
    grads.dW.resize(nw);
    grads.db.resize(nw);

    Eigen::MatrixXd delta = dY;
    for (std::size_t k = nw; k-- > 0;) {
        if (net.activations[k] == Activation::Tanh) {
            // d tanh = 1 - tanh^2, with tanh cached as the layer output
            delta.array() *= 1.0 - cache.acts[k + 1].array().square();
        }
        grads.dW[k].noalias() = delta * cache.acts[k].transpose();
        grads.db[k] = delta.rowwise().sum();
        if (k > 0 || dX != nullptr) {
            Eigen::MatrixXd prev = net.weights[k].transpose() * delta;
            if (k == 0) {
                *dX = std::move(prev);
            } else {
                delta = std::move(prev);
            }
        }
    }
}

Eigen::VectorXd NetGrads::flatten() const {
    Eigen::Index n = 0;
    for (std::size_t k = 0; k < dW.size(); ++k) n += dW[k].size() + db[k].size();
    Eigen::VectorXd flat(n);
    Eigen::Index pos = 0;
    for (std::size_t k = 0; k < dW.size(); ++k) {
        for (Eigen::Index r = 0; r < dW[k].rows(); ++r)
            for (Eigen::Index c = 0; c < dW[k].cols(); ++c) flat[pos++] = dW[k](r, c);
        flat.segment(pos, db[k].size()) = db[k];
        pos += db[k].size();
    }
    return flat;
}

void adam_step(Eigen::Ref<Eigen::VectorXd> params, const Eigen::Ref<const Eigen::VectorXd>& grads,
               AdamState& state, double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: shape mismatch");
    if (!(lr >= 0.0)) throw std::invalid_argument("adam_step: lr must be non-negative");

    state.t += 1;
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grads;
    state.v.array() = state.beta2 * state.v.array() + (1.0 - state.beta2) * grads.array().square();
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + state.eps);
}

void clip_global_norm(std::vector<Eigen::Ref<Eigen::VectorXd>> grads, double max_norm) {
    double sq = 0.0;
    for (const auto& g : grads) sq += g.squaredNorm();
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (auto& g : grads) g *= scale;
    }
}

void save_network(const Network& net, std::ostream& out) {
    check_shapes(net);
    out.write(kMagic, kMagicLen);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(net.layer_sizes.size()));
    for (int s : net.layer_sizes) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(s));
    for (Activation a : net.activations) write_le<std::uint8_t>(out, static_cast<std::uint8_t>(a));
    write_le<std::uint64_t>(out, net.seed);
    for (std::size_t k = 0; k < net.weights.size(); ++k) {
        const auto& W = net.weights[k];
        for (Eigen::Index r = 0; r < W.rows(); ++r)
            for (Eigen::Index c = 0; c < W.cols(); ++c) write_le<double>(out, W(r, c));
        for (Eigen::Index r = 0; r < net.biases[k].size(); ++r)
            write_le<double>(out, net.biases[k][r]);
    }
    if (!out) throw std::runtime_error("model file: write failed");
}

Network load_network(std::istream& in) {
    char magic[kMagicLen];
    in.read(magic, kMagicLen);
    if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0)
        throw std::runtime_error("model file: bad magic header");

    const auto n_layers = read_le<std::uint32_t>(in);
    if (n_layers < 2 || n_layers > 1024) throw std::runtime_error("model file: bad layer count");

    Network net;
    net.layer_sizes.resize(n_layers);
    for (auto& s : net.layer_sizes) {
        const auto v = read_le<std::uint32_t>(in);
        if (v < 1 || v > (1u << 20)) throw std::runtime_error("model file: bad layer size");
        s = static_cast<int>(v);
    }
    net.activations.resize(n_layers - 1);
    for (auto& a : net.activations) {
        const auto v = read_le<std::uint8_t>(in);
        if (v > 1) throw std::runtime_error("model file: bad activation code");
        a = static_cast<Activation>(v);
    }
    net.seed = read_le<std::uint64_t>(in);
    for (std::uint32_t k = 0; k + 1 < n_layers; ++k) {
        Eigen::MatrixXd W(net.layer_sizes[k + 1], net.layer_sizes[k]);
        for (Eigen::Index r = 0; r < W.rows(); ++r)
            for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) = read_le<double>(in);
        Eigen::VectorXd b(net.layer_sizes[k + 1]);
        for (Eigen::Index r = 0; r < b.size(); ++r) b[r] = read_le<double>(in);
        net.weights.push_back(std::move(W));
        net.biases.push_back(std::move(b));
    }
    return net;
}

void save_network_file(const Network& net, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    save_network(net, out);
}

Network load_network_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file: " + path);
    return load_network(in);
}

}  // namespace evpinn
