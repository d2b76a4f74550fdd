#include "evpinn/rknn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <stdexcept>

#include <json.hpp>

#include "evpinn/data.hpp"
#include "num_format.hpp"

namespace evpinn {

namespace {

Eigen::Index dense_param_count(const std::vector<int>& sizes) {
    Eigen::Index n = 0;
    for (std::size_t k = 0; k + 1 < sizes.size(); ++k)
        n += static_cast<Eigen::Index>(sizes[k + 1]) * (sizes[k] + 1);
    return n;
}

std::vector<int> stage_sizes(int inputs, const RknnConfig& config) {
    std::vector<int> sizes{inputs};
    for (int i = 0; i < config.hidden_depth; ++i) sizes.push_back(config.hidden_width);
    sizes.push_back(1);
    return sizes;
}

double series_spacing(const Eigen::Ref<const Eigen::VectorXd>& t) {
    if (t.size() < 2) throw std::invalid_argument("power series: need at least 2 samples");
    const double dt = t[1] - t[0];
    for (Eigen::Index i = 1; i + 1 < t.size(); ++i) {
        if (std::abs((t[i + 1] - t[i]) - dt) > 1e-9 * std::max(1.0, std::abs(dt)))
            throw std::invalid_argument("power series: non-uniform sample spacing");
    }
    return dt;
}

/// Normalized one-step training tuples with teacher-forced oracle energies.
struct StepData {
    Eigen::VectorXd p0, pm, p1, e_in, target;
    double h;  // normalized step dt / t_total

    Eigen::Index steps() const { return p0.size(); }
    StepData rows(const std::vector<Eigen::Index>& idx) const {
        StepData out;
        out.h = h;
        const auto m = static_cast<Eigen::Index>(idx.size());
        out.p0.resize(m);
        out.pm.resize(m);
        out.p1.resize(m);
        out.e_in.resize(m);
        out.target.resize(m);
        for (Eigen::Index j = 0; j < m; ++j) {
            const Eigen::Index i = idx[static_cast<std::size_t>(j)];
            out.p0[j] = p0[i];
            out.pm[j] = pm[i];
            out.p1[j] = p1[i];
            out.e_in[j] = e_in[i];
            out.target[j] = target[i];
        }
        return out;
    }
};

StepData build_steps(const Eigen::Ref<const Eigen::VectorXd>& t,
                     const Eigen::Ref<const Eigen::VectorXd>& p, double dt,
                     const RknnScales& scales) {
    const Eigen::Index n = t.size();
    const double spacing = series_spacing(t);
    if (std::abs(spacing - dt) > 1e-9 * std::max(1.0, std::abs(dt)))
        throw std::invalid_argument("power series spacing does not match dt");
    if (n < 3) throw std::invalid_argument("train_rknn: need at least 2 steps");

    const EnergySeries oracle = rk4_integrate(t, p, dt, 0.0);
    const double ps = scales.p_scale;
    const double es = scales.e_scale();

    StepData s;
    s.h = dt / scales.t_total;
    const Eigen::Index m = n - 1;
    s.p0.resize(m);
    s.pm.resize(m);
    s.p1.resize(m);
    s.e_in.resize(m);
    s.target.resize(m);
    for (Eigen::Index i = 0; i < m; ++i) {
        s.p0[i] = p[i] / ps;
        s.pm[i] = 0.5 * (p[i] + p[i + 1]) / ps;
        s.p1[i] = p[i + 1] / ps;
        s.e_in[i] = oracle.e[i] / es;
        s.target[i] = oracle.e[i + 1] / es;
    }
    return s;
}

/// Batched stage evaluation. Returns E_pred and per-stage caches/inputs for
/// the backward pass.
struct StageForward {
    std::array<ForwardCache, 4> caches;
    std::array<Eigen::MatrixXd, 4> inputs;
    std::array<Eigen::RowVectorXd, 4> k;
    Eigen::RowVectorXd e_pred;
};

void rknn_forward_batch(const RknnModel& model, const StepData& s, StageForward& f) {
    const Eigen::Index m = s.steps();
    const double h = s.h;

    f.inputs[0] = s.p0.transpose();
    f.k[0] = mlp_forward_batch(model.stages[0], f.inputs[0], f.caches[0]).row(0);

    f.inputs[1].resize(2, m);
    f.inputs[1].row(0) = s.pm.transpose();
    f.inputs[1].row(1) = s.e_in.transpose() + (h / 2.0) * f.k[0];
    f.k[1] = mlp_forward_batch(model.stages[1], f.inputs[1], f.caches[1]).row(0);

    f.inputs[2].resize(2, m);
    f.inputs[2].row(0) = s.pm.transpose();
    f.inputs[2].row(1) = s.e_in.transpose() + (h / 2.0) * f.k[1];
    f.k[2] = mlp_forward_batch(model.stages[2], f.inputs[2], f.caches[2]).row(0);

    f.inputs[3].resize(2, m);
    f.inputs[3].row(0) = s.p1.transpose();
    f.inputs[3].row(1) = s.e_in.transpose() + h * f.k[2];
    f.k[3] = mlp_forward_batch(model.stages[3], f.inputs[3], f.caches[3]).row(0);

    f.e_pred = s.e_in.transpose() +
               (h / 6.0) * (f.k[0] + 2.0 * f.k[1] + 2.0 * f.k[2] + f.k[3]);
}

double mse_row(const Eigen::RowVectorXd& pred, const Eigen::VectorXd& target) {
    return (pred.transpose() - target).squaredNorm() / static_cast<double>(target.size());
}

nlohmann::json rknn_scales_to_json(const RknnScales& s) {
    return {{"p_scale", s.p_scale}, {"t_total", s.t_total}, {"t0", s.t0}};
}

RknnScales rknn_scales_from_json(const nlohmann::json& j) {
    return RknnScales{j.at("p_scale"), j.at("t_total"), j.at("t0")};
}

}  // namespace

PowerSampler linear_interp_sampler(Eigen::VectorXd t, Eigen::VectorXd p) {
    if (t.size() != p.size() || t.size() < 2)
        throw std::invalid_argument("sampler: need matching series with >= 2 samples");
    for (Eigen::Index i = 0; i + 1 < t.size(); ++i) {
        if (!(t[i + 1] > t[i])) throw std::invalid_argument("sampler: time not increasing");
    }
    const double slack = 1e-9 * std::max(1.0, t[t.size() - 1] - t[0]);
    return [t = std::move(t), p = std::move(p), slack](double at) {
        const double lo = t[0];
        const double hi = t[t.size() - 1];
        if (at < lo - slack || at > hi + slack) {
            throw std::out_of_range("power sampler: t=" + std::to_string(at) +
                                    " outside sampled range [" + std::to_string(lo) + ", " +
                                    std::to_string(hi) + "]");
        }
        const double tc = std::clamp(at, lo, hi);
        const double* begin = t.data();
        const double* end = begin + t.size();
        auto it = std::upper_bound(begin, end, tc);
        Eigen::Index i = std::max<Eigen::Index>(1, std::distance(begin, it)) - 1;
        if (i + 1 >= t.size()) i = t.size() - 2;
        const double w = (tc - t[i]) / (t[i + 1] - t[i]);
        return (1.0 - w) * p[i] + w * p[i + 1];
    };
}

EnergySeries rk4_integrate(const PowerSampler& power, double t0, Eigen::Index n_steps, double dt,
                           double e0) {
    if (!(dt > 0.0)) throw std::invalid_argument("rk4_integrate: dt must be positive");
    if (n_steps < 0) throw std::invalid_argument("rk4_integrate: negative step count");

    EnergySeries out;
    out.dt = dt;
    out.t.resize(n_steps + 1);
    out.e.resize(n_steps + 1);
    out.t[0] = t0;
    out.e[0] = e0;
    for (Eigen::Index i = 0; i < n_steps; ++i) {
        const double t = t0 + static_cast<double>(i) * dt;
        const double inc =
            (dt / 6.0) * (power(t) + 4.0 * power(t + 0.5 * dt) + power(t + dt));
        out.t[i + 1] = t0 + static_cast<double>(i + 1) * dt;
        out.e[i + 1] = out.e[i] + inc;
    }
    return out;
}

EnergySeries rk4_integrate(const Eigen::Ref<const Eigen::VectorXd>& t,
                           const Eigen::Ref<const Eigen::VectorXd>& p, double dt, double e0) {
    if (!(dt > 0.0)) throw std::invalid_argument("rk4_integrate: dt must be positive");
    const double span = t[t.size() - 1] - t[0];
    const auto n_steps = static_cast<Eigen::Index>(std::floor(span / dt + 1e-9));
    return rk4_integrate(linear_interp_sampler(t, p), t[0], n_steps, dt, e0);
}

Eigen::Index RknnModel::parameter_count() const {
    Eigen::Index n = 0;
    for (const auto& s : stages) n += s.parameter_count();
    return n;
}

double rknn_step(const RknnModel& model, const PowerSampler& power, double t, double e) {
    const double ps = model.scales.p_scale;
    const double es = model.scales.e_scale();
    const double h = model.dt / model.scales.t_total;
    const double en = e / es;

    const double pa = power(t) / ps;
    const double pm = power(t + 0.5 * model.dt) / ps;
    const double pb = power(t + model.dt) / ps;

    Eigen::VectorXd x1(1);
    x1 << pa;
    const double k1 = mlp_eval(model.stages[0], x1)[0];
    Eigen::Vector2d x2(pm, en + 0.5 * h * k1);
    const double k2 = mlp_eval(model.stages[1], x2)[0];
    Eigen::Vector2d x3(pm, en + 0.5 * h * k2);
    const double k3 = mlp_eval(model.stages[2], x3)[0];
    Eigen::Vector2d x4(pb, en + h * k3);
    const double k4 = mlp_eval(model.stages[3], x4)[0];

    return (en + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)) * es;
}

std::pair<RknnModel, LossReport> train_rknn(const Eigen::Ref<const Eigen::VectorXd>& t,
                                            const Eigen::Ref<const Eigen::VectorXd>& p, double dt,
                                            const RknnConfig& config) {
    if (config.epochs < 1) throw std::invalid_argument("train_rknn: epochs must be >= 1");

    RknnModel model;
    model.dt = dt;
    model.scales.t0 = t[0];
    model.scales.t_total = t[t.size() - 1] - t[0];

    const Eigen::Index n_steps = t.size() - 1;
    const SplitIndices idx = make_split(n_steps, config.val_fraction, config.seed);

    double p_abs = 0.0;
    for (const Eigen::Index i : idx.train) p_abs = std::max({p_abs, std::abs(p[i]), std::abs(p[i + 1])});
    if (p_abs == 0.0) throw std::runtime_error("train_rknn: zero power range");
    model.scales.p_scale = p_abs;

    const StepData all = build_steps(t, p, dt, model.scales);
    const StepData train = all.rows(idx.train);
    const StepData val = all.rows(idx.val);

    model.stages[0] = mlp_new(stage_sizes(1, config), Activation::Tanh, config.seed);
    for (int k = 1; k < 4; ++k)
        model.stages[k] =
            mlp_new(stage_sizes(2, config), Activation::Tanh, config.seed + static_cast<std::uint64_t>(k));

    std::array<Eigen::VectorXd, 4> flats;
    std::array<std::unique_ptr<AdamState>, 4> adam;
    for (int k = 0; k < 4; ++k) {
        flats[k] = model.stages[k].flatten();
        adam[k] = std::make_unique<AdamState>(flats[k].size());
    }

    const double h = train.h;
    const auto m = static_cast<double>(train.steps());
    LossReport report;
    report.rows.reserve(static_cast<std::size_t>(config.epochs) * 2);

    StageForward f;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        rknn_forward_batch(model, train, f);
        const double train_loss = mse_row(f.e_pred, train.target);

        StageForward fv;
        rknn_forward_batch(model, val, fv);
        const double val_loss = mse_row(fv.e_pred, val.target);

        if (!std::isfinite(train_loss)) {
            throw std::runtime_error("train_rknn: non-finite loss at epoch " +
                                     std::to_string(epoch) + " (stage parameter group)");
        }
        report.rows.push_back({epoch, 'T', train_loss, train_loss, 0.0});
        report.rows.push_back({epoch, 'V', val_loss, val_loss, 0.0});

        // d loss / d E_pred
        const Eigen::RowVectorXd g =
            (2.0 / m) * (f.e_pred - train.target.transpose());

        std::array<NetGrads, 4> grads;
        Eigen::MatrixXd dx4, dx3, dx2;
        // Stage 4: weight h/6 from the combination.
        Eigen::MatrixXd dk4 = (h / 6.0) * g;
        mlp_backward_batch(model.stages[3], f.caches[3], dk4, grads[3], &dx4);
        // Stage 3: h/3 from the combination plus the E-input chain of stage 4.
        Eigen::MatrixXd dk3 = (h / 3.0) * g + h * dx4.row(1);
        mlp_backward_batch(model.stages[2], f.caches[2], dk3, grads[2], &dx3);
        Eigen::MatrixXd dk2 = (h / 3.0) * g + (h / 2.0) * dx3.row(1);
        mlp_backward_batch(model.stages[1], f.caches[1], dk2, grads[1], &dx2);
        Eigen::MatrixXd dk1 = (h / 6.0) * g + (h / 2.0) * dx2.row(1);
        mlp_backward_batch(model.stages[0], f.caches[0], dk1, grads[0]);

        std::array<Eigen::VectorXd, 4> flat_grads;
        std::vector<Eigen::Ref<Eigen::VectorXd>> refs;
        for (int k = 0; k < 4; ++k) {
            flat_grads[static_cast<std::size_t>(k)] = grads[static_cast<std::size_t>(k)].flatten();
            refs.emplace_back(flat_grads[static_cast<std::size_t>(k)]);
        }
        clip_global_norm(std::move(refs), config.clip_norm);
        for (int k = 0; k < 4; ++k) {
            adam_step(flats[static_cast<std::size_t>(k)], flat_grads[static_cast<std::size_t>(k)],
                      *adam[static_cast<std::size_t>(k)], config.lr);
            model.stages[static_cast<std::size_t>(k)].set_from_flat(
                flats[static_cast<std::size_t>(k)]);
        }
    }

    return {std::move(model), std::move(report)};
}

int matched_dnn_width(const RknnConfig& config) {
    const Eigen::Index target = dense_param_count(stage_sizes(1, config)) +
                                3 * dense_param_count(stage_sizes(2, config));
    int best_w = 1;
    Eigen::Index best_diff = std::numeric_limits<Eigen::Index>::max();
    for (int w = 1; w <= 1024; ++w) {
        RknnConfig c = config;
        c.hidden_width = w;
        const Eigen::Index count = dense_param_count(stage_sizes(4, c));
        const Eigen::Index diff = std::abs(count - target);
        if (diff < best_diff) {
            best_diff = diff;
            best_w = w;
        }
    }
    return best_w;
}

std::pair<Network, LossReport> train_baseline_dnn(const Eigen::Ref<const Eigen::VectorXd>& t,
                                                  const Eigen::Ref<const Eigen::VectorXd>& p,
                                                  double dt, const RknnConfig& config) {
    if (config.epochs < 1) throw std::invalid_argument("train_baseline_dnn: epochs must be >= 1");

    RknnScales scales;
    scales.t0 = t[0];
    scales.t_total = t[t.size() - 1] - t[0];

    const Eigen::Index n_steps = t.size() - 1;
    const SplitIndices idx = make_split(n_steps, config.val_fraction, config.seed);
    double p_abs = 0.0;
    for (const Eigen::Index i : idx.train) p_abs = std::max({p_abs, std::abs(p[i]), std::abs(p[i + 1])});
    if (p_abs == 0.0) throw std::runtime_error("train_baseline_dnn: zero power range");
    scales.p_scale = p_abs;

    const StepData all = build_steps(t, p, dt, scales);
    const StepData train = all.rows(idx.train);
    const StepData val = all.rows(idx.val);

    auto pack_inputs = [](const StepData& s) {
        Eigen::MatrixXd X(4, s.steps());
        X.row(0) = s.p0.transpose();
        X.row(1) = s.pm.transpose();
        X.row(2) = s.p1.transpose();
        X.row(3) = s.e_in.transpose();
        return X;
    };
    const Eigen::MatrixXd x_train = pack_inputs(train);
    const Eigen::MatrixXd x_val = pack_inputs(val);

    RknnConfig matched = config;
    matched.hidden_width = matched_dnn_width(config);
    Network net = mlp_new(stage_sizes(4, matched), Activation::Tanh, config.seed);

    Eigen::VectorXd flat = net.flatten();
    AdamState adam(flat.size());
    const auto m = static_cast<double>(train.steps());

    LossReport report;
    report.rows.reserve(static_cast<std::size_t>(config.epochs) * 2);
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        ForwardCache cache;
        const Eigen::RowVectorXd pred = mlp_forward_batch(net, x_train, cache).row(0);
        const double train_loss = mse_row(pred, train.target);

        ForwardCache cache_val;
        const Eigen::RowVectorXd pred_val = mlp_forward_batch(net, x_val, cache_val).row(0);
        const double val_loss = mse_row(pred_val, val.target);

        if (!std::isfinite(train_loss)) {
            throw std::runtime_error("train_baseline_dnn: non-finite loss at epoch " +
                                     std::to_string(epoch));
        }
        report.rows.push_back({epoch, 'T', train_loss, train_loss, 0.0});
        report.rows.push_back({epoch, 'V', val_loss, val_loss, 0.0});

        const Eigen::MatrixXd dY = (2.0 / m) * (pred - train.target.transpose());
        NetGrads grads;
        mlp_backward_batch(net, cache, dY, grads);
        Eigen::VectorXd flat_grad = grads.flatten();
        clip_global_norm({Eigen::Ref<Eigen::VectorXd>(flat_grad)}, config.clip_norm);
        adam_step(flat, flat_grad, adam, config.lr);
        net.set_from_flat(flat);
    }

    return {std::move(net), std::move(report)};
}

EnergySeries predict_energy(const RknnModel& model, const Eigen::Ref<const Eigen::VectorXd>& t,
                            const Eigen::Ref<const Eigen::VectorXd>& p, double e0) {
    if (t.size() == 0) throw std::invalid_argument("predict_energy: empty power series");
    EnergySeries out;
    out.dt = model.dt;
    out.t = t;
    out.e.resize(t.size());
    out.e[0] = e0;
    if (t.size() == 1) return out;  // zero steps

    const double spacing = series_spacing(t);
    if (std::abs(spacing - model.dt) > 1e-9 * std::max(1.0, std::abs(model.dt)))
        throw std::invalid_argument("predict_energy: series spacing does not match model dt");

    const PowerSampler sampler = linear_interp_sampler(t, p);
    for (Eigen::Index i = 0; i + 1 < t.size(); ++i)
        out.e[i + 1] = rknn_step(model, sampler, t[i], out.e[i]);
    return out;
}

void save_energy_series(const EnergySeries& series, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "t_s,e_j\n";
    for (Eigen::Index i = 0; i < series.t.size(); ++i)
        out << detail::format_double(series.t[i]) << ',' << detail::format_double(series.e[i])
            << '\n';
    if (!out) throw std::runtime_error("write failed: " + path);
}

void save_rknn_model(const RknnModel& model, const std::string& base_path) {
    std::ofstream out(base_path + ".bin", std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + base_path + ".bin");
    for (const auto& stage : model.stages) save_network(stage, out);

    nlohmann::json j = {{"type", "rknn"},
                        {"dt", model.dt},
                        {"scales", rknn_scales_to_json(model.scales)}};
    std::ofstream js(base_path + ".json");
    if (!js) throw std::runtime_error("cannot open for writing: " + base_path + ".json");
    js << j.dump(2) << '\n';
}

RknnModel load_rknn_model(const std::string& base_path) {
    std::ifstream in(base_path + ".bin", std::ios::binary);
    if (!in) throw std::runtime_error("cannot open model file: " + base_path + ".bin");
    RknnModel model;
    for (auto& stage : model.stages) stage = load_network(in);

    std::ifstream js(base_path + ".json");
    if (!js) throw std::runtime_error("cannot open model sidecar: " + base_path + ".json");
    nlohmann::json j;
    js >> j;
    if (j.value("type", "") != "rknn")
        throw std::runtime_error("model sidecar is not an rknn model: " + base_path + ".json");
    model.dt = j.at("dt");
    model.scales = rknn_scales_from_json(j.at("scales"));
    return model;
}

}  // namespace evpinn
