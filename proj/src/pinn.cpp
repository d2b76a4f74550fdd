#include "evpinn/pinn.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "num_format.hpp"

namespace evpinn {

namespace {

void check_pinn_shapes(const PinnConfig& config) {
    if (config.layer_sizes.size() < 2 || config.layer_sizes.front() != 2 ||
        config.layer_sizes.back() != 1) {
        throw std::invalid_argument("pinn: layer sizes must run from 2 inputs to 1 output");
    }
    if (config.lambda < 0.0) throw std::invalid_argument("pinn: lambda must be >= 0");
    if (config.epochs < 1) throw std::invalid_argument("pinn: epochs must be >= 1");
}

/// d battery_power / d (eta, mu, mass, c_rr, c_d) at one sample.
Eigen::Matrix<double, 5, 1> phys_partials(double v, double dvdt, const FixedParams& fx,
                                          const PhysParams& p) {
    const double gate = dvdt < fx.beta ? 1.0 : 0.0;
    const double f = 1.0 - p.mu * gate;
    const double g_cos = fx.gravity * std::cos(fx.theta);
    const double g_sin = fx.gravity * std::sin(fx.theta);
    const double k_drag = 0.5 * fx.rho * fx.frontal_area;
    const double traction = k_drag * p.c_d * v * v * v + p.c_rr * p.mass * g_cos * v +
                            p.mass * g_sin * v + p.mass * v * dvdt * f;
    Eigen::Matrix<double, 5, 1> d;
    d[0] = -traction / (p.eta * p.eta);                                   // eta
    d[1] = -(p.mass * v * dvdt * gate) / p.eta;                           // mu
    d[2] = (p.c_rr * g_cos * v + g_sin * v + v * dvdt * f) / p.eta;       // mass
    d[3] = (p.mass * g_cos * v) / p.eta;                                  // c_rr
    d[4] = (k_drag * v * v * v) / p.eta;                                  // c_d
    return d;
}

nlohmann::json phys_to_json(const PhysParams& p) {
    return {{"eta", p.eta}, {"mu", p.mu}, {"mass", p.mass}, {"c_rr", p.c_rr}, {"c_d", p.c_d}};
}

PhysParams phys_from_json(const nlohmann::json& j) {
    return PhysParams{j.at("eta"), j.at("mu"), j.at("mass"), j.at("c_rr"), j.at("c_d")};
}

nlohmann::json fixed_to_json(const FixedParams& f) {
    return {{"rho", f.rho},       {"frontal_area", f.frontal_area}, {"gravity", f.gravity},
            {"theta", f.theta},   {"p_aux", f.p_aux},               {"beta", f.beta}};
}

FixedParams fixed_from_json(const nlohmann::json& j) {
    return FixedParams{j.at("rho"),   j.at("frontal_area"), j.at("gravity"),
                       j.at("theta"), j.at("p_aux"),        j.at("beta")};
}

nlohmann::json scales_to_json(const Scales& s) {
    return {{"t_min", s.t_min}, {"t_max", s.t_max}, {"v_min", s.v_min},
            {"v_max", s.v_max}, {"p_scale", s.p_scale}};
}

Scales scales_from_json(const nlohmann::json& j) {
    return Scales{j.at("t_min"), j.at("t_max"), j.at("v_min"), j.at("v_max"), j.at("p_scale")};
}

}  // namespace

Eigen::VectorXd physics_residual_given(const Eigen::Ref<const Eigen::VectorXd>& pred_norm,
                                       const NormalizedDataset& batch, const FixedParams& fixed,
                                       const PhysParams& phys) {
    if (pred_norm.size() != batch.size())
        throw std::invalid_argument("physics_residual: prediction length mismatch");
    const Eigen::VectorXd p_phys = battery_power_series(batch.v, batch.dvdt, fixed, phys);
    return pred_norm - p_phys / batch.scales.p_scale;
}

Eigen::VectorXd physics_residual(const NormalizedDataset& batch, const PinnModel& model) {
    ForwardCache cache;
    const Eigen::MatrixXd pred = mlp_forward_batch(model.net, batch.inputs, cache);
    return physics_residual_given(pred.row(0).transpose(), batch, model.fixed, model.phys);
}

LossParts pinn_loss(const NormalizedDataset& batch, const PinnModel& model, double lambda) {
    if (batch.size() == 0) throw std::invalid_argument("pinn_loss: empty batch");
    const auto n = static_cast<double>(batch.size());
    ForwardCache cache;
    const Eigen::MatrixXd pred = mlp_forward_batch(model.net, batch.inputs, cache);
    const Eigen::VectorXd pred_col = pred.row(0).transpose();
    const double data = (pred_col - batch.targets).squaredNorm() / n;
    const double physics =
        lambda *
        physics_residual_given(pred_col, batch, model.fixed, model.phys).squaredNorm() / n;
    return LossParts{data + physics, data, physics};
}

PinnGrads pinn_loss_gradients(const NormalizedDataset& batch, const PinnModel& model,
                              double lambda) {
    if (batch.size() == 0) throw std::invalid_argument("pinn_loss_gradients: empty batch");
    const Eigen::Index n = batch.size();
    const auto nd = static_cast<double>(n);
    const double p_scale = batch.scales.p_scale;

    ForwardCache cache;
    const Eigen::MatrixXd pred = mlp_forward_batch(model.net, batch.inputs, cache);
    const Eigen::VectorXd pred_col = pred.row(0).transpose();

    const Eigen::VectorXd r_data = pred_col - batch.targets;
    const Eigen::VectorXd p_phys =
        battery_power_series(batch.v, batch.dvdt, model.fixed, model.phys);
    const Eigen::VectorXd r_phys = pred_col - p_phys / p_scale;

    PinnGrads out;
    out.pred_norm = pred_col;
    out.loss.data = r_data.squaredNorm() / nd;
    out.loss.physics = lambda * r_phys.squaredNorm() / nd;
    out.loss.total = out.loss.data + out.loss.physics;

    // d loss / d prediction feeds the network; d loss / d phys comes from the
    // residual's physics side only.
    const Eigen::MatrixXd dY =
        ((2.0 / nd) * (r_data + lambda * r_phys)).transpose();
    NetGrads net_grads;
    mlp_backward_batch(model.net, cache, dY, net_grads);
    out.net = net_grads.flatten();

    out.phys.setZero();
    const double w = -lambda * 2.0 / (nd * p_scale);
    for (Eigen::Index i = 0; i < n; ++i) {
        out.phys += (w * r_phys[i]) * phys_partials(batch.v[i], batch.dvdt[i], model.fixed,
                                                    model.phys);
    }
    return out;
}

Var pinn_loss_on_tape(Tape& tape, const NormalizedDataset& batch, const Network& shape,
                      const std::vector<Var>& net_params, const PhysParamsT<Var>& phys,
                      const FixedParams& fixed, double lambda) {
    const TapedNetwork taped = taped_from_flat(shape, net_params);
    const double p_scale = batch.scales.p_scale;
    const auto n = static_cast<double>(batch.size());

    Var data_sum = tape.lift(0.0);
    Var phys_sum = tape.lift(0.0);
    for (Eigen::Index i = 0; i < batch.size(); ++i) {
        const std::vector<Var> x = {tape.lift(batch.inputs(0, i)), tape.lift(batch.inputs(1, i))};
        const Var pred = taped.forward(x)[0];
        data_sum = data_sum + square(pred - batch.targets[i]);

        const Var v = tape.lift(batch.v[i]);
        const Var dvdt = tape.lift(batch.dvdt[i]);
        const Var p_phys = battery_power(v, dvdt, fixed, phys);
        phys_sum = phys_sum + square(pred - p_phys / p_scale);
    }
    return data_sum / n + (lambda / n) * phys_sum;
}

std::pair<PinnModel, LossReport> train_pinn(const NormalizedDataset& dataset,
                                            const PinnConfig& config,
                                            const VehiclePreset& preset) {
    check_pinn_shapes(config);
    const SplitIndices idx = make_split(dataset.size(), config.val_fraction, config.seed);
    const NormalizedDataset train = dataset.rows(idx.train);
    const NormalizedDataset val = dataset.rows(idx.val);

    PinnModel model;
    model.net = mlp_new(config.layer_sizes, Activation::Tanh, config.seed);
    model.phys = preset.initial;
    model.fixed = preset.fixed;
    model.scales = dataset.scales;

    // Physical parameters are optimized as multipliers of their initial
    // values so one learning rate covers quantities spanning five orders of
    // magnitude (mass ~2e3 vs C_rr ~1e-2).
    const Eigen::Matrix<double, 5, 1> init{preset.initial.eta, preset.initial.mu,
                                           preset.initial.mass, preset.initial.c_rr,
                                           preset.initial.c_d};
    Eigen::VectorXd mult = Eigen::VectorXd::Ones(5);

    Eigen::VectorXd net_flat = model.net.flatten();
    AdamState adam_net(net_flat.size());
    AdamState adam_phys(5);

    LossReport report;
    report.rows.reserve(static_cast<std::size_t>(config.epochs) * 2);

    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        PinnGrads g = pinn_loss_gradients(train, model, config.lambda);
        const LossParts val_parts = pinn_loss(val, model, config.lambda);

        if (!std::isfinite(g.loss.data)) {
            throw std::runtime_error("train_pinn: non-finite data loss at epoch " +
                                     std::to_string(epoch) + " (net parameter group)");
        }
        if (!std::isfinite(g.loss.physics)) {
            throw std::runtime_error("train_pinn: non-finite physics loss at epoch " +
                                     std::to_string(epoch) + " (phys parameter group)");
        }

        report.rows.push_back({epoch, 'T', g.loss.total, g.loss.data, g.loss.physics});
        report.rows.push_back({epoch, 'V', val_parts.total, val_parts.data, val_parts.physics});

        Eigen::VectorXd phys_grad = g.phys.cwiseProduct(init);  // chain to multipliers
        clip_global_norm({Eigen::Ref<Eigen::VectorXd>(g.net), Eigen::Ref<Eigen::VectorXd>(phys_grad)},
                         config.clip_norm);
        adam_step(net_flat, g.net, adam_net, config.lr_net);
        adam_step(mult, phys_grad, adam_phys, config.lr_phys);

        model.net.set_from_flat(net_flat);
        PhysParams p{mult[0] * init[0], mult[1] * init[1], mult[2] * init[2], mult[3] * init[3],
                     mult[4] * init[4]};
        model.phys = clamp_to_bounds(p);
        mult << model.phys.eta / init[0], model.phys.mu / init[1], model.phys.mass / init[2],
            model.phys.c_rr / init[3], model.phys.c_d / init[4];
    }

    return {std::move(model), std::move(report)};
}

std::pair<PinnModel, LossReport> train_pinn_on_log(const DriveLog& log, const PinnConfig& config,
                                                   const VehiclePreset& preset) {
    DriveLog prepared = log;
    if (!prepared.dvdt) prepared.dvdt = estimate_accel(prepared, config.smooth_window);
    const SplitIndices idx = make_split(prepared.size(), config.val_fraction, config.seed);
    const NormalizedDataset ds = normalize(prepared, idx.train_mask);
    return train_pinn(ds, config, preset);
}

double predict_power(const PinnModel& model, double v_mps, double t_s) {
    Eigen::Vector2d x(normalize_v(v_mps, model.scales), normalize_t(t_s, model.scales));
    return mlp_eval(model.net, x)[0] * model.scales.p_scale;
}

Eigen::VectorXd predict_power_series(const PinnModel& model,
                                     const Eigen::Ref<const Eigen::VectorXd>& v,
                                     const Eigen::Ref<const Eigen::VectorXd>& t) {
    if (v.size() != t.size()) throw std::invalid_argument("predict_power_series: length mismatch");
    Eigen::MatrixXd X(2, v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        X(0, i) = normalize_v(v[i], model.scales);
        X(1, i) = normalize_t(t[i], model.scales);
    }
    ForwardCache cache;
    return mlp_forward_batch(model.net, X, cache).row(0).transpose() * model.scales.p_scale;
}

std::vector<ParamRow> extract_params(const PinnModel& model, const PhysParams& reference) {
    const PhysParams& p = model.phys;
    auto row = [](const char* name, double ref, double pred) {
        const double abs_err = std::abs(pred - ref);
        return ParamRow{name, ref, pred, abs_err, abs_err / std::abs(ref)};
    };
    return {
        row("eta", reference.eta, p.eta),   row("mu", reference.mu, p.mu),
        row("m", reference.mass, p.mass),   row("c_rr", reference.c_rr, p.c_rr),
        row("c_d", reference.c_d, p.c_d),
    };
}

void save_param_table(const std::vector<ParamRow>& rows, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "parameter,reference,predicted,absolute_error,relative_error\n";
    for (const auto& r : rows) {
        out << r.name << ',' << detail::format_double(r.reference) << ','
            << detail::format_double(r.predicted) << ',' << detail::format_double(r.abs_error)
            << ',' << detail::format_double(r.rel_error) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

void save_pinn_model(const PinnModel& model, const std::string& base_path) {
    save_network_file(model.net, base_path + ".bin");
    nlohmann::json j = {{"type", "pinn"},
                        {"phys", phys_to_json(model.phys)},
                        {"fixed", fixed_to_json(model.fixed)},
                        {"scales", scales_to_json(model.scales)}};
    std::ofstream out(base_path + ".json");
    if (!out) throw std::runtime_error("cannot open for writing: " + base_path + ".json");
    out << j.dump(2) << '\n';
}

PinnModel load_pinn_model(const std::string& base_path) {
    PinnModel model;
    model.net = load_network_file(base_path + ".bin");
    std::ifstream in(base_path + ".json");
    if (!in) throw std::runtime_error("cannot open model sidecar: " + base_path + ".json");
    nlohmann::json j;
    in >> j;
    if (j.value("type", "") != "pinn")
        throw std::runtime_error("model sidecar is not a pinn model: " + base_path + ".json");
    model.phys = phys_from_json(j.at("phys"));
    model.fixed = fixed_from_json(j.at("fixed"));
    model.scales = scales_from_json(j.at("scales"));
    return model;
}

}  // namespace evpinn
