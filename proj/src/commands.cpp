#include "evpinn/commands.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include <json.hpp>

#include "num_format.hpp"

namespace evpinn {

namespace fs = std::filesystem;

namespace {

void ensure_output_dir(const RunConfig& config) {
    if (config.output_dir.empty())
        throw ConfigError("config: output_dir is required (or pass --out)");
    fs::create_directories(config.output_dir);
}

void echo_config(const RunConfig& config) {
    const fs::path p = fs::path(config.output_dir) / "config.json";
    std::ofstream out(p);
    if (!out) throw std::runtime_error("cannot open for writing: " + p.string());
    out << config.raw_text;
}

std::string out_path(const RunConfig& config, const char* name) {
    return (fs::path(config.output_dir) / name).string();
}

double uniform_spacing(const Eigen::VectorXd& t) {
    if (t.size() < 2) throw std::runtime_error("drive log too short");
    return t[1] - t[0];
}

void write_two_column_csv(const std::string& path, const char* h1, const char* h2,
                          const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << h1 << ',' << h2 << '\n';
    for (Eigen::Index i = 0; i < a.size(); ++i)
        out << detail::format_double(a[i]) << ',' << detail::format_double(b[i]) << '\n';
}

void write_three_column_csv(const std::string& path, const char* h1, const char* h2,
                            const char* h3, const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                            const Eigen::VectorXd& c) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << h1 << ',' << h2 << ',' << h3 << '\n';
    for (Eigen::Index i = 0; i < a.size(); ++i)
        out << detail::format_double(a[i]) << ',' << detail::format_double(b[i]) << ','
            << detail::format_double(c[i]) << '\n';
}

}  // namespace

DriveLog resolve_data(const RunConfig& config) {
    if (config.data.path) {
        if (!fs::exists(*config.data.path))
            throw ConfigError("data not found: " + *config.data.path);
        return load_log_file(*config.data.path);
    }
    const PhysParams phys = config.data.truth.value_or(config.vehicle.initial);
    return synth_cycle(*config.data.cycle, config.vehicle.fixed, phys);
}

void cmd_synth(const RunConfig& config) {
    if (!config.data.cycle) throw ConfigError("synth requires a data.cycle spec");
    ensure_output_dir(config);
    echo_config(config);

    const DriveLog log = resolve_data(config);
    save_log_file(log, out_path(config, "drive_log.csv"));

    const double duration = log.t[log.size() - 1] - log.t[0];
    std::cout << "synth: " << log.size() << " samples, " << duration << " s, P in ["
              << log.power->minCoeff() << ", " << log.power->maxCoeff() << "] W -> "
              << out_path(config, "drive_log.csv") << "\n";
}

void cmd_train(const RunConfig& config) {
    ensure_output_dir(config);
    echo_config(config);

    DriveLog log = resolve_data(config);
    if (!log.power) throw std::runtime_error("training data has no ground-truth power");
    save_log_file(log, out_path(config, "drive_log.csv"));

    auto [pinn_model, pinn_report] = train_pinn_on_log(log, config.pinn, config.vehicle);
    save_pinn_model(pinn_model, out_path(config, "pinn_model"));
    pinn_report.save_csv(out_path(config, "pinn_loss.csv"));
    save_param_table(extract_params(pinn_model, config.vehicle.initial),
                     out_path(config, "params.csv"));
    const LossRow* last = pinn_report.find(config.pinn.epochs, 'V');
    std::cout << "train: pinn validation loss " << (last ? last->total : 0.0) << " at epoch "
              << config.pinn.epochs << "\n";

    // The energy stage consumes the power model's predictions.
    const Eigen::VectorXd p_pred = predict_power_series(pinn_model, log.v, log.t);
    const double dt = uniform_spacing(log.t);
    auto [rknn_model, rknn_report] = train_rknn(log.t, p_pred, dt, config.rknn);
    save_rknn_model(rknn_model, out_path(config, "rknn_model"));
    rknn_report.save_csv(out_path(config, "rknn_loss.csv"));
    const LossRow* rlast = rknn_report.find(config.rknn.epochs, 'V');
    std::cout << "train: rknn validation loss " << (rlast ? rlast->total : 0.0) << " at epoch "
              << config.rknn.epochs << "\n";
}

void cmd_eval(const RunConfig& config, const std::string& models_dir,
              const std::string& log_path) {
    ensure_output_dir(config);
    echo_config(config);

    const PinnModel pinn_model = load_pinn_model((fs::path(models_dir) / "pinn_model").string());
    const RknnModel rknn_model = load_rknn_model((fs::path(models_dir) / "rknn_model").string());

    DriveLog log = log_path.empty() ? resolve_data(config) : load_log_file(log_path);
    if (!log.power) throw std::runtime_error("cannot evaluate without P (log lacks power)");

    const Eigen::VectorXd& p_true = *log.power;
    const Eigen::VectorXd p_pred = predict_power_series(pinn_model, log.v, log.t);
    const double p_scale = pinn_model.scales.p_scale;
    const double power_mse_norm =
        ((p_true - p_pred) / p_scale).squaredNorm() / static_cast<double>(log.size());

    const double dt = uniform_spacing(log.t);
    const EnergySeries e_true = rk4_integrate(log.t, p_true, dt, 0.0);
    const EnergySeries e_pred = predict_energy(rknn_model, log.t, p_pred, 0.0);

    const double terminal_true = e_true.e[e_true.e.size() - 1];
    const double terminal_pred = e_pred.e[e_pred.e.size() - 1];
    const double energy_rel_err =
        std::abs(terminal_pred - terminal_true) / std::max(1e-12, std::abs(terminal_true));

    write_three_column_csv(out_path(config, "power_pred.csv"), "t_s", "p_true_w", "p_pred_w",
                           log.t, p_true, p_pred);
    write_three_column_csv(out_path(config, "energy_pred.csv"), "t_s", "e_rk4_j", "e_pred_j",
                           e_true.t, e_true.e, e_pred.e);

    nlohmann::json metrics = {{"power_mse_norm", power_mse_norm},
                              {"energy_terminal_rel_err", energy_rel_err}};
    std::ofstream mout(out_path(config, "metrics.json"));
    if (!mout) throw std::runtime_error("cannot open metrics.json for writing");
    mout << metrics.dump(2) << '\n';

    std::cout << "eval: power_mse_norm=" << power_mse_norm
              << " energy_terminal_rel_err=" << energy_rel_err << "\n";
}

void cmd_predict(const RunConfig& config, const std::string& models_dir,
                 const std::string& log_path) {
    ensure_output_dir(config);
    echo_config(config);

    const PinnModel pinn_model = load_pinn_model((fs::path(models_dir) / "pinn_model").string());
    const RknnModel rknn_model = load_rknn_model((fs::path(models_dir) / "rknn_model").string());

    DriveLog log = log_path.empty() ? resolve_data(config) : load_log_file(log_path);

    const Eigen::VectorXd p_pred = predict_power_series(pinn_model, log.v, log.t);
    const EnergySeries e_pred = predict_energy(rknn_model, log.t, p_pred, 0.0);

    write_two_column_csv(out_path(config, "power_pred.csv"), "t_s", "p_pred_w", log.t, p_pred);
    write_two_column_csv(out_path(config, "energy_pred.csv"), "t_s", "e_pred_j", e_pred.t,
                         e_pred.e);

    std::cout << "predict: " << log.size() << " samples, terminal energy "
              << e_pred.e[e_pred.e.size() - 1] << " J\n";
}

}  // namespace evpinn
