#pragma once

#include <Eigen/Core>

#include <string>
#include <utility>
#include <vector>

#include "evpinn/data.hpp"
#include "evpinn/dynamics.hpp"
#include "evpinn/network.hpp"
#include "evpinn/report.hpp"

namespace evpinn {

struct PinnConfig {
    double lambda = 0.1;
    int epochs = 10000;
    double lr_net = 1e-3;
    double lr_phys = 1e-2;
    std::vector<int> layer_sizes = {2, 128, 128, 128, 128, 1};
    std::uint64_t seed = 0;
    double clip_norm = 10.0;
    double val_fraction = 0.2;
    int smooth_window = 5;  // dvdt estimation window for loaded logs
};

/// Network (v_norm, t_norm) -> P_norm plus the trainable physical parameters
/// and the normalization scales they were trained under.
struct PinnModel {
    Network net;
    PhysParams phys;
    FixedParams fixed;
    Scales scales;
};

/// residual_i = P_pred_norm(v_i, t_i) - battery_power(v_i, dvdt_i; phys)/p_scale,
/// with battery_power on the raw (denormalized) series.
Eigen::VectorXd physics_residual(const NormalizedDataset& batch, const PinnModel& model);

/// Same residual with externally supplied normalized predictions; lets tests
/// study the residual at a hypothetical perfect fit.
Eigen::VectorXd physics_residual_given(const Eigen::Ref<const Eigen::VectorXd>& pred_norm,
                                       const NormalizedDataset& batch, const FixedParams& fixed,
                                       const PhysParams& phys);

struct LossParts {
    double total;
    double data;
    double physics;  // lambda-weighted
};

/// data = mean squared prediction error, physics = lambda * mean squared
/// physics residual, total = data + physics.
LossParts pinn_loss(const NormalizedDataset& batch, const PinnModel& model, double lambda);

/// Loss and gradients for one full-batch step, computed on the batched
/// forward/backward path. phys gradient order: (eta, mu, mass, c_rr, c_d).
/// Tests pin these gradients against the autodiff tape.
struct PinnGrads {
    LossParts loss;
    Eigen::VectorXd net;                // Network::flatten order
    Eigen::Matrix<double, 5, 1> phys;
    Eigen::VectorXd pred_norm;
};

PinnGrads pinn_loss_gradients(const NormalizedDataset& batch, const PinnModel& model,
                              double lambda);

/// The full composite loss built on a tape: net_params are leaves in
/// Network::flatten order, phys entries are leaves as well. Reference path
/// for gradient checks.
Var pinn_loss_on_tape(Tape& tape, const NormalizedDataset& batch, const Network& shape,
                      const std::vector<Var>& net_params, const PhysParamsT<Var>& phys,
                      const FixedParams& fixed, double lambda);

/// Full-batch Adam with two parameter groups (network at lr_net, physical
/// parameters at lr_phys on a multiplier-of-initial parameterization).
/// Parameters are clamped to bounds after every step. Losses for both splits
/// are recorded every epoch, evaluated before that epoch's step. The dataset
/// must have been normalized against the training window of the same
/// (val_fraction, seed) split; train_pinn_on_log does this wiring.
std::pair<PinnModel, LossReport> train_pinn(const NormalizedDataset& dataset,
                                            const PinnConfig& config,
                                            const VehiclePreset& preset);

/// Splits, normalizes on the training window, fills dvdt if the log lacks it,
/// then trains.
std::pair<PinnModel, LossReport> train_pinn_on_log(const DriveLog& log, const PinnConfig& config,
                                                   const VehiclePreset& preset);

/// Denormalized network prediction at raw (v, t). Extrapolates silently
/// outside the training range.
double predict_power(const PinnModel& model, double v_mps, double t_s);
Eigen::VectorXd predict_power_series(const PinnModel& model,
                                     const Eigen::Ref<const Eigen::VectorXd>& v,
                                     const Eigen::Ref<const Eigen::VectorXd>& t);

struct ParamRow {
    std::string name;
    double reference;
    double predicted;
    double abs_error;
    double rel_error;  // abs_error / |reference|
};

/// Comparison table of the recovered parameters against a reference (the
/// initial guess, or a known synthetic truth).
std::vector<ParamRow> extract_params(const PinnModel& model, const PhysParams& reference);
void save_param_table(const std::vector<ParamRow>& rows, const std::string& path);

/// Binary network plus a JSON sidecar (phys, fixed, scales) at
/// base_path + ".bin" / ".json".
void save_pinn_model(const PinnModel& model, const std::string& base_path);
PinnModel load_pinn_model(const std::string& base_path);

}  // namespace evpinn
