#pragma once

#include <string>

#include "evpinn/run_config.hpp"

namespace evpinn {

/// Resolves the configured data source: loads the CSV at data.path or
/// generates the configured cycle (at data.truth when present, else the
/// vehicle's initial parameters).
DriveLog resolve_data(const RunConfig& config);

/// Writes the synthetic drive log as CSV into the output directory and prints
/// a one-line summary. Requires a cycle spec.
void cmd_synth(const RunConfig& config);

/// Full pipeline: trains the power model on the configured data, extracts the
/// parameter table, then trains the energy model on the predicted power.
/// Artifacts: config.json echo, drive_log.csv, pinn_model.{bin,json},
/// pinn_loss.csv, params.csv, rknn_model.{bin,json}, rknn_loss.csv.
void cmd_train(const RunConfig& config);

/// Evaluates trained models against a log with ground-truth power. Writes
/// power_pred.csv (t, P_true, P_pred), energy_pred.csv (t, E_rk4_of_true,
/// E_pred) and metrics.json {power_mse_norm, energy_terminal_rel_err}.
void cmd_eval(const RunConfig& config, const std::string& models_dir,
              const std::string& log_path);

/// Prediction without ground truth: power_pred.csv (t, P_pred) and
/// energy_pred.csv (t, E_pred) for the given log's speed trace.
void cmd_predict(const RunConfig& config, const std::string& models_dir,
                 const std::string& log_path);

}  // namespace evpinn
