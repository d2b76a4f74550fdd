#pragma once

#include <Eigen/Core>

#include <array>
#include <functional>
#include <string>
#include <utility>

#include "evpinn/network.hpp"
#include "evpinn/report.hpp"

namespace evpinn {

/// Cumulative energy trace at fixed step dt; e[0] is the starting energy.
struct EnergySeries {
    Eigen::VectorXd t;  // s
    Eigen::VectorXd e;  // J
    double dt = 0.0;
};

/// Power at an arbitrary time, W. Throws outside its valid range.
using PowerSampler = std::function<double(double)>;

/// Piecewise-linear interpolant over a sampled series.
PowerSampler linear_interp_sampler(Eigen::VectorXd t, Eigen::VectorXd p);

/// Quadrature of dE/dt = P(t): the classical fourth-order Runge-Kutta step
/// collapses to Simpson's rule when the right-hand side does not depend on
/// E, so E[n+1] = E[n] + dt/6 * (P(t) + 4 P(t+dt/2) + P(t+dt)).
EnergySeries rk4_integrate(const PowerSampler& power, double t0, Eigen::Index n_steps, double dt,
                           double e0);

/// Steps across a sampled series (midpoints by linear interpolation).
EnergySeries rk4_integrate(const Eigen::Ref<const Eigen::VectorXd>& t,
                           const Eigen::Ref<const Eigen::VectorXd>& p, double dt, double e0);

struct RknnScales {
    double p_scale = 1.0;
    double t_total = 1.0;  // span of the training series, s
    double t0 = 0.0;
    double e_scale() const { return p_scale * t_total; }
};

/// Four stage subnetworks emitting the Runge-Kutta stage values k1..k4 in
/// normalized units. Stage 1 sees P(t) only; stages 2-4 see (P, E) pairs.
struct RknnModel {
    std::array<Network, 4> stages;
    double dt = 1.0;
    RknnScales scales;

    Eigen::Index parameter_count() const;
};

struct RknnConfig {
    int epochs = 10000;
    double lr = 1e-2;
    std::uint64_t seed = 0;
    double val_fraction = 0.2;
    int hidden_width = 32;
    int hidden_depth = 3;
    double clip_norm = 10.0;
};

/// One energy step from (t, E): evaluates the four stages on the sampled
/// power and combines them with the classical RK4 weights. Raw units in and
/// out; normalization is internal.
double rknn_step(const RknnModel& model, const PowerSampler& power, double t, double e);

/// Trains the stage networks against one-step RK4 targets over the series
/// (teacher-forced oracle energies as the E inputs). Mean squared error in
/// normalized energy units, Adam, contiguous validation window.
std::pair<RknnModel, LossReport> train_rknn(const Eigen::Ref<const Eigen::VectorXd>& t,
                                            const Eigen::Ref<const Eigen::VectorXd>& p, double dt,
                                            const RknnConfig& config);

/// Single monolithic network (P(t), P(t+dt/2), P(t+dt), E(t)) -> E(t+dt) of
/// parameter count matched to the four stages within 10%, trained with the
/// same targets, optimizer and split. Comparison baseline.
std::pair<Network, LossReport> train_baseline_dnn(const Eigen::Ref<const Eigen::VectorXd>& t,
                                                  const Eigen::Ref<const Eigen::VectorXd>& p,
                                                  double dt, const RknnConfig& config);

/// Hidden width for the baseline whose parameter count is closest to the
/// stage-network total.
int matched_dnn_width(const RknnConfig& config);

/// Iterates rknn_step from e0 along the sampled series. The series spacing
/// must equal the model's training dt.
EnergySeries predict_energy(const RknnModel& model, const Eigen::Ref<const Eigen::VectorXd>& t,
                            const Eigen::Ref<const Eigen::VectorXd>& p, double e0);

/// EnergySeries as CSV `t_s,e_j`.
void save_energy_series(const EnergySeries& series, const std::string& path);

/// Four network blocks concatenated at base_path + ".bin", JSON sidecar with
/// dt and scales at base_path + ".json".
void save_rknn_model(const RknnModel& model, const std::string& base_path);
RknnModel load_rknn_model(const std::string& base_path);

}  // namespace evpinn
