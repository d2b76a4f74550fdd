#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>

#include "evpinn/autodiff.hpp"

namespace evpinn {

struct DriveLog;

/// Quantities held fixed during training. theta is retained for completeness
/// but is 0 for every preset (flat-road scope).
struct FixedParams {
    double rho = 1.17;           // air density, kg/m^3
    double frontal_area = 2.22;  // m^2
    double gravity = 9.81;       // m/s^2
    double theta = 0.0;          // road incline, rad
    double p_aux = 1100.0;       // auxiliary draw, W
    double beta = -0.045;        // regen deceleration threshold, m/s^2 (< 0)
};

/// The five trainable physical parameters. Templated so the same force and
/// power expressions evaluate on plain reals and on tape variables.
template <class S>
struct PhysParamsT {
    S eta;   // motor efficiency, (0, 1]
    S mu;    // regen efficiency, [0, 1]
    S mass;  // kg, [500, 5000]
    S c_rr;  // rolling resistance coefficient, (0, 0.1]
    S c_d;   // drag coefficient, (0, 1]
};

using PhysParams = PhysParamsT<double>;

/// Clamps each parameter into its admissible interval; applied after every
/// optimizer step. Open lower ends use a tiny positive floor.
PhysParams clamp_to_bounds(PhysParams p);
bool within_bounds(const PhysParams& p);

struct VehiclePreset {
    std::string name;
    FixedParams fixed;
    PhysParams initial;
};

/// Presets "model3lr" and "modelS". Throws on an unknown name.
VehiclePreset vehicle_preset(const std::string& name);

inline double value_of(double x) { return x; }
inline double value_of(const Var& v) { return v.value; }

template <class S>
struct Forces {
    S drag;
    S rolling;
    S gravity;
    S inertia;
};

/// Longitudinal force balance terms at speed v and acceleration dvdt.
template <class S>
Forces<S> force_components(const S& v, const S& dvdt, const FixedParams& fixed,
                           const PhysParamsT<S>& phys) {
    Forces<S> f{
        (0.5 * fixed.rho * fixed.frontal_area) * phys.c_d * v * v,
        phys.c_rr * phys.mass * (fixed.gravity * std::cos(fixed.theta)),
        phys.mass * (fixed.gravity * std::sin(fixed.theta)),
        phys.mass * dvdt,
    };
    return f;
}

/// Instantaneous battery power, W. Uses the multiplied-out form of the power
/// balance, so v = 0 is regular and idle draw reduces to p_aux. The regen
/// indicator [dvdt < beta] gates the inertia term by (1 - mu); it is decided
/// from the numeric dvdt and is never differentiated through.
template <class S>
S battery_power(const S& v, const S& dvdt, const FixedParams& fixed,
                const PhysParamsT<S>& phys) {
    const bool regen = value_of(dvdt) < fixed.beta;
    S inertia = phys.mass * v * dvdt;
    if (regen) inertia = inertia * (1.0 - phys.mu);
    S traction = (0.5 * fixed.rho * fixed.frontal_area) * phys.c_d * v * v * v +
                 phys.c_rr * phys.mass * (fixed.gravity * std::cos(fixed.theta)) * v +
                 phys.mass * (fixed.gravity * std::sin(fixed.theta)) * v + inertia;
    return traction / phys.eta + fixed.p_aux;
}

/// Elementwise battery_power over sampled series.
Eigen::VectorXd battery_power_series(const Eigen::Ref<const Eigen::VectorXd>& v,
                                     const Eigen::Ref<const Eigen::VectorXd>& dvdt,
                                     const FixedParams& fixed, const PhysParams& phys);

/// Power recovered through regenerative braking: -mu * m * v * dvdt when
/// dvdt < beta, else 0.
double regen_power(double v, double dvdt, const PhysParams& phys, const FixedParams& fixed);

/// Ground-truth battery power from measured current and voltage (signed;
/// negative while regenerating).
inline double ground_truth_power(double current_a, double voltage_v) {
    return current_a * voltage_v;
}

/// Mean measured power over idle samples (|v| < v_eps and |dvdt| < a_eps).
/// Throws if the log has no such segment or lacks measured power.
double estimate_aux_power(const DriveLog& log, double v_eps = 0.1, double a_eps = 0.01);

}  // namespace evpinn
