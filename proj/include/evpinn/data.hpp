#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "evpinn/dynamics.hpp"

namespace evpinn {

/// Time-indexed telemetry. All present series have equal length, t is
/// strictly increasing, v >= 0. power is measured (I*V), carried (synthetic
/// p_w column) or absent; dvdt is analytic for synthetic logs and estimated
/// for loaded ones.
struct DriveLog {
    Eigen::VectorXd t;  // s
    Eigen::VectorXd v;  // m/s
    std::optional<Eigen::VectorXd> voltage;  // V
    std::optional<Eigen::VectorXd> current;  // A
    std::optional<Eigen::VectorXd> power;    // W
    std::optional<Eigen::VectorXd> dvdt;     // m/s^2

    Eigen::Index size() const { return t.size(); }
};

/// CSV schema: header `t_s,v_mps[,voltage_v,current_a][,p_w]` (voltage and
/// current only as a pair). Power comes from Ohm's law when voltage/current
/// are present, else from p_w. Throws with the offending line number on
/// malformed rows, missing columns or non-increasing time.
DriveLog load_log(std::istream& in);
DriveLog load_log_file(const std::string& path);

/// Writes `t_s,v_mps,p_w` (or without p_w if no power). Values round-trip
/// bit-exactly through load_log.
void save_log(const DriveLog& log, std::ostream& out);
void save_log_file(const DriveLog& log, const std::string& path);

/// Moving-average smoothing of v (odd window; shrinks symmetrically at the
/// ends) followed by central differences; one-sided differences at the
/// endpoints.
Eigen::VectorXd estimate_accel(const DriveLog& log, int smooth_window);

enum class PhaseKind { Accelerate, Cruise, Brake, Idle };

struct CyclePhase {
    PhaseKind kind;
    double duration_s = 0.0;
    double target_mps = 0.0;  // end speed for Accelerate/Brake, held speed for Cruise
};

/// Synthetic drive-cycle description. Speed follows cosine-smoothed ramps
/// between phase targets, so v(t) is C^1 and the analytic dvdt is exact.
struct CycleSpec {
    std::vector<CyclePhase> phases;
    double sample_rate_hz = 1.0;
    double noise_sigma = 0.0;  // fraction of the noise-free power range
    std::uint64_t seed = 0;

    double total_duration() const;
};

PhaseKind phase_kind_from_string(const std::string& s);

/// Generates a DriveLog from the phase grammar; power is battery_power on the
/// analytic dvdt plus Gaussian noise of std = noise_sigma * (max P - min P).
/// Requires at least one idle phase and one braking phase that crosses the
/// regen threshold. Deterministic in the seed.
DriveLog synth_cycle(const CycleSpec& spec, const FixedParams& fixed, const PhysParams& phys);

struct Scales {
    double t_min = 0.0;
    double t_max = 1.0;
    double v_min = 0.0;
    double v_max = 1.0;
    double p_scale = 1.0;  // max |P| over the training split
};

/// Inputs normalized to [0,1] on the training rows, targets divided by
/// p_scale. Raw series are kept alongside for physics evaluation.
struct NormalizedDataset {
    Eigen::MatrixXd inputs;   // 2 x N, rows (v_norm, t_norm)
    Eigen::VectorXd targets;  // P / p_scale
    Eigen::VectorXd t;        // raw s
    Eigen::VectorXd v;        // raw m/s
    Eigen::VectorXd dvdt;     // raw m/s^2
    Eigen::VectorXd power;    // raw W
    Scales scales;

    Eigen::Index size() const { return targets.size(); }
    NormalizedDataset rows(const std::vector<Eigen::Index>& idx) const;
};

double normalize_v(double v, const Scales& s);
double normalize_t(double t, const Scales& s);

/// Scales are computed on rows where training_mask is true and applied to all
/// rows. Degenerate channels (max == min) map to 0. Throws if power is absent
/// or identically zero, or the mask is empty.
NormalizedDataset normalize(const DriveLog& log, const std::vector<bool>& training_mask);

/// Deterministic contiguous validation window: n_val = round(n * val_fraction)
/// rows starting at a seed-chosen offset. Complement is the training set.
struct SplitIndices {
    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> val;
    std::vector<bool> train_mask;
};

SplitIndices make_split(Eigen::Index n, double val_fraction, std::uint64_t seed);

/// Held-out time window split of an already-normalized dataset.
std::pair<NormalizedDataset, NormalizedDataset> split(const NormalizedDataset& ds,
                                                      double val_fraction, std::uint64_t seed);

}  // namespace evpinn
