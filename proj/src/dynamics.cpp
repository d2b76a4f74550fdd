#include "evpinn/dynamics.hpp"

#include <algorithm>
#include <stdexcept>

#include "evpinn/data.hpp"

namespace evpinn {

namespace {
constexpr double kTinyFloor = 1e-6;  // open-interval lower ends
}

PhysParams clamp_to_bounds(PhysParams p) {
    p.eta = std::clamp(p.eta, kTinyFloor, 1.0);
    p.mu = std::clamp(p.mu, 0.0, 1.0);
    p.mass = std::clamp(p.mass, 500.0, 5000.0);
    p.c_rr = std::clamp(p.c_rr, kTinyFloor, 0.1);
    p.c_d = std::clamp(p.c_d, kTinyFloor, 1.0);
    return p;
}

bool within_bounds(const PhysParams& p) {
    return p.eta > 0.0 && p.eta <= 1.0 && p.mu >= 0.0 && p.mu <= 1.0 && p.mass >= 500.0 &&
           p.mass <= 5000.0 && p.c_rr > 0.0 && p.c_rr <= 0.1 && p.c_d > 0.0 && p.c_d <= 1.0;
}

VehiclePreset vehicle_preset(const std::string& name) {
    if (name == "model3lr") {
        return VehiclePreset{
            "model3lr",
            FixedParams{1.17, 2.22, 9.81, 0.0, 1100.0, -0.045},
            PhysParams{0.7, 0.5, 1823.0, 0.0096, 0.23},
        };
    }
    if (name == "modelS") {
        return VehiclePreset{
            "modelS",
            FixedParams{1.17, 2.40, 9.81, 0.0, 390.0, -0.045},
            PhysParams{0.7, 0.5, 2250.0, 0.0096, 0.23},
        };
    }
    throw std::invalid_argument("unknown vehicle preset: " + name);
}

Eigen::VectorXd battery_power_series(const Eigen::Ref<const Eigen::VectorXd>& v,
                                     const Eigen::Ref<const Eigen::VectorXd>& dvdt,
                                     const FixedParams& fixed, const PhysParams& phys) {
    if (v.size() != dvdt.size())
        throw std::invalid_argument("battery_power_series: length mismatch");
    Eigen::VectorXd out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out[i] = battery_power(v[i], dvdt[i], fixed, phys);
    return out;
}

double regen_power(double v, double dvdt, const PhysParams& phys, const FixedParams& fixed) {
    if (dvdt >= fixed.beta) return 0.0;
    return -phys.mu * phys.mass * v * dvdt;
}

double estimate_aux_power(const DriveLog& log, double v_eps, double a_eps) {
    if (!log.power) throw std::runtime_error("estimate_aux_power: log has no measured power");
    if (!log.dvdt) throw std::runtime_error("estimate_aux_power: log has no dvdt series");
    double sum = 0.0;
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < log.size(); ++i) {
        if (std::abs(log.v[i]) < v_eps && std::abs((*log.dvdt)[i]) < a_eps) {
            sum += (*log.power)[i];
            ++count;
        }
    }
    if (count == 0) throw std::runtime_error("estimate_aux_power: no idle segment in log");
    return sum / static_cast<double>(count);
}

}  // namespace evpinn
