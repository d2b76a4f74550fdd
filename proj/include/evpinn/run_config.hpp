#pragma once

#include <optional>
#include <stdexcept>
#include <string>

#include "evpinn/data.hpp"
#include "evpinn/dynamics.hpp"
#include "evpinn/pinn.hpp"
#include "evpinn/rknn.hpp"

namespace evpinn {

/// Configuration / usage problems; the CLI maps these to exit code 2.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DataConfig {
    std::optional<std::string> path;    // CSV drive log
    std::optional<CycleSpec> cycle;     // synthetic cycle spec
    std::optional<PhysParams> truth;    // generating parameters for the cycle
};

/// Parsed JSON run configuration. Unknown keys anywhere are rejected; the
/// verbatim source text is kept for provenance echoing.
struct RunConfig {
    VehiclePreset vehicle;
    DataConfig data;
    PinnConfig pinn;
    RknnConfig rknn;
    std::string output_dir;
    std::string raw_text;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);

}  // namespace evpinn
