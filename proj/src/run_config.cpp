#include "evpinn/run_config.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace evpinn {

namespace {

using nlohmann::json;

void require_keys(const json& j, const std::string& section,
                  std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError("config: section '" + section + "' must be an object");
    for (const auto& [key, value] : j.items()) {
        bool known = false;
        for (const char* a : allowed) {
            if (key == a) {
                known = true;
                break;
            }
        }
        if (!known) throw ConfigError("config: unknown key '" + key + "' in " + section);
    }
}

PhysParams parse_phys(const json& j, const std::string& section) {
    require_keys(j, section, {"eta", "mu", "mass", "c_rr", "c_d"});
    PhysParams p;
    try {
        p.eta = j.at("eta");
        p.mu = j.at("mu");
        p.mass = j.at("mass");
        p.c_rr = j.at("c_rr");
        p.c_d = j.at("c_d");
    } catch (const json::exception& e) {
        throw ConfigError("config: bad " + section + ": " + e.what());
    }
    return p;
}

FixedParams parse_fixed(const json& j, const FixedParams& defaults) {
    require_keys(j, "vehicle.fixed",
                 {"rho", "frontal_area", "gravity", "theta", "p_aux", "beta"});
    FixedParams f = defaults;
    f.rho = j.value("rho", f.rho);
    f.frontal_area = j.value("frontal_area", f.frontal_area);
    f.gravity = j.value("gravity", f.gravity);
    f.theta = j.value("theta", f.theta);
    f.p_aux = j.value("p_aux", f.p_aux);
    f.beta = j.value("beta", f.beta);
    return f;
}

VehiclePreset parse_vehicle(const json& j) {
    if (j.is_string()) {
        try {
            return vehicle_preset(j.get<std::string>());
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
    }
    require_keys(j, "vehicle", {"name", "preset", "fixed", "initial"});
    VehiclePreset base = j.contains("preset") ? parse_vehicle(j.at("preset"))
                                              : vehicle_preset("model3lr");
    if (j.contains("name")) base.name = j.at("name").get<std::string>();
    if (j.contains("fixed")) base.fixed = parse_fixed(j.at("fixed"), base.fixed);
    if (j.contains("initial")) base.initial = parse_phys(j.at("initial"), "vehicle.initial");
    return base;
}

CycleSpec parse_cycle(const json& j) {
    require_keys(j, "data.cycle", {"phases", "sample_rate_hz", "noise_sigma", "seed"});
    CycleSpec spec;
    spec.sample_rate_hz = j.value("sample_rate_hz", 1.0);
    spec.noise_sigma = j.value("noise_sigma", 0.0);
    spec.seed = j.value("seed", std::uint64_t{0});
    if (!j.contains("phases")) throw ConfigError("config: data.cycle needs 'phases'");
    for (const auto& pj : j.at("phases")) {
        require_keys(pj, "data.cycle.phases[]", {"kind", "duration_s", "target_mps"});
        CyclePhase phase;
        try {
            phase.kind = phase_kind_from_string(pj.at("kind").get<std::string>());
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("config: ") + e.what());
        }
        phase.duration_s = pj.at("duration_s");
        phase.target_mps = pj.value("target_mps", 0.0);
        spec.phases.push_back(phase);
    }
    return spec;
}

DataConfig parse_data(const json& j) {
    require_keys(j, "data", {"path", "cycle", "truth"});
    DataConfig d;
    if (j.contains("path")) d.path = j.at("path").get<std::string>();
    if (j.contains("cycle")) d.cycle = parse_cycle(j.at("cycle"));
    if (j.contains("truth")) d.truth = parse_phys(j.at("truth"), "data.truth");
    if (d.path.has_value() == d.cycle.has_value())
        throw ConfigError("config: data needs exactly one of 'path' or 'cycle'");
    return d;
}

PinnConfig parse_pinn(const json& j) {
    require_keys(j, "pinn",
                 {"lambda", "epochs", "lr_net", "lr_phys", "layer_sizes", "seed", "clip_norm",
                  "val_fraction", "smooth_window"});
    PinnConfig c;
    c.lambda = j.value("lambda", c.lambda);
    c.epochs = j.value("epochs", c.epochs);
    c.lr_net = j.value("lr_net", c.lr_net);
    c.lr_phys = j.value("lr_phys", c.lr_phys);
    if (j.contains("layer_sizes")) c.layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
    c.seed = j.value("seed", c.seed);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.smooth_window = j.value("smooth_window", c.smooth_window);
    return c;
}

RknnConfig parse_rknn(const json& j) {
    require_keys(j, "rknn",
                 {"epochs", "lr", "seed", "val_fraction", "hidden_width", "hidden_depth",
                  "clip_norm"});
    RknnConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.seed = j.value("seed", c.seed);
    c.val_fraction = j.value("val_fraction", c.val_fraction);
    c.hidden_width = j.value("hidden_width", c.hidden_width);
    c.hidden_depth = j.value("hidden_depth", c.hidden_depth);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    return c;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    require_keys(j, "<root>", {"vehicle", "data", "pinn", "rknn", "output_dir"});
    if (!j.contains("vehicle")) throw ConfigError("config: missing 'vehicle'");
    if (!j.contains("data")) throw ConfigError("config: missing 'data'");

    RunConfig cfg;
    cfg.raw_text = text;
    try {
        cfg.vehicle = parse_vehicle(j.at("vehicle"));
        cfg.data = parse_data(j.at("data"));
        if (j.contains("pinn")) cfg.pinn = parse_pinn(j.at("pinn"));
        if (j.contains("rknn")) cfg.rknn = parse_rknn(j.at("rknn"));
        cfg.output_dir = j.value("output_dir", std::string{});
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config file not found: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

}  // namespace evpinn
