#include "evpinn/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "evpinn/rng.hpp"
#include "num_format.hpp"

namespace evpinn {

using detail::format_double;

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

double parse_double(const std::string& field, int line_no, const char* col) {
    const char* begin = field.data();
    const char* end = begin + field.size();
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) {
        throw std::runtime_error("csv line " + std::to_string(line_no) + ": bad value for " +
                                 col + ": '" + field + "'");
    }
    return value;
}

double phase_speed(const CyclePhase& phase, double v0, double tau, double* dvdt) {
    switch (phase.kind) {
        case PhaseKind::Cruise:
        case PhaseKind::Idle:
            *dvdt = 0.0;
            return v0;
        case PhaseKind::Accelerate:
        case PhaseKind::Brake: {
            // cosine ramp: C^1 joins (dvdt = 0 at both ends)
            const double T = phase.duration_s;
            const double dv = phase.target_mps - v0;
            const double s = M_PI * tau / T;
            *dvdt = dv * (M_PI / (2.0 * T)) * std::sin(s);
            return v0 + dv * 0.5 * (1.0 - std::cos(s));
        }
    }
    throw std::logic_error("unreachable phase kind");
}

double phase_end_speed(const CyclePhase& phase, double v0) {
    if (phase.kind == PhaseKind::Accelerate || phase.kind == PhaseKind::Brake)
        return phase.target_mps;
    return v0;
}

}  // namespace

DriveLog load_log(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("csv: empty input");
    const auto header = split_fields(line);

    bool has_iv = false;
    bool has_pw = false;
    if (header.size() >= 2 && header[0] == "t_s" && header[1] == "v_mps") {
        std::size_t pos = 2;
        if (pos + 1 < header.size() + 1 && pos < header.size() && header[pos] == "voltage_v") {
            if (pos + 1 >= header.size() || header[pos + 1] != "current_a")
                throw std::runtime_error("csv: voltage_v requires paired current_a column");
            has_iv = true;
            pos += 2;
        }
        if (pos < header.size() && header[pos] == "p_w") {
            has_pw = true;
            pos += 1;
        }
        if (pos != header.size())
            throw std::runtime_error("csv: unexpected column '" +
                                     (pos < header.size() ? header[pos] : "") + "'");
    } else {
        throw std::runtime_error("csv: header must start with t_s,v_mps");
    }
    const std::size_t ncols = 2 + (has_iv ? 2 : 0) + (has_pw ? 1 : 0);

    std::vector<double> t, v, volt, curr, pw;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_fields(line);
        if (fields.size() != ncols) {
            throw std::runtime_error("csv line " + std::to_string(line_no) + ": expected " +
                                     std::to_string(ncols) + " fields, got " +
                                     std::to_string(fields.size()));
        }
        std::size_t pos = 0;
        const double ti = parse_double(fields[pos++], line_no, "t_s");
        const double vi = parse_double(fields[pos++], line_no, "v_mps");
        if (!t.empty() && !(ti > t.back())) {
            throw std::runtime_error("csv line " + std::to_string(line_no) +
                                     ": non-increasing time");
        }
        if (vi < 0.0) {
            throw std::runtime_error("csv line " + std::to_string(line_no) + ": negative speed");
        }
        t.push_back(ti);
        v.push_back(vi);
        if (has_iv) {
            volt.push_back(parse_double(fields[pos++], line_no, "voltage_v"));
            curr.push_back(parse_double(fields[pos++], line_no, "current_a"));
        }
        if (has_pw) pw.push_back(parse_double(fields[pos++], line_no, "p_w"));
    }

    DriveLog log;
    log.t = Eigen::Map<Eigen::VectorXd>(t.data(), static_cast<Eigen::Index>(t.size()));
    log.v = Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
    if (has_iv) {
        log.voltage = Eigen::Map<Eigen::VectorXd>(volt.data(), static_cast<Eigen::Index>(volt.size()));
        log.current = Eigen::Map<Eigen::VectorXd>(curr.data(), static_cast<Eigen::Index>(curr.size()));
        Eigen::VectorXd p(log.size());
        for (Eigen::Index i = 0; i < p.size(); ++i)
            p[i] = ground_truth_power((*log.current)[i], (*log.voltage)[i]);
        log.power = std::move(p);
    } else if (has_pw) {
        log.power = Eigen::Map<Eigen::VectorXd>(pw.data(), static_cast<Eigen::Index>(pw.size()));
    }
    return log;
}

DriveLog load_log_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open log file: " + path);
    return load_log(in);
}

void save_log(const DriveLog& log, std::ostream& out) {
    const bool has_p = log.power.has_value();
    out << "t_s,v_mps" << (has_p ? ",p_w" : "") << "\n";
    for (Eigen::Index i = 0; i < log.size(); ++i) {
        out << format_double(log.t[i]) << ',' << format_double(log.v[i]);
        if (has_p) out << ',' << format_double((*log.power)[i]);
        out << '\n';
    }
}

void save_log_file(const DriveLog& log, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    save_log(log, out);
    if (!out) throw std::runtime_error("write failed: " + path);
}

Eigen::VectorXd estimate_accel(const DriveLog& log, int smooth_window) {
    const Eigen::Index n = log.size();
    if (n < 3) throw std::invalid_argument("estimate_accel: log too short (need >= 3 samples)");
    if (smooth_window < 1 || smooth_window % 2 == 0)
        throw std::invalid_argument("estimate_accel: window must be an odd positive integer");

    Eigen::VectorXd vs(n);
    const Eigen::Index half = smooth_window / 2;
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index h = std::min({half, i, n - 1 - i});
        vs[i] = log.v.segment(i - h, 2 * h + 1).mean();
    }

    Eigen::VectorXd dvdt(n);
    dvdt[0] = (vs[1] - vs[0]) / (log.t[1] - log.t[0]);
    for (Eigen::Index i = 1; i + 1 < n; ++i)
        dvdt[i] = (vs[i + 1] - vs[i - 1]) / (log.t[i + 1] - log.t[i - 1]);
    dvdt[n - 1] = (vs[n - 1] - vs[n - 2]) / (log.t[n - 1] - log.t[n - 2]);
    return dvdt;
}

PhaseKind phase_kind_from_string(const std::string& s) {
    if (s == "accelerate") return PhaseKind::Accelerate;
    if (s == "cruise") return PhaseKind::Cruise;
    if (s == "brake") return PhaseKind::Brake;
    if (s == "idle") return PhaseKind::Idle;
    throw std::invalid_argument("unknown cycle phase kind: " + s);
}

double CycleSpec::total_duration() const {
    double d = 0.0;
    for (const auto& p : phases) d += p.duration_s;
    return d;
}

DriveLog synth_cycle(const CycleSpec& spec, const FixedParams& fixed, const PhysParams& phys) {
    if (spec.phases.empty()) throw std::invalid_argument("cycle spec: no phases");
    if (!(spec.sample_rate_hz > 0.0))
        throw std::invalid_argument("cycle spec: sample rate must be positive");
    if (spec.noise_sigma < 0.0) throw std::invalid_argument("cycle spec: negative noise sigma");

    bool has_idle = false;
    double v0 = 0.0;
    std::vector<double> starts;  // phase start times
    double t_acc = 0.0;
    for (const auto& phase : spec.phases) {
        if (!(phase.duration_s > 0.0))
            throw std::invalid_argument("cycle spec: phase duration must be positive");
        if (phase.target_mps < 0.0)
            throw std::invalid_argument("cycle spec: negative target speed");
        if (phase.kind == PhaseKind::Idle) {
            if (std::abs(v0) > 1e-9)
                throw std::invalid_argument("cycle spec: idle phase entered at nonzero speed");
            has_idle = true;
        }
        starts.push_back(t_acc);
        t_acc += phase.duration_s;
        v0 = phase_end_speed(phase, v0);
    }
    if (!has_idle) throw std::invalid_argument("cycle spec: needs at least one idle phase");

    const double duration = spec.total_duration();
    const auto n = static_cast<Eigen::Index>(std::floor(duration * spec.sample_rate_hz)) + 1;
    const double dt = 1.0 / spec.sample_rate_hz;

    DriveLog log;
    log.t.resize(n);
    log.v.resize(n);
    Eigen::VectorXd dvdt(n);
    Eigen::VectorXd p(n);

    // entry speeds per phase, for sampling
    std::vector<double> entry(spec.phases.size());
    v0 = 0.0;
    for (std::size_t k = 0; k < spec.phases.size(); ++k) {
        entry[k] = v0;
        v0 = phase_end_speed(spec.phases[k], v0);
    }

    double min_dvdt = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * dt;
        auto it = std::upper_bound(starts.begin(), starts.end(), t);
        std::size_t k = static_cast<std::size_t>(std::distance(starts.begin(), it)) - 1;
        double tau = t - starts[k];
        if (tau > spec.phases[k].duration_s) tau = spec.phases[k].duration_s;  // final sample
        double a = 0.0;
        const double v = phase_speed(spec.phases[k], entry[k], tau, &a);
        log.t[i] = t;
        log.v[i] = std::max(0.0, v);
        dvdt[i] = a;
        min_dvdt = std::min(min_dvdt, a);
        p[i] = battery_power(log.v[i], a, fixed, phys);
    }

    if (!(min_dvdt < fixed.beta)) {
        throw std::invalid_argument(
            "cycle spec: needs a braking phase crossing the regen threshold");
    }

    if (spec.noise_sigma > 0.0) {
        const double range = p.maxCoeff() - p.minCoeff();
        const double sigma = spec.noise_sigma * range;
        std::mt19937_64 rng(spec.seed);
        for (Eigen::Index i = 0; i < n; ++i) p[i] += sigma * gaussian(rng);
    }

    log.power = std::move(p);
    log.dvdt = std::move(dvdt);
    return log;
}

double normalize_v(double v, const Scales& s) {
    const double range = s.v_max - s.v_min;
    return range > 0.0 ? (v - s.v_min) / range : 0.0;
}

double normalize_t(double t, const Scales& s) {
    const double range = s.t_max - s.t_min;
    return range > 0.0 ? (t - s.t_min) / range : 0.0;
}

NormalizedDataset normalize(const DriveLog& log, const std::vector<bool>& training_mask) {
    if (!log.power) throw std::runtime_error("normalize: log has no ground-truth power");
    if (!log.dvdt)
        throw std::runtime_error("normalize: log has no dvdt series (run estimate_accel first)");
    if (static_cast<Eigen::Index>(training_mask.size()) != log.size())
        throw std::invalid_argument("normalize: mask length mismatch");

    Scales s;
    bool any = false;
    s.t_min = s.v_min = std::numeric_limits<double>::infinity();
    s.t_max = s.v_max = -std::numeric_limits<double>::infinity();
    double p_abs = 0.0;
    for (Eigen::Index i = 0; i < log.size(); ++i) {
        if (!training_mask[static_cast<std::size_t>(i)]) continue;
        any = true;
        s.t_min = std::min(s.t_min, log.t[i]);
        s.t_max = std::max(s.t_max, log.t[i]);
        s.v_min = std::min(s.v_min, log.v[i]);
        s.v_max = std::max(s.v_max, log.v[i]);
        p_abs = std::max(p_abs, std::abs((*log.power)[i]));
    }
    if (!any) throw std::invalid_argument("normalize: empty training mask");
    if (p_abs == 0.0) throw std::runtime_error("normalize: zero power range (degenerate log)");
    s.p_scale = p_abs;

    NormalizedDataset ds;
    ds.scales = s;
    ds.t = log.t;
    ds.v = log.v;
    ds.dvdt = *log.dvdt;
    ds.power = *log.power;
    ds.inputs.resize(2, log.size());
    ds.targets.resize(log.size());
    for (Eigen::Index i = 0; i < log.size(); ++i) {
        ds.inputs(0, i) = normalize_v(log.v[i], s);
        ds.inputs(1, i) = normalize_t(log.t[i], s);
        ds.targets[i] = (*log.power)[i] / s.p_scale;
    }
    return ds;
}

NormalizedDataset NormalizedDataset::rows(const std::vector<Eigen::Index>& idx) const {
    NormalizedDataset out;
    out.scales = scales;
    const auto m = static_cast<Eigen::Index>(idx.size());
    out.inputs.resize(2, m);
    out.targets.resize(m);
    out.t.resize(m);
    out.v.resize(m);
    out.dvdt.resize(m);
    out.power.resize(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const Eigen::Index i = idx[static_cast<std::size_t>(j)];
        out.inputs.col(j) = inputs.col(i);
        out.targets[j] = targets[i];
        out.t[j] = t[i];
        out.v[j] = v[i];
        out.dvdt[j] = dvdt[i];
        out.power[j] = power[i];
    }
    return out;
}

SplitIndices make_split(Eigen::Index n, double val_fraction, std::uint64_t seed) {
    if (!(val_fraction > 0.0 && val_fraction < 1.0))
        throw std::invalid_argument("split: val_fraction must be in (0, 1)");
    const auto n_val = static_cast<Eigen::Index>(
        std::llround(static_cast<double>(n) * val_fraction));
    if (n_val < 1 || n_val >= n)
        throw std::invalid_argument("split: validation window empty or covers everything");

    std::mt19937_64 rng(seed);
    const auto offset = static_cast<Eigen::Index>(
        rng() % static_cast<std::uint64_t>(n - n_val + 1));

    SplitIndices s;
    s.train_mask.assign(static_cast<std::size_t>(n), true);
    for (Eigen::Index i = offset; i < offset + n_val; ++i)
        s.train_mask[static_cast<std::size_t>(i)] = false;
    for (Eigen::Index i = 0; i < n; ++i) {
        (s.train_mask[static_cast<std::size_t>(i)] ? s.train : s.val).push_back(i);
    }
    return s;
}

std::pair<NormalizedDataset, NormalizedDataset> split(const NormalizedDataset& ds,
                                                      double val_fraction, std::uint64_t seed) {
    const SplitIndices s = make_split(ds.size(), val_fraction, seed);
    return {ds.rows(s.train), ds.rows(s.val)};
}

}  // namespace evpinn
