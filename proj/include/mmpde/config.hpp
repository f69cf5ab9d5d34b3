#pragma once

// Plain-text key = value run configuration and the per-step CSV log.

#include "mmpde/geometry.hpp"
#include "mmpde/mmpde_integrator.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace mmpde {

enum class BoundaryChoice { automatic, free, fixed, slide };

struct RunConfig {
    GeometrySpec geometry;
    std::string mesh_file;  // geometry.name = external

    MetricKind metric = MetricKind::identity;
    double floor_eps = 0.0;  // 0: default floor
    int smoothing = -1;      // -1: default passes

    double p = 1.5;
    double theta = 1.0 / 3.0;

    FlowConfig flow;
    std::optional<bool> reproject;  // unset: on when a parametrization exists
    BoundaryChoice boundary = BoundaryChoice::automatic;
    bool check_bounds = true;

    std::string output_dir = "out";
    int output_every = 0;  // 0: initial and final snapshots only

    std::vector<std::string> warnings;
};

class ConfigError : public InputError {
public:
    using InputError::InputError;
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct ConfigValue {
    std::string text;
    int line = 0;
};

class ConfigReader {
public:
    ConfigReader(std::map<std::string, ConfigValue> values, std::string name)
        : values_(std::move(values)), name_(std::move(name)) {}

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    [[noreturn]] void fail(const std::string& key, const std::string& what) const {
        const auto it = values_.find(key);
        const std::string where = it != values_.end() ? name_ + ":" + std::to_string(it->second.line) : name_;
        throw ConfigError(where + ": " + key + ": " + what);
    }

    const std::string& text(const std::string& key) const { return values_.at(key).text; }

    double real(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        const auto& t = text(key);
        double v = 0.0;
        const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
        if (r.ec != std::errc() || r.ptr != t.data() + t.size()) fail(key, "expected a number, got '" + t + "'");
        return v;
    }

    long long integer(const std::string& key, long long fallback) const {
        if (!has(key)) return fallback;
        const auto& t = text(key);
        long long v = 0;
        const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
        if (r.ec != std::errc() || r.ptr != t.data() + t.size()) fail(key, "expected an integer, got '" + t + "'");
        return v;
    }

    std::uint64_t unsigned64(const std::string& key, std::uint64_t fallback) const {
        if (!has(key)) return fallback;
        const auto& t = text(key);
        std::uint64_t v = 0;
        const auto r = std::from_chars(t.data(), t.data() + t.size(), v);
        if (r.ec != std::errc() || r.ptr != t.data() + t.size())
            fail(key, "expected a nonnegative integer, got '" + t + "'");
        return v;
    }

    bool boolean(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const auto& t = text(key);
        if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
        if (t == "false" || t == "0" || t == "no" || t == "off") return false;
        fail(key, "expected a boolean, got '" + t + "'");
    }

private:
    std::map<std::string, ConfigValue> values_;
    std::string name_;
};

inline const std::vector<std::string>& known_config_keys() {
    static const std::vector<std::string> keys = {
        "geometry.name",   "geometry.r",         "geometry.c",         "geometry.n",
        "geometry.n_s",    "geometry.n_zeta",    "geometry.seed",      "geometry.perturb",
        "geometry.file",   "metric.kind",        "metric.floor_eps",   "metric.smoothing",
        "energy.p",        "energy.theta",       "flow.tau",           "flow.dt_init",
        "flow.dt_fraction", "flow.max_steps",    "flow.tol",           "flow.reproject",
        "boundary.policy", "diagnostics.check_bounds", "output.dir",   "output.every"};
    return keys;
}

} // namespace detail

/// Parse configuration text. `name` labels error messages.
inline RunConfig parse_config(std::istream& in, const std::string& name = "config") {
    std::map<std::string, detail::ConfigValue> values;
    std::string line;
    int no = 0;
    const auto& keys = detail::known_config_keys();
    while (std::getline(in, line)) {
        ++no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(name + ":" + std::to_string(no) + ": expected key = value");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError(name + ":" + std::to_string(no) + ": expected key = value");
        if (std::find(keys.begin(), keys.end(), key) == keys.end())
            throw ConfigError(name + ":" + std::to_string(no) + ": unknown key '" + key + "'");
        if (values.count(key))
            throw ConfigError(name + ":" + std::to_string(no) + ": duplicate key '" + key + "'");
        values[key] = {value, no};
    }

    const detail::ConfigReader r(std::move(values), name);
    RunConfig c;
    if (!r.has("geometry.name")) throw ConfigError(name + ": missing mandatory key 'geometry.name'");
    try {
        c.geometry = default_spec(geometry_from_string(r.text("geometry.name")));
    } catch (const InputError& e) {
        r.fail("geometry.name", e.what());
    }
    auto& g = c.geometry;
    g.r = r.real("geometry.r", g.r);
    g.c = r.real("geometry.c", g.c);
    g.n = int(r.integer("geometry.n", g.n));
    g.n_s = int(r.integer("geometry.n_s", g.n_s));
    g.n_zeta = int(r.integer("geometry.n_zeta", g.n_zeta));
    g.seed = r.unsigned64("geometry.seed", g.seed);
    g.perturb = r.real("geometry.perturb", g.perturb);
    if (!(g.perturb >= 0.0 && g.perturb < 0.45)) r.fail("geometry.perturb", "must lie in [0, 0.45)");
    if (g.n < 1 || g.n_s < 1 || g.n_zeta < 1) r.fail("geometry.n", "resolution must be positive");
    if (g.name == GeometryName::external) {
        if (!r.has("geometry.file")) throw ConfigError(name + ": geometry.name = external needs geometry.file");
        c.mesh_file = r.text("geometry.file");
    } else if (r.has("geometry.file")) {
        r.fail("geometry.file", "only valid with geometry.name = external");
    }

    if (r.has("metric.kind")) {
        const auto& k = r.text("metric.kind");
        if (k == "identity") c.metric = MetricKind::identity;
        else if (k == "curvature") c.metric = MetricKind::curvature;
        else r.fail("metric.kind", "expected identity or curvature, got '" + k + "'");
    }
    c.floor_eps = r.real("metric.floor_eps", 0.0);
    if (c.floor_eps < 0.0) r.fail("metric.floor_eps", "must be nonnegative");
    c.smoothing = int(r.integer("metric.smoothing", -1));

    c.p = r.real("energy.p", c.p);
    c.theta = r.real("energy.theta", c.theta);
    if (!(c.p > 1.0)) r.fail("energy.p", "must be greater than 1");
    if (!(c.theta > 0.0 && c.theta <= 1.0)) r.fail("energy.theta", "must lie in (0, 1]");

    c.flow.tau = r.real("flow.tau", c.flow.tau);
    c.flow.dt_init = r.real("flow.dt_init", c.flow.dt_init);
    c.flow.dt_max_displacement_fraction = r.real("flow.dt_fraction", c.flow.dt_max_displacement_fraction);
    c.flow.max_steps = int(r.integer("flow.max_steps", c.flow.max_steps));
    c.flow.tol_velocity = r.real("flow.tol", c.flow.tol_velocity);
    if (r.has("flow.reproject")) c.reproject = r.boolean("flow.reproject", false);
    try {
        c.flow.validate();
    } catch (const InputError& e) {
        throw ConfigError(name + ": " + e.what());
    }

    if (r.has("boundary.policy")) {
        const auto& b = r.text("boundary.policy");
        if (b == "auto") c.boundary = BoundaryChoice::automatic;
        else if (b == "free") c.boundary = BoundaryChoice::free;
        else if (b == "fixed") c.boundary = BoundaryChoice::fixed;
        else if (b == "slide") c.boundary = BoundaryChoice::slide;
        else r.fail("boundary.policy", "expected auto, free, fixed or slide, got '" + b + "'");
    }
    c.check_bounds = r.boolean("diagnostics.check_bounds", true);

    if (r.has("output.dir")) c.output_dir = r.text("output.dir");
    c.output_every = int(r.integer("output.every", 0));
    if (c.output_every < 0) r.fail("output.every", "must be nonnegative");

    if (c.check_bounds && c.theta > 0.5) c.warnings.push_back("coercivity condition not guaranteed (θ > 0.5)");
    return c;
}

inline RunConfig parse_config_string(const std::string& text, const std::string& name = "config") {
    std::istringstream in(text);
    return parse_config(in, name);
}

inline RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    auto c = parse_config(in, path.string());
    // relative mesh paths are taken relative to the config file
    if (!c.mesh_file.empty() && std::filesystem::path(c.mesh_file).is_relative())
        c.mesh_file = (path.parent_path() / c.mesh_file).string();
    return c;
}

inline constexpr const char* kLogHeader = "step,t,energy,min_K,min_aKM,max_vel,grad_residual";

inline std::string format_log_row(const StepRecord& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g", r.step, r.t, r.energy, r.min_measure,
                  r.min_metric_height, r.max_velocity, r.grad_residual);
    return buf;
}

} // namespace mmpde
