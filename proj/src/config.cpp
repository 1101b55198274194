#include "synforce/config.hpp"

#include "synforce/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <sstream>

namespace synforce {

namespace {

std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt(double v)
{
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string fmt(std::uint64_t v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }

double to_double(const std::string& key, const std::string& v)
{
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out)) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not a finite number");
    }
    return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v)
{
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size()) {
        throw ConfigError("config key '" + key + "': '" + v + "' is not a non-negative integer");
    }
    return out;
}

bool to_bool(const std::string& key, const std::string& v)
{
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': '" + v + "' is not a boolean");
}

std::string_view init_name(FieldInit i)
{
    switch (i) {
    case FieldInit::none: return "none";
    case FieldInit::point: return "point";
    case FieldInit::ring: return "ring";
    case FieldInit::gaussian: return "gaussian";
    case FieldInit::uniform: return "uniform";
    }
    return "none";
}

FieldInit init_from(const std::string& key, const std::string& v)
{
    for (FieldInit i : {FieldInit::none, FieldInit::point, FieldInit::ring, FieldInit::gaussian, FieldInit::uniform}) {
        if (v == init_name(i)) return i;
    }
    throw ConfigError("config key '" + key + "': unknown initial state '" + v + "'");
}

struct Entry {
    std::function<void(RunConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class Member>
Entry real(Member m)
{
    return {[m](RunConfig& c, const std::string& k, const std::string& v) { m(c) = to_double(k, v); },
            [m](const RunConfig& c) { return fmt(m(const_cast<RunConfig&>(c))); }};
}

template <class Member>
Entry count(Member m)
{
    return {[m](RunConfig& c, const std::string& k, const std::string& v) {
                m(c) = static_cast<std::remove_reference_t<decltype(m(c))>>(to_uint(k, v));
            },
            [m](const RunConfig& c) { return fmt(static_cast<std::uint64_t>(m(const_cast<RunConfig&>(c)))); }};
}

template <class Member>
Entry flag(Member m)
{
    return {[m](RunConfig& c, const std::string& k, const std::string& v) { m(c) = to_bool(k, v); },
            [m](const RunConfig& c) { return fmt(static_cast<bool>(m(const_cast<RunConfig&>(c)))); }};
}

#define SF_REAL(key, expr) {key, real([](RunConfig& c) -> double& { return expr; })}
#define SF_COUNT(key, expr) {key, count([](RunConfig& c) -> auto& { return expr; })}
#define SF_FLAG(key, expr) {key, flag([](RunConfig& c) -> bool& { return expr; })}

const std::vector<std::pair<std::string, Entry>>& table()
{
    static const std::vector<std::pair<std::string, Entry>> t = {
        SF_COUNT("seed", c.seed),
        {"train.mode",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              try {
                  c.train.mode = fit_mode_from_string(v);
              } catch (const ConfigError&) {
                  throw ConfigError("config key '" + k + "': mode must be synforce or dsvdd");
              }
          },
          [](const RunConfig& c) { return std::string(to_string(c.train.mode)); }}},
        SF_COUNT("train.epochs", c.train.epochs),
        SF_COUNT("train.window", c.train.window),
        SF_COUNT("train.stride", c.train.stride),
        SF_COUNT("train.batch", c.train.batch),
        SF_REAL("train.learning_rate", c.train.learning_rate),
        SF_COUNT("train.global_dim", c.train.global_dim),
        SF_COUNT("train.local_dim", c.train.local_dim),
        SF_REAL("train.lambda_w", c.train.lambda_w),
        SF_COUNT("train.knn_cap", c.train.knn_cap),
        SF_REAL("train.divergence_limit", c.train.divergence_limit),
        SF_REAL("loss.omega_diff", c.train.loss.omega_diff),
        SF_REAL("loss.omega_vol", c.train.loss.omega_vol),
        SF_REAL("loss.lambda_stdp", c.train.loss.lambda_stdp),
        SF_REAL("loss.a_plus", c.train.loss.a_plus),
        SF_REAL("loss.tau_plus", c.train.loss.tau_plus),
        SF_COUNT("loss.max_lag", c.train.loss.max_lag),
        SF_REAL("loss.sigma_force", c.train.loss.sigma_force),
        SF_REAL("loss.epsilon", c.train.loss.epsilon),
        SF_COUNT("loss.knn_k", c.train.loss.knn_k),
        {"loss.sigma_d",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "median") {
                  c.train.loss.sigma_d.reset();
              } else {
                  c.train.loss.sigma_d = to_double(k, v);
              }
          },
          [](const RunConfig& c) { return c.train.loss.sigma_d ? fmt(*c.train.loss.sigma_d) : std::string("median"); }}},
        SF_REAL("loss.sigma_v", c.train.loss.sigma_v),
        SF_REAL("pipeline.pca_threshold", c.pca_threshold),
        SF_COUNT("pipeline.denoise_window", c.denoise.window),
        SF_REAL("pipeline.denoise_nsigma", c.denoise.nsigma),
        SF_REAL("pipeline.cadence", c.cadence),
        SF_COUNT("fleet.vehicles", c.fleet.vehicles),
        SF_COUNT("fleet.frames", c.fleet.frames),
        SF_COUNT("fleet.cells", c.fleet.cells),
        SF_COUNT("fleet.probes", c.fleet.probes),
        SF_REAL("fleet.cadence", c.fleet.cadence),
        SF_COUNT("fleet.cycle_frames", c.fleet.cycle_frames),
        SF_COUNT("field.n", c.field.n),
        SF_REAL("field.radius", c.field.radius),
        SF_REAL("field.dt", c.field.dt),
        SF_REAL("field.eta", c.field.eta),
        SF_REAL("field.lambda", c.field.lambda),
        SF_REAL("field.diffusion", c.field.diffusion),
        SF_REAL("field.sigma", c.field.sigma),
        SF_REAL("field.a_plus", c.field.a_plus),
        SF_REAL("field.a_minus", c.field.a_minus),
        SF_REAL("field.tau_plus", c.field.tau_plus),
        SF_REAL("field.tau_minus", c.field.tau_minus),
        SF_REAL("field.alpha", c.field.alpha),
        SF_REAL("field.epsilon", c.field.epsilon),
        SF_REAL("field.rho_minus", c.field.rho_minus),
        SF_REAL("field.centre_x", c.field.centre.x()),
        SF_REAL("field.centre_y", c.field.centre.y()),
        SF_COUNT("field.steps", c.field_run.steps),
        {"field.init",
         {[](RunConfig& c, const std::string& k, const std::string& v) { c.field_run.init = init_from(k, v); },
          [](const RunConfig& c) { return std::string(init_name(c.field_run.init)); }}},
        SF_REAL("field.init_radius", c.field_run.init_radius),
        SF_REAL("field.init_width", c.field_run.init_width),
        SF_REAL("field.init_mass", c.field_run.init_mass),
        SF_COUNT("field.particles", c.field_run.particles),
        SF_REAL("field.particle_charge", c.field_run.particle_charge),
        SF_REAL("field.particle_radius", c.field_run.particle_radius),
        SF_REAL("field.spike_span", c.field_run.spike_span),
        SF_COUNT("field.snapshot_every", c.field_run.snapshot_every),
        SF_COUNT("field.snapshot_stride", c.field_run.snapshot_stride),
        SF_FLAG("field.poisson", c.field_run.poisson),
        SF_REAL("alarm.q1", c.alarm_quantiles[0]),
        SF_REAL("alarm.q2", c.alarm_quantiles[1]),
        SF_REAL("alarm.q3", c.alarm_quantiles[2]),
        {"eval.balanced",
         {[](RunConfig& c, const std::string& k, const std::string& v) {
              if (v != "random") throw ConfigError("config key '" + k + "': only 'random' is supported");
              c.eval_balanced = v;
          },
          [](const RunConfig& c) { return c.eval_balanced; }}},
    };
    return t;
}

#undef SF_REAL
#undef SF_COUNT
#undef SF_FLAG

const Entry* find_entry(const std::string& key)
{
    for (const auto& [name, entry] : table()) {
        if (name == key) return &entry;
    }
    return nullptr;
}

} // namespace

std::string format_fault(const FaultSpec& f)
{
    return std::string(to_string(f.kind)) + ' ' + std::to_string(f.vehicle) + ' ' + std::to_string(f.start) + ' ' +
           std::to_string(f.end) + ' ' + fmt(f.magnitude) + ' ' + std::to_string(f.channel);
}

FaultSpec parse_fault(const std::string& text)
{
    std::istringstream ss(text);
    std::string kind, vehicle, start, end, magnitude, channel, extra;
    ss >> kind >> vehicle >> start >> end >> magnitude >> channel;
    if (kind.empty() || channel.empty() || (ss >> extra)) {
        throw ConfigError("fault '" + text + "' must read: kind vehicle start end magnitude channel");
    }
    FaultSpec f;
    f.kind = fault_kind_from_string(kind);
    f.vehicle = static_cast<std::size_t>(to_uint("fleet.fault", vehicle));
    f.start = static_cast<std::size_t>(to_uint("fleet.fault", start));
    f.end = static_cast<std::size_t>(to_uint("fleet.fault", end));
    f.magnitude = to_double("fleet.fault", magnitude);
    f.channel = static_cast<std::size_t>(to_uint("fleet.fault", channel));
    if (f.start >= f.end) throw ConfigError("fault '" + text + "' has an empty interval");
    if (f.magnitude < 0.0) throw ConfigError("fault '" + text + "' has a negative magnitude");
    return f;
}

void set_config_value(RunConfig& cfg, const std::string& key, const std::string& value)
{
    if (key.rfind("fleet.fault.", 0) == 0) {
        const std::string idx = key.substr(12);
        const std::uint64_t n = to_uint(key, idx);
        if (n == 0 || n > cfg.fleet.faults.size() + 1) {
            throw ConfigError("config key '" + key + "': faults must be numbered 1, 2, ... in order");
        }
        const FaultSpec f = parse_fault(value);
        if (n == cfg.fleet.faults.size() + 1) {
            cfg.fleet.faults.push_back(f);
        } else {
            cfg.fleet.faults[n - 1] = f;
        }
        return;
    }
    const Entry* e = find_entry(key);
    if (!e) throw ConfigError("unknown config key '" + key + "'");
    e->set(cfg, key, value);
}

RunConfig parse_run_config(std::istream& in)
{
    RunConfig cfg;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key or value");
        }
        set_config_value(cfg, key, value);
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path + "'");
    return parse_run_config(in);
}

RunConfig config_from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs)
{
    RunConfig cfg;
    for (const auto& [k, v] : pairs) set_config_value(cfg, k, v);
    return cfg;
}

std::vector<std::pair<std::string, std::string>> RunConfig::resolved() const
{
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [name, entry] : table()) {
        out.emplace_back(name, entry.get(*this));
        if (name == "fleet.cycle_frames") {
            for (std::size_t i = 0; i < fleet.faults.size(); ++i) {
                out.emplace_back("fleet.fault." + std::to_string(i + 1), format_fault(fleet.faults[i]));
            }
        }
    }
    return out;
}

std::vector<std::string> RunConfig::echo_lines() const
{
    std::vector<std::string> lines;
    for (const auto& [k, v] : resolved()) lines.push_back(k + "=" + v);
    return lines;
}

} // namespace synforce
