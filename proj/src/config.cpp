#include "gplab/config.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "gplab/errors.hpp"
#include "gplab/format.hpp"

namespace gplab {

namespace {
std::string trim(const std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    if (begin == std::string::npos) return "";
    const auto end = s.find_last_not_of(" \t\r");
    return s.substr(begin, end - begin + 1);
}
}  // namespace

KeyValues KeyValues::parse_string(const std::string& text, const std::string& origin) {
    KeyValues kv;
    kv.origin_ = origin;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ParseError(origin + ": line " + std::to_string(line_no) +
                             ": expected 'key = value'");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ParseError(origin + ": line " + std::to_string(line_no) + ": empty key");
        }
        if (kv.entries_.count(key)) {
            throw ParseError(origin + ": line " + std::to_string(line_no) + ": duplicate key '" +
                             key + "'");
        }
        kv.entries_[key] = value;
    }
    return kv;
}

KeyValues KeyValues::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_string(buf.str(), path.string());
}

KeyValues KeyValues::from_map(const std::map<std::string, std::string>& entries) {
    KeyValues kv;
    kv.origin_ = "<map>";
    kv.entries_ = entries;
    return kv;
}

bool KeyValues::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string KeyValues::get_str(const std::string& key, const std::string& fallback) const {
    consumed_[key] = true;
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second;
}

long long KeyValues::get_int(const std::string& key, long long fallback) const {
    consumed_[key] = true;
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
        return parse_int(it->second);
    } catch (const std::invalid_argument&) {
        throw ConfigError(origin_ + ": key '" + key + "': expected integer, got '" + it->second +
                          "'");
    }
}

double KeyValues::get_double(const std::string& key, double fallback) const {
    consumed_[key] = true;
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    try {
        return parse_double(it->second);
    } catch (const std::invalid_argument&) {
        throw ConfigError(origin_ + ": key '" + key + "': expected number, got '" + it->second +
                          "'");
    }
}

bool KeyValues::get_bool(const std::string& key, bool fallback) const {
    consumed_[key] = true;
    const auto it = entries_.find(key);
    if (it == entries_.end()) return fallback;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw ConfigError(origin_ + ": key '" + key + "': expected true/false, got '" + it->second +
                      "'");
}

void KeyValues::require_all_consumed() const {
    std::string unknown;
    for (const auto& [key, value] : entries_) {
        if (!consumed_.count(key)) {
            if (!unknown.empty()) unknown += ", ";
            unknown += key;
        }
    }
    if (!unknown.empty()) throw ConfigError(origin_ + ": unknown keys: " + unknown);
}

namespace {
std::vector<std::size_t> parse_dims(const std::string& text) {
    std::vector<std::size_t> dims;
    if (trim(text).empty()) return dims;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const long long v = parse_int(trim(part));
        if (v <= 0) throw ConfigError("net.hidden: dims must be positive");
        dims.push_back(static_cast<std::size_t>(v));
    }
    return dims;
}

std::vector<LrStep> parse_lr_schedule(const std::string& text) {
    std::vector<LrStep> steps;
    if (trim(text).empty() || trim(text) == "none") return steps;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        const auto colon = part.find(':');
        if (colon == std::string::npos) {
            throw ConfigError("train.lr_schedule: expected epoch:multiplier, got '" + part + "'");
        }
        LrStep step;
        step.epoch = static_cast<std::size_t>(parse_int(part.substr(0, colon)));
        step.multiplier = parse_double(part.substr(colon + 1));
        steps.push_back(step);
    }
    return steps;
}

std::string format_dims(const std::vector<std::size_t>& dims) {
    std::string out;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(dims[i]);
    }
    return out;
}

std::string format_lr_schedule(const std::vector<LrStep>& steps) {
    if (steps.empty()) return "none";
    std::string out;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(steps[i].epoch) + ":" + fmt_double(steps[i].multiplier);
    }
    return out;
}

PerturbMethod parse_method(const KeyValues& kv) {
    const std::string name = kv.get_str("train.method", "none");
    const double tau_clip = kv.get_double("method.tau_clip", 1.0);
    const double sigma = kv.get_double("method.sigma", 0.01);
    const double rho = kv.get_double("method.rho", 0.05);
    const long long pgd_steps = kv.get_int("method.pgd_steps", 3);
    const double kappa = kv.get_double("method.kappa", 0.0);
    if (name == "none") return NoPerturb{};
    if (name == "clip") return Clip{tau_clip};
    if (name == "noise") return Noise{sigma};
    if (name == "sam") return Sam{rho};
    if (name == "lpg_closed_form") return LpgClosedForm{};
    if (name == "lpg_pgd") return LpgPgd{static_cast<int>(pgd_steps), kappa};
    throw ConfigError("train.method: unknown method '" + name + "'");
}
}  // namespace

TrainSpec parse_train_spec(const KeyValues& kv) {
    TrainSpec spec;
    spec.data_path = kv.get_str("data.path", "");
    spec.test_path = kv.get_str("data.test_path", "");
    spec.out_dir = kv.get_str("out.dir", "run");
    if (spec.data_path.empty()) throw ConfigError("data.path is required");
    if (spec.test_path.empty()) throw ConfigError("data.test_path is required");

    TrainConfig& t = spec.train;
    t.hidden = parse_dims(kv.get_str("net.hidden", "64,32"));
    t.lr = kv.get_double("train.lr", 0.05);
    t.momentum = kv.get_double("train.momentum", 0.9);
    t.weight_decay = kv.get_double("train.weight_decay", 5e-4);
    t.epochs = static_cast<std::size_t>(kv.get_int("train.epochs", 60));
    t.batch_size = static_cast<std::size_t>(kv.get_int("train.batch_size", 64));
    t.lr_schedule = parse_lr_schedule(kv.get_str("train.lr_schedule", "30:0.1,45:0.1"));
    t.seed = static_cast<std::uint64_t>(kv.get_int("train.seed", 1));
    t.method = parse_method(kv);
    t.plan.mode = split_mode_from_string(kv.get_str("plan.split", "accuracy"));
    const std::string tau = kv.get_str("plan.tau", "auto");
    t.plan.tau = tau == "auto" ? -1.0 : parse_double(tau);
    t.plan.eps = kv.get_double("plan.eps", 0.1);
    t.plan.delta_eps = kv.get_double("plan.delta_eps", 0.2);
    t.plan.ema_beta = kv.get_double("plan.ema_beta", 0.9);
    t.eval_every = static_cast<std::size_t>(kv.get_int("metrics.eval_every", 1));
    t.wall_clock = kv.get_bool("metrics.wall_clock", false);
    t.record_rgv = kv.get_bool("metrics.rgv", true);

    kv.require_all_consumed();
    validate_config(t);
    return spec;
}

std::map<std::string, std::string> resolved_config(const TrainSpec& spec) {
    const TrainConfig& t = spec.train;
    std::map<std::string, std::string> out;
    out["data.path"] = spec.data_path;
    out["data.test_path"] = spec.test_path;
    out["out.dir"] = spec.out_dir;
    out["net.hidden"] = format_dims(t.hidden);
    out["train.lr"] = fmt_double(t.lr);
    out["train.momentum"] = fmt_double(t.momentum);
    out["train.weight_decay"] = fmt_double(t.weight_decay);
    out["train.epochs"] = std::to_string(t.epochs);
    out["train.batch_size"] = std::to_string(t.batch_size);
    out["train.lr_schedule"] = format_lr_schedule(t.lr_schedule);
    out["train.seed"] = std::to_string(t.seed);
    out["train.method"] = method_name(t.method);
    out["method.tau_clip"] = fmt_double(std::holds_alternative<Clip>(t.method)
                                            ? std::get<Clip>(t.method).tau
                                            : 1.0);
    out["method.sigma"] =
        fmt_double(std::holds_alternative<Noise>(t.method) ? std::get<Noise>(t.method).sigma
                                                           : 0.01);
    out["method.rho"] =
        fmt_double(std::holds_alternative<Sam>(t.method) ? std::get<Sam>(t.method).rho : 0.05);
    out["method.pgd_steps"] = std::to_string(
        std::holds_alternative<LpgPgd>(t.method) ? std::get<LpgPgd>(t.method).steps : 3);
    out["method.kappa"] = fmt_double(
        std::holds_alternative<LpgPgd>(t.method) ? std::get<LpgPgd>(t.method).kappa : 0.0);
    out["plan.split"] = to_string(t.plan.mode);
    out["plan.tau"] = t.plan.tau < 0.0 ? "auto" : fmt_double(t.plan.tau);
    out["plan.eps"] = fmt_double(t.plan.eps);
    out["plan.delta_eps"] = fmt_double(t.plan.delta_eps);
    out["plan.ema_beta"] = fmt_double(t.plan.ema_beta);
    out["metrics.eval_every"] = std::to_string(t.eval_every);
    out["metrics.wall_clock"] = t.wall_clock ? "true" : "false";
    out["metrics.rgv"] = t.record_rgv ? "true" : "false";
    return out;
}

void save_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
    nlohmann::json j;
    j["tool_version"] = manifest.tool_version;
    j["command"] = manifest.command;
    j["seed"] = manifest.seed;
    j["config"] = manifest.config;
    j["artifacts"] = manifest.artifacts;
    j["extra"] = manifest.extra;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("manifest: cannot open " + path.string() + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw ParseError("manifest: write failed for " + path.string());
}

RunManifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("manifest: cannot open " + path.string());
    RunManifest manifest;
    try {
        nlohmann::json j;
        in >> j;
        manifest.tool_version = j.at("tool_version").get<std::string>();
        manifest.command = j.at("command").get<std::string>();
        manifest.seed = j.at("seed").get<std::uint64_t>();
        manifest.config = j.at("config").get<std::map<std::string, std::string>>();
        manifest.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
        manifest.extra = j.at("extra").get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("manifest " + path.string() + ": " + e.what());
    }
    return manifest;
}

}  // namespace gplab
