#include "mfsim/config.hpp"

#include "mfsim/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>

namespace mfsim {

using nlohmann::json;

std::string_view to_string(Command c) {
    switch (c) {
        case Command::simulate: return "simulate";
        case Command::strong_error: return "strong-error";
        case Command::path_error: return "path-error";
        case Command::poc: return "poc";
        case Command::density: return "density";
        case Command::phase: return "phase";
        case Command::validate_model: return "validate-model";
    }
    return "unknown";
}

Command parse_command(std::string_view s) {
    for (Command c : {Command::simulate, Command::strong_error, Command::path_error, Command::poc, Command::density,
                      Command::phase, Command::validate_model}) {
        if (s == to_string(c)) return c;
    }
    throw ConfigError("unknown command '" + std::string(s) +
                      "' (expected simulate, strong-error, path-error, poc, density, phase or validate-model)");
}

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"command", KeyType::string, "command to run"},
        {"model", KeyType::string, "built-in model: granular_media, double_well, van_der_pol"},
        {"scheme", KeyType::string, "ssm, taming or euler"},
        {"taming-alpha", KeyType::optional_real, "taming exponent (default 1 for constant sigma, else 1/2)"},
        {"N", KeyType::uint, "number of particles"},
        {"M", KeyType::uint, "number of time steps"},
        {"T", KeyType::real, "time horizon"},
        {"h", KeyType::optional_real, "step size; sets M = T/h when given"},
        {"seed", KeyType::uint, "random seed"},
        {"x0", KeyType::string, "initial law, normal:mean,var[;mean,var...]"},
        {"record", KeyType::string, "terminal, path or thin=k"},
        {"out", KeyType::string, "output CSV path; the sidecar goes next to it as .json"},
        {"threads", KeyType::uint, "worker threads, 0 for hardware parallelism"},
        {"force", KeyType::boolean, "allow step sizes above the admissible bound"},
        {"newton-max-iter", KeyType::uint, "Newton iteration cap"},
        {"newton-jacobian", KeyType::string, "full, drop-gamma or fd"},
        {"newton-tol-mode", KeyType::string, "sqrt-h or abs"},
        {"newton-abs-tol", KeyType::real, "stopping tolerance in abs mode"},
        {"newton-damping", KeyType::real, "Newton step multiplier in (0, 1]"},
        {"h-list", KeyType::real_list, "step sizes of a strong-error sweep"},
        {"h-proxy", KeyType::real, "step size of the proxy solution"},
        {"h-fine", KeyType::optional_real, "finest noise step (default: the proxy step)"},
        {"N-list", KeyType::uint_list, "particle counts of a propagation-of-chaos sweep"},
        {"N-proxy", KeyType::uint, "particle count of the proxy system"},
        {"times", KeyType::real_list, "density export times (default: T)"},
        {"bins", KeyType::uint, "histogram bins"},
        {"replicates", KeyType::uint, "seeds averaged per error table"},
        {"shift-theta", KeyType::real, "linear shift moved from the kernel"},
        {"shift-gamma", KeyType::real, "linear shift moved from u"},
        {"paper-scale", KeyType::boolean, "use the full-size experiment presets"},
    };
    return keys;
}

namespace {

const ConfigKey& find_key(std::string_view name) {
    for (const ConfigKey& k : config_keys()) {
        if (k.name == name) return k;
    }
    throw ConfigError("unknown config key '" + std::string(name) + "'");
}

json defaults() {
    return {
        {"model", "granular_media"},
        {"scheme", "ssm"},
        {"taming-alpha", nullptr},
        {"N", 200},
        {"M", 100},
        {"T", 1.0},
        {"h", nullptr},
        {"seed", 1},
        {"x0", "normal:0,1"},
        {"record", "terminal"},
        {"out", "mfsim_out.csv"},
        {"threads", 0},
        {"force", false},
        {"newton-max-iter", 25},
        {"newton-jacobian", "full"},
        {"newton-tol-mode", "sqrt-h"},
        {"newton-abs-tol", 1e-8},
        {"newton-damping", 1.0},
        {"h-list", {0.002, 0.005, 0.01, 0.02, 0.05}},
        {"h-proxy", 2e-4},
        {"h-fine", nullptr},
        {"N-list", {40, 80, 160, 320, 640}},
        {"N-proxy", 1280},
        {"times", json::array()},
        {"bins", 50},
        {"replicates", 1},
        {"shift-theta", 0.0},
        {"shift-gamma", 0.0},
        {"paper-scale", false},
    };
}

json paper_scale_presets(Command c) {
    switch (c) {
        case Command::strong_error:
        case Command::path_error:
            return {{"N", 1000},
                    {"h-list", {0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1}},
                    {"h-proxy", 1e-4}};
        case Command::poc:
            return {{"N-list", {40, 80, 160, 320, 640, 1280}}, {"N-proxy", 2560}, {"h", 0.001}};
        case Command::density:
            return {{"N", 1000}, {"h", 0.01}, {"times", {1.0, 3.0, 10.0}}, {"T", 10.0}};
        case Command::phase:
            return {{"N", 1000}, {"h", 0.01}, {"T", 20.0}};
        case Command::simulate:
            return {{"N", 1000}};
        case Command::validate_model:
            return json::object();
    }
    return json::object();
}

void check_type(const ConfigKey& key, const json& v) {
    bool ok = false;
    const auto is_uint = [](const json& x) {
        return x.is_number_unsigned() || (x.is_number_integer() && x.get<std::int64_t>() >= 0);
    };
    switch (key.type) {
        case KeyType::string: ok = v.is_string(); break;
        case KeyType::uint: ok = is_uint(v); break;
        case KeyType::real: ok = v.is_number(); break;
        case KeyType::optional_real: ok = v.is_null() || v.is_number(); break;
        case KeyType::boolean: ok = v.is_boolean(); break;
        case KeyType::real_list:
            ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); });
            break;
        case KeyType::uint_list: ok = v.is_array() && std::all_of(v.begin(), v.end(), is_uint); break;
    }
    if (!ok) {
        throw ConfigError("config key '" + key.name + "' has a value of the wrong type: " + v.dump());
    }
}

void merge_into(json& target, const json& source, std::string_view origin) {
    if (source.is_null()) return;
    if (!source.is_object()) {
        throw ConfigError(std::string(origin) + " must be a JSON object");
    }
    for (const auto& [name, value] : source.items()) {
        const ConfigKey& key = [&]() -> const ConfigKey& {
            try {
                return find_key(name);
            } catch (const ConfigError&) {
                throw ConfigError("unknown config key '" + name + "' in " + std::string(origin));
            }
        }();
        check_type(key, value);
        target[name] = value;
    }
}

double parse_real(std::string_view text, std::string_view name) {
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw ConfigError("--" + std::string(name) + ": cannot parse '" + std::string(text) + "' as a number");
    }
    return v;
}

std::uint64_t parse_uint(std::string_view text, std::string_view name) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw ConfigError("--" + std::string(name) + ": cannot parse '" + std::string(text) +
                          "' as a non-negative integer");
    }
    return v;
}

std::vector<std::string_view> split_commas(std::string_view text) {
    std::vector<std::string_view> parts;
    while (!text.empty()) {
        const auto comma = text.find(',');
        parts.push_back(text.substr(0, comma));
        if (comma == std::string_view::npos) break;
        text.remove_prefix(comma + 1);
    }
    return parts;
}

bool is_multiple(double value, double unit) {
    const double r = value / unit;
    return std::abs(r - std::round(r)) <= 1e-9 * std::max(1.0, r) && std::round(r) >= 1.0;
}

std::string num(double v) {
    return json(v).dump();
}

}  // namespace

json parse_flag_value(std::string_view name, std::string_view text) {
    const ConfigKey& key = find_key(name);
    switch (key.type) {
        case KeyType::string: return std::string(text);
        case KeyType::uint: return parse_uint(text, name);
        case KeyType::real: return parse_real(text, name);
        case KeyType::optional_real:
            if (text == "none") return nullptr;
            return parse_real(text, name);
        case KeyType::boolean:
            if (text == "true" || text == "1") return true;
            if (text == "false" || text == "0") return false;
            throw ConfigError("--" + std::string(name) + ": expected true or false");
        case KeyType::real_list: {
            json arr = json::array();
            for (auto part : split_commas(text)) arr.push_back(parse_real(part, name));
            return arr;
        }
        case KeyType::uint_list: {
            json arr = json::array();
            for (auto part : split_commas(text)) arr.push_back(parse_uint(part, name));
            return arr;
        }
    }
    return nullptr;
}

json load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file '" + path + "'");
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    if (!doc.is_object()) {
        throw ConfigError("config file '" + path + "' must hold a JSON object");
    }
    if (doc.contains("config") && doc["config"].is_object()) {
        return doc["config"];
    }
    return doc;
}

ModelSpec RunConfig::build_model() const {
    ModelSpec m = make_builtin(model);
    if (shift_theta != 0.0 || shift_gamma != 0.0) {
        m = linear_shift(m, shift_theta, shift_gamma);
    }
    return m;
}

InitialDistribution RunConfig::initial() const {
    return InitialDistribution::parse(x0);
}

SchemeParams RunConfig::scheme_params() const {
    SchemeParams p;
    p.T = T;
    p.M = M;
    p.N = N;
    p.scheme = scheme;
    p.taming_alpha = taming_alpha;
    p.seed = seed;
    return p;
}

SweepOptions RunConfig::sweep_options() const {
    SweepOptions o;
    o.threads = threads;
    o.newton = newton;
    o.replicates = replicates;
    o.h_fine = h_fine;
    return o;
}

std::string RunConfig::sidecar_path() const {
    return std::filesystem::path(out).replace_extension(".json").string();
}

RunConfig build_config(std::optional<std::string_view> command, const json& file_values, const json& flag_values) {
    json file = file_values.is_null() ? json::object() : file_values;
    json flags = flag_values.is_null() ? json::object() : flag_values;
    json checked = json::object();
    merge_into(checked, file, "config file");
    merge_into(checked, flags, "command line");

    std::string command_name;
    if (command) {
        command_name = std::string(*command);
    } else if (flags.contains("command")) {
        command_name = flags["command"].get<std::string>();
    } else if (file.contains("command")) {
        command_name = file["command"].get<std::string>();
    } else {
        throw ConfigError("no command given");
    }
    const Command cmd = parse_command(command_name);

    bool full_scale = false;
    if (file.contains("paper-scale")) full_scale = file["paper-scale"].get<bool>();
    if (flags.contains("paper-scale")) full_scale = flags["paper-scale"].get<bool>();

    json merged = defaults();
    if (full_scale) merged.update(paper_scale_presets(cmd));
    merge_into(merged, file, "config file");
    merge_into(merged, flags, "command line");
    merged["command"] = std::string(to_string(cmd));

    RunConfig c;
    c.command = cmd;
    c.model = merged["model"].get<std::string>();
    c.scheme = parse_scheme(merged["scheme"].get<std::string>());
    if (!merged["taming-alpha"].is_null()) c.taming_alpha = merged["taming-alpha"].get<double>();
    c.N = merged["N"].get<std::size_t>();
    c.T = merged["T"].get<double>();
    c.seed = merged["seed"].get<std::uint64_t>();
    c.x0 = merged["x0"].get<std::string>();
    c.record = RecordSpec::parse(merged["record"].get<std::string>());
    c.out = merged["out"].get<std::string>();
    c.threads = merged["threads"].get<std::size_t>();
    c.force = merged["force"].get<bool>();
    c.newton.max_iter = static_cast<int>(std::min<std::uint64_t>(merged["newton-max-iter"].get<std::uint64_t>(), 1000000));
    c.newton.jacobian_mode = parse_jacobian_mode(merged["newton-jacobian"].get<std::string>());
    c.newton.tol_mode = parse_tolerance_mode(merged["newton-tol-mode"].get<std::string>());
    c.newton.abs_tol = merged["newton-abs-tol"].get<double>();
    c.newton.damping = merged["newton-damping"].get<double>();
    c.newton.allow_any_step = c.force;
    c.h_list = merged["h-list"].get<std::vector<double>>();
    c.h_proxy = merged["h-proxy"].get<double>();
    if (!merged["h-fine"].is_null()) c.h_fine = merged["h-fine"].get<double>();
    c.N_list = merged["N-list"].get<std::vector<std::size_t>>();
    c.N_proxy = merged["N-proxy"].get<std::size_t>();
    c.times = merged["times"].get<std::vector<double>>();
    c.bins = merged["bins"].get<std::size_t>();
    c.replicates = merged["replicates"].get<std::size_t>();
    c.shift_theta = merged["shift-theta"].get<double>();
    c.shift_gamma = merged["shift-gamma"].get<double>();
    c.paper_scale = full_scale;

    if (!(c.T > 0.0) || !std::isfinite(c.T)) {
        throw ConfigError("T must be positive and finite");
    }
    if (!merged["h"].is_null()) {
        const double h = merged["h"].get<double>();
        if (!(h > 0.0) || !is_multiple(c.T, h)) {
            throw ConfigError("h = " + num(h) + " must be positive and divide T = " + num(c.T));
        }
        c.M = static_cast<std::size_t>(std::round(c.T / h));
    } else {
        c.M = merged["M"].get<std::size_t>();
    }
    merged["M"] = c.M;
    if (c.times.empty()) {
        c.times = {c.T};
        merged["times"] = c.times;
    }
    c.echo = merged;
    validate(c);
    return c;
}

void validate(const RunConfig& c) {
    if (c.N == 0) throw ConfigError("N must be at least 1");
    if (c.M == 0) throw ConfigError("M must be at least 1");
    if (c.bins == 0) throw ConfigError("bins must be at least 1");
    if (c.replicates == 0) throw ConfigError("replicates must be at least 1");
    if (c.taming_alpha && !(*c.taming_alpha > 0.0)) throw ConfigError("taming-alpha must be positive");
    c.newton.validate();

    const std::filesystem::path out(c.out);
    if (c.out.empty()) throw ConfigError("out must name a CSV file");
    if (out.extension() == ".json") throw ConfigError("out must not end in .json; the sidecar uses that name");
    if (out.has_parent_path() && !std::filesystem::is_directory(out.parent_path())) {
        throw ConfigError("output directory '" + out.parent_path().string() + "' does not exist");
    }

    const ModelSpec m = c.build_model();
    (void)InitialDistribution::parse(c.x0).broadcast(m.dim);
    const double h_max = max_stepsize(m.constants);
    const auto check_step = [&](double h, std::string_view what) {
        if (c.scheme == SchemeKind::ssm && !c.force && !(h < h_max)) {
            throw ConfigError(std::string(what) + " = " + num(h) + " is not below the admissible bound " +
                              num(h_max) + " for model " + m.name + " (use --force to override)");
        }
    };
    const double h = c.T / static_cast<double>(c.M);

    switch (c.command) {
        case Command::simulate:
            check_step(h, "step h");
            break;
        case Command::density:
            check_step(h, "step h");
            for (double t : c.times) (void)grid_step(t, c.scheme_params());
            break;
        case Command::phase:
            check_step(h, "step h");
            if (m.dim != 2) {
                throw ConfigError("phase needs a two-dimensional model; " + m.name + " has d = " +
                                  std::to_string(m.dim));
            }
            break;
        case Command::strong_error:
        case Command::path_error: {
            if (c.h_list.empty()) throw ConfigError("h-list is empty");
            const double fine = c.h_fine.value_or(c.h_proxy);
            if (!(fine > 0.0) || !is_multiple(c.T, fine)) {
                throw ConfigError("h-fine = " + num(fine) + " must be positive and divide T = " + num(c.T));
            }
            if (!is_multiple(c.h_proxy, fine)) {
                throw ConfigError("h-proxy = " + num(c.h_proxy) + " is not an integer multiple of h-fine = " +
                                  num(fine));
            }
            for (double hh : c.h_list) {
                if (!is_multiple(hh, fine)) {
                    throw ConfigError("h-list entry " + num(hh) + " is not an integer multiple of h-fine = " +
                                      num(fine));
                }
                if (!is_multiple(hh, c.h_proxy)) {
                    throw ConfigError("h-list entry " + num(hh) + " is not an integer multiple of h-proxy = " +
                                      num(c.h_proxy));
                }
                if (!is_multiple(c.T, hh)) {
                    throw ConfigError("h-list entry " + num(hh) + " does not divide T = " + num(c.T));
                }
                check_step(hh, "h-list entry");
            }
            check_step(c.h_proxy, "h-proxy");
            break;
        }
        case Command::poc: {
            check_step(h, "step h");
            if (c.N_list.empty()) throw ConfigError("N-list is empty");
            for (std::size_t n : c.N_list) {
                if (n == 0) throw ConfigError("N-list entries must be positive");
                if (n > c.N_proxy) {
                    throw ConfigError("N-list entry " + std::to_string(n) + " exceeds N-proxy = " +
                                      std::to_string(c.N_proxy));
                }
            }
            if (c.h_fine && !is_multiple(h, *c.h_fine)) {
                throw ConfigError("step h = " + num(h) + " is not an integer multiple of h-fine = " +
                                  num(*c.h_fine));
            }
            break;
        }
        case Command::validate_model:
            break;
    }
}

}  // namespace mfsim
