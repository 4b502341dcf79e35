#pragma once

#include "mfsim/harness.hpp"
#include "mfsim/implicit_solver.hpp"
#include "mfsim/model.hpp"
#include "mfsim/schemes.hpp"

#include <json.hpp>

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mfsim {

enum class Command { simulate, strong_error, path_error, poc, density, phase, validate_model };

[[nodiscard]] std::string_view to_string(Command c);
[[nodiscard]] Command parse_command(std::string_view s);

enum class KeyType { string, uint, real, optional_real, boolean, real_list, uint_list };

struct ConfigKey {
    std::string name;  ///< identical in config files and as --name on the command line
    KeyType type;
    std::string help;
};

/// Every accepted key, in echo order.
[[nodiscard]] const std::vector<ConfigKey>& config_keys();

/// Converts a command-line string to the JSON value of key `name`. Lists are
/// comma separated; optional reals accept "none".
[[nodiscard]] nlohmann::json parse_flag_value(std::string_view name, std::string_view text);

/// Reads a JSON config file. A metadata sidecar is accepted too: its
/// "config" member is used.
[[nodiscard]] nlohmann::json load_config_file(const std::string& path);

struct RunConfig {
    Command command = Command::simulate;
    std::string model = "granular_media";
    SchemeKind scheme = SchemeKind::ssm;
    std::optional<double> taming_alpha;
    std::size_t N = 200;
    std::size_t M = 100;
    double T = 1.0;
    std::uint64_t seed = 1;
    std::string x0 = "normal:0,1";
    RecordSpec record;
    std::string out = "mfsim_out.csv";
    std::size_t threads = 0;
    bool force = false;
    NewtonConfig newton;
    std::vector<double> h_list;
    double h_proxy = 2e-4;
    std::optional<double> h_fine;
    std::vector<std::size_t> N_list;
    std::size_t N_proxy = 1280;
    std::vector<double> times;
    std::size_t bins = 50;
    std::size_t replicates = 1;
    double shift_theta = 0.0;
    double shift_gamma = 0.0;
    bool paper_scale = false;

    /// Every effective value keyed as in config files, "command" included.
    nlohmann::json echo;

    [[nodiscard]] ModelSpec build_model() const;
    [[nodiscard]] InitialDistribution initial() const;
    [[nodiscard]] SchemeParams scheme_params() const;
    [[nodiscard]] SweepOptions sweep_options() const;
    [[nodiscard]] std::string sidecar_path() const;
};

/// Merges defaults, paper-scale presets (when enabled), file values and flag
/// values, in increasing precedence, then validates every cross-field
/// constraint for the command. Throws ConfigError naming the offending key or
/// constraint. `command` overrides the file's "command" key when given.
[[nodiscard]] RunConfig build_config(std::optional<std::string_view> command, const nlohmann::json& file_values,
                                     const nlohmann::json& flag_values);

/// Cross-field checks; build_config already calls this.
void validate(const RunConfig& c);

}  // namespace mfsim
