#include "mfsim/config.hpp"
#include "mfsim/dispatch.hpp"
#include "mfsim/errors.hpp"
#include "mfsim/version.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <optional>
#include <string>

int main(int argc, char** argv) {
    using mfsim::KeyType;
    namespace exit_code = mfsim::exit_code;

    CLI::App app{"Interacting particle simulator for McKean-Vlasov equations", "mfsim"};
    app.set_help_flag("--help", "Print this help message and exit");
    app.set_version_flag("--version", mfsim::kVersion);

    std::string command;
    app.add_option("command", command,
                   "simulate | strong-error | path-error | poc | density | phase | validate-model");
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file, or a sidecar from an earlier run");

    std::map<std::string, std::string> values;
    std::map<std::string, bool> switches;
    std::map<std::string, CLI::Option*> options;
    for (const mfsim::ConfigKey& key : mfsim::config_keys()) {
        if (key.name == "command") continue;
        if (key.type == KeyType::boolean) {
            options[key.name] = app.add_flag("--" + key.name, switches[key.name], key.help);
        } else {
            options[key.name] = app.add_option("--" + key.name, values[key.name], key.help);
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_code::ok : exit_code::config_error;
    }

    try {
        nlohmann::json file = nlohmann::json::object();
        if (!config_path.empty()) file = mfsim::load_config_file(config_path);
        nlohmann::json flags = nlohmann::json::object();
        for (const auto& [name, opt] : options) {
            if (opt->count() == 0) continue;
            if (switches.count(name) > 0) {
                flags[name] = switches[name];
            } else {
                flags[name] = mfsim::parse_flag_value(name, values[name]);
            }
        }
        std::optional<std::string_view> cmd;
        if (!command.empty()) cmd = command;
        const mfsim::RunConfig config = mfsim::build_config(cmd, file, flags);
        return mfsim::dispatch(config, std::cerr);
    } catch (const mfsim::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << "\n";
        return exit_code::config_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code::unexpected;
    }
}
