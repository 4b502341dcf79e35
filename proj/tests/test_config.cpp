#include "mfsim/config.hpp"
#include "mfsim/dispatch.hpp"
#include "mfsim/errors.hpp"
#include "mfsim/version.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <unistd.h>

using namespace mfsim;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("mfsim_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    [[nodiscard]] std::string file(const std::string& name) const { return (path / name).string(); }
    static inline int counter = 0;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("defaults are echoed in full") {
    const RunConfig c = build_config("simulate", json::object(), json::object());
    CHECK(c.command == Command::simulate);
    CHECK(c.N == 200);
    CHECK(c.M == 100);
    CHECK(c.T == 1.0);
    CHECK(c.echo.at("command") == "simulate");
    CHECK(c.echo.at("model") == "granular_media");
    CHECK(c.echo.at("h-proxy") == 2e-4);
    for (const ConfigKey& key : config_keys()) CHECK(c.echo.contains(key.name));
}

TEST_CASE("flags override the file, and h sets M") {
    const json file = {{"command", "simulate"}, {"N", 50}, {"T", 2.0}, {"seed", 9}};
    const json flags = {{"N", 60}, {"h", 0.05}};
    const RunConfig c = build_config(std::nullopt, file, flags);
    CHECK(c.N == 60);
    CHECK(c.seed == 9);
    CHECK(c.M == 40);
    CHECK(c.scheme_params().h() == 0.05);

    const RunConfig d = build_config("density", file, json::object());
    CHECK(d.command == Command::density);
}

TEST_CASE("invalid configurations are rejected") {
    CHECK_THROWS_AS((void)build_config(std::nullopt, json::object(), json::object()), ConfigError);
    CHECK_THROWS_AS((void)build_config("simulate", json{{"bogus", 1}}, json::object()), ConfigError);
    CHECK_THROWS_AS((void)build_config("simulate", json{{"N", "many"}}, json::object()), ConfigError);
    CHECK_THROWS_AS((void)build_config("integrate", json::object(), json::object()), ConfigError);
    CHECK_THROWS_AS((void)build_config("simulate", json::object(), json{{"h", 0.3}}), ConfigError);
    CHECK_THROWS_AS((void)build_config("simulate", json::object(), json{{"model", "lorenz"}}), ConfigError);
    CHECK_THROWS_AS((void)build_config("simulate", json::object(), json{{"out", "x.json"}}), ConfigError);
    CHECK_THROWS_AS((void)build_config("simulate", json::object(), json{{"out", "/no/such/dir/x.csv"}}), ConfigError);
    CHECK_THROWS_AS((void)build_config("simulate", json::object(), json{{"x0", "normal:0,1;1,1"}}), ConfigError);
    CHECK_THROWS_AS((void)build_config("phase", json::object(), json::object()), ConfigError);
    CHECK_THROWS_AS((void)build_config("density", json::object(), json{{"times", json::array({0.333})}}),
                    ConfigError);
}

TEST_CASE("strong-error grids must nest") {
    const json ok = {{"h-list", json::array({0.01, 0.02})}, {"h-proxy", 0.001}};
    CHECK_NOTHROW((void)build_config("strong-error", json::object(), ok));
    json bad = ok;
    bad["h-list"] = json::array({0.00035});
    bad["h-proxy"] = 0.0001;
    CHECK_THROWS_AS((void)build_config("strong-error", json::object(), bad), ConfigError);
    bad = ok;
    bad["h-list"] = json::array({0.03});
    CHECK_THROWS_AS((void)build_config("strong-error", json::object(), bad), ConfigError);
    bad = ok;
    bad["h-fine"] = 0.0003;
    CHECK_THROWS_AS((void)build_config("path-error", json::object(), bad), ConfigError);

    CHECK_THROWS_AS((void)build_config("poc", json::object(), json{{"N-list", json::array({10, 2000})}}),
                    ConfigError);
}

TEST_CASE("step-size rule for the split step") {
    // theta = -5 lifts L_f to 5, so zeta = 71 and h must stay below 1/71.
    const json shifted = {{"model", "granular_media"}, {"shift-theta", -5.0}, {"h", 0.02}};
    CHECK_THROWS_AS((void)build_config("simulate", json::object(), shifted), ConfigError);
    json forced = shifted;
    forced["force"] = true;
    CHECK_NOTHROW((void)build_config("simulate", json::object(), forced));
    json taming = shifted;
    taming["scheme"] = "taming";
    CHECK_NOTHROW((void)build_config("simulate", json::object(), taming));
    json small = shifted;
    small["h"] = 0.01;
    CHECK_NOTHROW((void)build_config("simulate", json::object(), small));
    CHECK(build_config("simulate", json::object(), small).build_model().constants.L_f == 5.0);
}

TEST_CASE("command-line values") {
    CHECK(parse_flag_value("N", "40") == json(40));
    CHECK(parse_flag_value("h-list", "0.01,0.02") == json::array({0.01, 0.02}));
    CHECK(parse_flag_value("N-list", "10,20") == json::array({10, 20}));
    CHECK(parse_flag_value("h-fine", "none").is_null());
    CHECK(parse_flag_value("model", "double_well") == json("double_well"));
    CHECK_THROWS_AS((void)parse_flag_value("N", "ten"), ConfigError);
    CHECK_THROWS_AS((void)parse_flag_value("N", "-3"), ConfigError);
    CHECK_THROWS_AS((void)parse_flag_value("nope", "1"), ConfigError);
}

TEST_CASE("full-scale presets sit below file values") {
    const RunConfig c = build_config("strong-error", json{{"paper-scale", true}}, json::object());
    CHECK(c.paper_scale);
    const RunConfig d = build_config("strong-error", json{{"paper-scale", true}, {"N", 30}}, json::object());
    CHECK(d.N == 30);
}

TEST_CASE("dispatch writes the CSV and sidecar, and reruns from the sidecar") {
    TempDir dir;
    const json flags = {{"N", 5}, {"M", 10}, {"record", "path"}, {"out", dir.file("run.csv")}};
    const RunConfig c = build_config("simulate", json::object(), flags);
    std::ostringstream log;
    REQUIRE(dispatch(c, log) == exit_code::ok);
    const std::string csv = slurp(dir.file("run.csv"));
    CHECK(csv.rfind("step,t,particle,x1\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 11 * 5);

    const json side = json::parse(slurp(dir.file("run.json")));
    CHECK(side.at("version") == kVersion);
    CHECK(side.at("csv_schema_version") == kCsvSchemaVersion);
    CHECK(side.at("config") == c.echo);

    fs::rename(dir.file("run.csv"), dir.file("first.csv"));
    const RunConfig again = build_config(std::nullopt, load_config_file(dir.file("run.json")), json::object());
    REQUIRE(dispatch(again, log) == exit_code::ok);
    CHECK(slurp(dir.file("run.csv")) == slurp(dir.file("first.csv")));
}

TEST_CASE("thread count does not change the output") {
    TempDir dir;
    json flags = {{"N-list", json::array({5, 10})}, {"N-proxy", 20}, {"M", 20}, {"threads", 1},
                  {"out", dir.file("a.csv")}};
    std::ostringstream log;
    REQUIRE(dispatch(build_config("poc", json::object(), flags), log) == exit_code::ok);
    flags["threads"] = 3;
    flags["out"] = dir.file("b.csv");
    REQUIRE(dispatch(build_config("poc", json::object(), flags), log) == exit_code::ok);
    CHECK(slurp(dir.file("a.csv")) == slurp(dir.file("b.csv")));
}

TEST_CASE("diverged runs still write results and flag them") {
    TempDir dir;
    const json flags = {{"model", "double_well"}, {"scheme", "euler"}, {"x0", "normal:0,400"},
                        {"N", 20},            {"h", 0.1},          {"out", dir.file("d.csv")}};
    std::ostringstream log;
    CHECK(dispatch(build_config("simulate", json::object(), flags), log) == exit_code::diverged);
    CHECK(fs::exists(dir.file("d.csv")));
    const json side = json::parse(slurp(dir.file("d.json")));
    CHECK(side.at("flagged") == true);
}

TEST_CASE("validate-model passes for the built-ins") {
    TempDir dir;
    for (const char* name : {"granular_media", "double_well", "van_der_pol"}) {
        const json flags = {{"model", name}, {"out", dir.file(std::string(name) + ".csv")}};
        std::ostringstream log;
        CHECK(dispatch(build_config("validate-model", json::object(), flags), log) == exit_code::ok);
    }
}
