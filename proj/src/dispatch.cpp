#include "mfsim/dispatch.hpp"

#include "mfsim/errors.hpp"
#include "mfsim/version.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>

namespace mfsim {

using nlohmann::json;

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string quoted(const std::string& s) {
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch;
    }
    return out + "\"";
}

json finite_or_null(double v) {
    return std::isfinite(v) ? json(v) : json(nullptr);
}

json newton_json(const NewtonSummary& s) {
    return {{"solves", s.solves},
            {"median_iterations", s.median_iterations},
            {"max_iterations", s.max_iterations},
            {"max_residual", s.max_residual},
            {"fallbacks", s.fallbacks}};
}

json table_json(const ErrorTable& t) {
    json rows = json::array();
    for (const ErrorRow& r : t.rows) {
        rows.push_back({{"parameter", r.parameter},
                        {"error", finite_or_null(r.error)},
                        {"n_samples", r.n_samples},
                        {"diverged", r.diverged},
                        {"excluded", r.excluded},
                        {"wall_seconds", r.wall_seconds},
                        {"newton", newton_json(r.newton)}});
    }
    json fit = nullptr;
    if (t.fit) {
        fit = {{"slope", t.fit->slope},
               {"intercept", t.fit->intercept},
               {"r_squared", t.fit->r_squared},
               {"rows_used", t.fit->rows_used},
               {"guard_excluded", t.fit->guard_excluded ? json(*t.fit->guard_excluded) : json(nullptr)}};
    }
    return {{"metric", std::string(to_string(t.metric))},
            {"rows", rows},
            {"fit", fit},
            {"proxy_wall_seconds", t.proxy_wall_seconds}};
}

struct Output {
    std::string csv;
    std::vector<std::string> columns;
    json results = json::object();
    bool flagged = false;  // diverged cell or failed model check
};

std::string header(const std::vector<std::string>& columns) {
    std::string h;
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (i > 0) h += ',';
        h += columns[i];
    }
    return h + "\n";
}

Output run_simulate(const RunConfig& c, const ModelSpec& m) {
    const SchemeParams p = c.scheme_params();
    const NoisePlan plan(p.seed, p.N, m.noise_dim, p.h(), p.M);
    const SimulationResult r = simulate(m, p, c.initial(), plan, c.record, c.newton);
    Output o;
    o.columns = {"step", "t", "particle"};
    for (std::size_t k = 0; k < m.dim; ++k) o.columns.push_back("x" + std::to_string(k + 1));
    o.csv = header(o.columns);
    for (const Snapshot& s : r.snapshots) {
        for (std::size_t i = 0; i < p.N; ++i) {
            o.csv += std::to_string(s.step) + "," + fmt(s.t) + "," + std::to_string(i);
            for (std::size_t k = 0; k < m.dim; ++k) o.csv += "," + fmt(s.positions[i * m.dim + k]);
            o.csv += "\n";
        }
    }
    o.flagged = r.diverged;
    o.results = {{"diverged", r.diverged},
                 {"diverged_step", r.diverged_step ? json(*r.diverged_step) : json(nullptr)},
                 {"newton", newton_json(NewtonSummary::of(r.newton))}};
    return o;
}

Output run_strong(const RunConfig& c, const ModelSpec& m, bool path) {
    const ErrorTable t = strong_error(m, c.scheme_params(), c.initial(), c.h_list, c.h_proxy, c.sweep_options(), path);
    Output o;
    o.columns = {"scheme", "model", "h", "error", "diverged", "n_particles", "seed"};
    o.csv = header(o.columns);
    for (const ErrorRow& r : t.rows) {
        o.csv += std::string(to_string(c.scheme)) + "," + c.model + "," + fmt(r.parameter) + "," + fmt(r.error) +
                 "," + (r.diverged ? "1" : "0") + "," + std::to_string(c.N) + "," + std::to_string(c.seed) + "\n";
    }
    o.flagged = t.any_diverged();
    o.results = table_json(t);
    return o;
}

Output run_poc(const RunConfig& c, const ModelSpec& m) {
    const SchemeParams p = c.scheme_params();
    const ErrorTable t = poc_error(m, p, c.initial(), c.N_list, c.N_proxy, c.sweep_options());
    Output o;
    o.columns = {"scheme", "model", "n_particles", "error", "diverged", "h", "seed"};
    o.csv = header(o.columns);
    for (const ErrorRow& r : t.rows) {
        const auto n = static_cast<std::size_t>(r.parameter);
        o.csv += std::string(to_string(c.scheme)) + "," + c.model + "," + std::to_string(n) + "," + fmt(r.error) +
                 "," + (r.diverged ? "1" : "0") + "," + fmt(p.h()) + "," + std::to_string(c.seed) + "\n";
    }
    o.flagged = t.any_diverged();
    o.results = table_json(t);
    return o;
}

Output run_density(const RunConfig& c, const ModelSpec& m) {
    const DensityExport d = export_density(m, c.scheme_params(), c.initial(), c.times, c.bins, c.newton);
    Output o;
    o.columns = {"t", "coord", "bin_lo", "bin_hi", "mass"};
    o.csv = header(o.columns);
    for (const HistogramRow& r : d.rows) {
        o.csv += fmt(r.t) + "," + std::to_string(r.coord + 1) + "," + fmt(r.bin_lo) + "," + fmt(r.bin_hi) + "," +
                 fmt(r.mass) + "\n";
    }
    o.flagged = d.diverged;
    o.results = {{"diverged", d.diverged}, {"newton", newton_json(d.newton)}};
    return o;
}

Output run_phase(const RunConfig& c, const ModelSpec& m) {
    const PhaseExport ph = export_phase_means(m, c.scheme_params(), c.initial(), c.newton);
    Output o;
    o.columns = {"t", "mean_x1", "mean_x2"};
    o.csv = header(o.columns);
    for (const PhasePoint& pt : ph.points) {
        o.csv += fmt(pt.t) + "," + fmt(pt.mean_x1) + "," + fmt(pt.mean_x2) + "\n";
    }
    o.flagged = ph.diverged;
    o.results = {{"diverged", ph.diverged}, {"newton", newton_json(ph.newton)}};
    return o;
}

Output run_validate(const RunConfig& c, const ModelSpec& m) {
    const auto checks = validate_model(m, c.seed);
    Output o;
    o.columns = {"check", "passed", "worst", "detail"};
    o.csv = header(o.columns);
    json arr = json::array();
    for (const ModelCheck& ch : checks) {
        o.csv += ch.name + "," + (ch.passed ? "1" : "0") + "," + fmt(ch.worst) + "," + quoted(ch.detail) + "\n";
        o.flagged = o.flagged || !ch.passed;
        arr.push_back({{"check", ch.name}, {"passed", ch.passed}, {"detail", ch.detail}});
    }
    o.results = {{"checks", arr}};
    return o;
}

void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open '" + path + "' for writing");
    }
    out << text;
    if (!out) {
        throw Error("failed writing '" + path + "'");
    }
}

}  // namespace

int dispatch(const RunConfig& c, std::ostream& log) {
    const auto start = std::chrono::steady_clock::now();
    Output o;
    try {
        const ModelSpec m = c.build_model();
        switch (c.command) {
            case Command::simulate: o = run_simulate(c, m); break;
            case Command::strong_error: o = run_strong(c, m, false); break;
            case Command::path_error: o = run_strong(c, m, true); break;
            case Command::poc: o = run_poc(c, m); break;
            case Command::density: o = run_density(c, m); break;
            case Command::phase: o = run_phase(c, m); break;
            case Command::validate_model: o = run_validate(c, m); break;
        }
    } catch (const ConfigError& e) {
        log << "configuration error: " << e.what() << "\n";
        return exit_code::config_error;
    } catch (const SolverError& e) {
        log << "solver failure: " << e.what() << "\n";
        return exit_code::solver_failure;
    }

    const json sidecar = {
        {"config", c.echo},
        {"version", kVersion},
        {"csv_schema_version", kCsvSchemaVersion},
        {"command", std::string(to_string(c.command))},
        {"csv", c.out},
        {"columns", o.columns},
        {"results", o.results},
        {"flagged", o.flagged},
        {"wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()},
    };
    write_file(c.out, o.csv);
    write_file(c.sidecar_path(), sidecar.dump(2) + "\n");
    if (o.flagged) {
        log << (c.command == Command::validate_model ? "model checks failed" : "some runs diverged")
            << "; results written to " << c.out << "\n";
        return exit_code::diverged;
    }
    return exit_code::ok;
}

}  // namespace mfsim
