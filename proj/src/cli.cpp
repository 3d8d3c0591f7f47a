#include "prtsim/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "prtsim/experiment.hpp"
#include "prtsim/scenario.hpp"

namespace prt {

namespace {

namespace fs = std::filesystem;

Scenario load_input(const std::string& name, bool lenient) {
    if (!fs::exists(name) && (name == "city" || name == "seashore"))
        return bundled_scenario(name);
    return load_scenario(name, lenient);
}

EngineKind parse_engine(const std::string& s) {
    if (s == "ed") return EngineKind::EventDriven;
    if (s == "ca") return EngineKind::CellularAutomata;
    throw CLI::ValidationError("--engine", "expected 'ed' or 'ca'");
}

fs::path out_dir(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("PRTSIM_OUT"); env && *env) return env;
    return ".";
}

void write_file(const fs::path& dir, const std::string& name, const std::string& content) {
    fs::create_directories(dir);
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
    out << content;
}

void print_metrics(const MetricsReport& m) {
    std::printf("  trips: %s full/h, %s empty/h (call %s, expel %s, withdraw %s, balance %s)\n",
                fmt_num(m.trips_full_per_h).c_str(), fmt_num(m.trips_empty_per_h).c_str(),
                fmt_num(m.empty_call_per_h).c_str(), fmt_num(m.empty_expel_per_h).c_str(),
                fmt_num(m.empty_withdraw_per_h).c_str(), fmt_num(m.empty_balance_per_h).c_str());
    std::printf("  wait: mean %s s, p95 %s s; queue mean %s\n", fmt_num(m.wait_mean_s).c_str(),
                fmt_num(m.wait_p95_s).c_str(), fmt_num(m.queue_mean).c_str());
    std::printf("  vkm: %s full, %s empty; %s\n", fmt_num(m.vkm_full).c_str(),
                fmt_num(m.vkm_empty).c_str(), m.saturated ? "saturated" : "stable");
}

MetricsReport mean_metrics(const std::vector<MetricsReport>& rows) {
    MetricsReport m;
    if (rows.empty()) return m;
    int sat = 0;
    for (const auto& r : rows) {
        m.trips_full_per_h += r.trips_full_per_h;
        m.trips_empty_per_h += r.trips_empty_per_h;
        m.empty_call_per_h += r.empty_call_per_h;
        m.empty_expel_per_h += r.empty_expel_per_h;
        m.empty_withdraw_per_h += r.empty_withdraw_per_h;
        m.empty_balance_per_h += r.empty_balance_per_h;
        m.wait_mean_s += r.wait_mean_s;
        m.wait_p95_s += r.wait_p95_s;
        m.queue_mean += r.queue_mean;
        m.vkm_full += r.vkm_full;
        m.vkm_empty += r.vkm_empty;
        sat += r.saturated ? 1 : 0;
    }
    double n = static_cast<double>(rows.size());
    m.trips_full_per_h /= n;
    m.trips_empty_per_h /= n;
    m.empty_call_per_h /= n;
    m.empty_expel_per_h /= n;
    m.empty_withdraw_per_h /= n;
    m.empty_balance_per_h /= n;
    m.wait_mean_s /= n;
    m.wait_p95_s /= n;
    m.queue_mean /= n;
    m.vkm_full /= n;
    m.vkm_empty /= n;
    m.saturated = 2 * sat >= static_cast<int>(rows.size());
    return m;
}

int cmd_validate(const std::string& path, bool lenient) {
    Scenario sc = load_input(path, lenient);
    std::printf("scenario ok: %s\n", sc.description.c_str());
    std::printf("  %zu nodes, %zu segments, %zu stations, %zu capacitors, %.1f m of track\n",
                sc.network.nodes().size(), sc.network.segments().size(),
                sc.network.stations().size(), sc.network.capacitors().size(),
                sc.network.total_length());
    std::printf("  fleet %d, duration %s s, warmup %s s, seed %llu\n", sc.fleet.count,
                fmt_num(sc.run.duration_s).c_str(), fmt_num(sc.run.warmup_s).c_str(),
                static_cast<unsigned long long>(sc.run.seed));
    for (const std::string& w : sc.warnings) std::printf("  warning: %s\n", w.c_str());
    return kExitOk;
}

int cmd_run(const std::string& path, const std::string& engine_s, double scale,
            const std::string& out_flag, long long seed, double duration) {
    Scenario sc = load_input(path, false);
    EngineKind engine = parse_engine(engine_s);
    sc.demand.demand_scale *= scale;
    if (seed >= 0) sc.run.seed = static_cast<std::uint64_t>(seed);
    if (duration > 0.0) set_run_duration(sc, duration);

    RunResult run = simulate(sc, engine);
    MetricsReport m = metrics_of(sc, run);

    fs::path dir = out_dir(out_flag);
    write_file(dir, "events.csv", export_events_csv(run.log));
    write_file(dir, "metrics.csv", export_metrics_csv({{sc.demand.demand_scale, m}}));

    std::printf("%s run, %zu events, %d vehicles\n", engine_name(engine),
                run.log.records().size(), run.totals.vehicles);
    print_metrics(m);
    if (!run.totals.conserved()) {
        std::fprintf(stderr, "group conservation failed: %ld spawned vs %ld+%ld+%ld\n",
                     run.totals.groups_spawned, run.totals.groups_arrived,
                     run.totals.groups_riding, run.totals.groups_waiting);
        return kExitRuntime;
    }
    if (run.safety.total() != 0) {
        std::fprintf(stderr,
                     "safety monitors tripped: separation %ld, envelope %ld, join %ld, cell %ld\n",
                     run.safety.separation_violations, run.safety.envelope_violations,
                     run.safety.join_conflicts, run.safety.cell_collisions);
        return kExitRuntime;
    }
    std::printf("outputs in %s\n", dir.string().c_str());
    return kExitOk;
}

int cmd_sweep(const std::string& path, const std::string& engine_s, std::vector<double> scales,
              bool auto_sat, int replications, const std::string& out_flag) {
    Scenario sc = load_input(path, false);
    EngineKind engine = parse_engine(engine_s);

    if (auto_sat) {
        SaturationSearch search = find_saturation_scale(sc, engine);
        if (!search.found) {
            std::fprintf(stderr, "no saturation found within the probe budget\n");
            return kExitNotSaturated;
        }
        std::printf("saturation near scale factor %s (%d probes)\n",
                    fmt_num(search.scale).c_str(), search.probes);
        scales.clear();
        for (int i = 1; i <= 6; ++i)
            scales.push_back(search.scale * static_cast<double>(i) / 6.0);
    }
    if (scales.empty()) throw CLI::ValidationError("--scales", "no scale factors given");

    // replications vary the seed; points aggregate across them
    std::vector<std::pair<double, MetricsReport>> rows;
    std::vector<std::pair<double, double>> curve_pts;
    std::vector<std::vector<MetricsReport>> per_scale(scales.size());
    for (int rep = 0; rep < replications; ++rep) {
        Scenario rep_sc = sc;
        rep_sc.run.seed = sc.run.seed + static_cast<std::uint64_t>(rep);
        SweepResult res = run_sweep(rep_sc, engine, scales);
        for (std::size_t i = 0; i < res.points.size(); ++i)
            per_scale[i].push_back(res.points[i].metrics);
    }
    std::sort(scales.begin(), scales.end());
    for (std::size_t i = 0; i < scales.size(); ++i) {
        MetricsReport m = mean_metrics(per_scale[i]);
        double abs_scale = sc.demand.demand_scale * scales[i];
        rows.emplace_back(abs_scale, m);
        curve_pts.emplace_back(abs_scale, m.trips_empty_per_h);
        std::printf("scale %s:\n", fmt_num(abs_scale).c_str());
        print_metrics(m);
    }

    fs::path dir = out_dir(out_flag);
    write_file(dir, "metrics.csv", export_metrics_csv(rows));
    write_file(dir, "curve.svg",
               render_curve_svg(curve_pts, "demand scale", "empty trips per hour"));
    std::printf("outputs in %s\n", dir.string().c_str());
    return kExitOk;
}

int cmd_compare(const std::string& path, double scale, const std::string& out_flag,
                double tol_throughput, double tol_wait, double tol_empty) {
    Scenario sc = load_input(path, false);
    sc.demand.demand_scale *= scale;

    EngineComparison cmp = compare_engines(sc);
    std::printf("event-driven:\n");
    print_metrics(cmp.ed);
    std::printf("cellular:\n");
    print_metrics(cmp.ca);
    std::printf("relative differences: throughput %s, wait %s, empty trips %s\n",
                fmt_num(cmp.throughput_rel_diff).c_str(), fmt_num(cmp.wait_rel_diff).c_str(),
                fmt_num(cmp.empty_rel_diff).c_str());

    fs::path dir = out_dir(out_flag);
    write_file(dir, "compare.csv",
               export_metrics_csv({{sc.demand.demand_scale, cmp.ed},
                                   {sc.demand.demand_scale, cmp.ca}}));

    if (cmp.throughput_rel_diff > tol_throughput || cmp.wait_rel_diff > tol_wait ||
        cmp.empty_rel_diff > tol_empty) {
        std::fprintf(stderr, "engines diverge beyond tolerance\n");
        return kExitDivergence;
    }
    return kExitOk;
}

int cmd_export_dot(const std::string& path, const std::string& out_flag) {
    Scenario sc = load_input(path, false);
    std::string dot = to_dot(sc.network);
    if (out_flag.empty()) {
        std::fputs(dot.c_str(), stdout);
    } else {
        write_file(out_dir(out_flag), "network.dot", dot);
        std::printf("wrote %s\n", (out_dir(out_flag) / "network.dot").string().c_str());
    }
    return kExitOk;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
    CLI::App app{"prtsim: dual-engine personal rapid transit network simulator"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "prtsim 1.0.0");

    std::string scenario_path, engine_s = "ed", out_flag;
    bool lenient = false, auto_sat = false;
    double scale = 1.0, duration = 0.0;
    long long seed = -1;
    int replications = 1;
    std::vector<double> scales;
    double tol_throughput = 0.20, tol_wait = 0.20, tol_empty = 0.35;

    auto* validate = app.add_subcommand("validate", "parse and check a scenario");
    validate->add_option("scenario", scenario_path, "scenario file or bundled name")->required();
    validate->add_flag("--lenient", lenient, "downgrade unknown keys to warnings");

    auto* run = app.add_subcommand("run", "single run, events.csv + metrics.csv");
    run->add_option("scenario", scenario_path)->required();
    run->add_option("--engine", engine_s, "ed or ca")->capture_default_str();
    run->add_option("--scale", scale, "demand scale multiplier")->capture_default_str();
    run->add_option("--seed", seed, "override the scenario seed");
    run->add_option("--duration", duration, "override duration in seconds");
    run->add_option("--out", out_flag, "output directory (default $PRTSIM_OUT or .)");

    auto* sweep = app.add_subcommand("sweep", "scale sweep, metrics.csv + curve.svg");
    sweep->add_option("scenario", scenario_path)->required();
    sweep->add_option("--engine", engine_s)->capture_default_str();
    sweep->add_option("--scales", scales, "scale factors to sweep")->delimiter(',');
    sweep->add_flag("--auto-saturation", auto_sat,
                    "probe for the saturation scale, then sweep 6 points up to it");
    sweep->add_option("--replications", replications, "seeds per scale")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    sweep->add_option("--out", out_flag);

    auto* compare = app.add_subcommand("compare", "run both engines on one demand stream");
    compare->add_option("scenario", scenario_path)->required();
    compare->add_option("--scale", scale)->capture_default_str();
    compare->add_option("--max-throughput-diff", tol_throughput)->capture_default_str();
    compare->add_option("--max-wait-diff", tol_wait)->capture_default_str();
    compare->add_option("--max-empty-diff", tol_empty)->capture_default_str();
    compare->add_option("--out", out_flag);

    auto* dot = app.add_subcommand("export-dot", "network structure as graphviz");
    dot->add_option("scenario", scenario_path)->required();
    dot->add_option("--out", out_flag, "write network.dot here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitInput;
    }

    try {
        if (*validate) return cmd_validate(scenario_path, lenient);
        if (*run) return cmd_run(scenario_path, engine_s, scale, out_flag, seed, duration);
        if (*sweep)
            return cmd_sweep(scenario_path, engine_s, scales, auto_sat, replications, out_flag);
        if (*compare)
            return cmd_compare(scenario_path, scale, out_flag, tol_throughput, tol_wait,
                               tol_empty);
        if (*dot) return cmd_export_dot(scenario_path, out_flag);
    } catch (const ScenarioError& e) {
        std::fprintf(stderr, "scenario error: %s\n", e.what());
        for (const std::string& issue : e.issues())
            std::fprintf(stderr, "  - %s\n", issue.c_str());
        return kExitInput;
    } catch (const CLI::ValidationError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return kExitInput;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitInput;
}

}  // namespace prt
