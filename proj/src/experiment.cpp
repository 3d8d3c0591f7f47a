#include "prtsim/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <future>

#include "prtsim/engine_ca.hpp"
#include "prtsim/engine_event.hpp"

namespace prt {

RunResult simulate(const Scenario& sc, EngineKind engine) {
    return engine == EngineKind::EventDriven ? run_event_driven(sc) : run_cellular(sc);
}

RunResult simulate(const Scenario& sc, EngineKind engine,
                   const std::vector<DemandEvent>& demand) {
    return engine == EngineKind::EventDriven ? run_event_driven(sc, demand)
                                             : run_cellular(sc, demand);
}

MetricsReport metrics_of(const Scenario& sc, const RunResult& result) {
    double window = sc.run.duration_s - sc.run.warmup_s;
    return compute_metrics(result.log, sc.run.warmup_s, window,
                           static_cast<int>(sc.network.stations().size()));
}

namespace {

Scenario scaled(const Scenario& base, double factor) {
    Scenario sc = base;
    sc.demand.demand_scale = base.demand.demand_scale * factor;
    return sc;
}

ScaleObservation observe(const Scenario& base, EngineKind engine, double factor) {
    Scenario sc = scaled(base, factor);
    RunResult run = simulate(sc, engine);
    MetricsReport m = metrics_of(sc, run);
    ScaleObservation obs;
    obs.demand_scale = sc.demand.demand_scale;
    obs.throughput_per_h = m.trips_full_per_h;
    obs.groups_spawned = run.totals.groups_spawned;
    if (run.totals.groups_spawned > 0)
        obs.backlog_fraction = static_cast<double>(run.totals.groups_waiting) /
                               static_cast<double>(run.totals.groups_spawned);
    obs.queue_traj = queue_trajectory(run.log);
    obs.window_start_s = sc.run.warmup_s;
    obs.window_end_s = sc.run.duration_s;
    return obs;
}

// The quarter-ratio divergence test stays reserved for reporting: on the
// short probe windows used here it both misses blow-ups that start before
// the window (the ratio flattens towards the window geometry) and fires on
// noise when queues are short. The probe instead looks for the onset of
// sustained growth: both late quarters clearly above the second-quarter
// level, with the margin scaled to the demand volume so that a fixed small
// fraction of arrivals going unserved counts as saturation at any size.
// A large standing backlog covers the regime far past capacity, where
// growth starts before the window and the quarter deltas flatten out.
bool saturated(const ScaleObservation& obs) {
    if (obs.backlog_fraction >= 0.25) return true;
    double quarter = (obs.window_end_s - obs.window_start_s) / 4.0;
    double second = queue_mean_over(obs.queue_traj, obs.window_start_s + quarter,
                                    obs.window_start_s + 2.0 * quarter);
    double third = queue_mean_over(obs.queue_traj, obs.window_start_s + 2.0 * quarter,
                                   obs.window_start_s + 3.0 * quarter);
    double final_q = queue_mean_over(obs.queue_traj, obs.window_end_s - quarter, obs.window_end_s);
    double margin = std::max(3.0, 0.022 * static_cast<double>(obs.groups_spawned));
    return final_q >= second + margin && third >= second + 0.5 * margin;
}

}  // namespace

SweepResult run_sweep(const Scenario& base, EngineKind engine,
                      const std::vector<double>& scale_factors) {
    std::vector<double> factors = scale_factors;
    std::sort(factors.begin(), factors.end());

    std::vector<std::future<SweepPoint>> jobs;
    jobs.reserve(factors.size());
    for (double f : factors)
        jobs.push_back(std::async(std::launch::async, [&base, engine, f] {
            Scenario sc = scaled(base, f);
            RunResult run = simulate(sc, engine);
            return SweepPoint{sc.demand.demand_scale, metrics_of(sc, run)};
        }));

    SweepResult out;
    out.points.reserve(jobs.size());
    for (auto& j : jobs) out.points.push_back(j.get());
    out.curve = empty_trip_curve(out.points);
    return out;
}

SaturationSearch find_saturation_scale(const Scenario& base, EngineKind engine,
                                       int max_probes) {
    SaturationSearch search;
    auto probe = [&](double factor) {
        ScaleObservation obs = observe(base, engine, factor);
        ++search.probes;
        search.observations.push_back(obs);
        return saturated(obs);
    };

    // Bracket the boundary by doubling (or halving when the scenario is
    // already past it at factor 1).
    double lo = 0.0, hi = 0.0;
    double f = 1.0;
    bool sat = probe(f);
    if (sat) {
        hi = f;
        while (search.probes < max_probes) {
            f /= 2.0;
            if (probe(f)) {
                hi = f;
            } else {
                lo = f;
                break;
            }
        }
        if (lo == 0.0) {
            // saturates at every probed factor; report the smallest seen
            search.found = true;
            search.scale = hi;
            return search;
        }
    } else {
        lo = f;
        while (search.probes < max_probes) {
            f *= 2.0;
            if (probe(f)) {
                hi = f;
                break;
            }
            lo = f;
        }
        if (hi == 0.0) return search;  // never saturated within budget
    }

    // Six bisection steps inside the bracket, budget permitting.
    for (int i = 0; i < 6 && search.probes < max_probes; ++i) {
        double mid = 0.5 * (lo + hi);
        if (probe(mid))
            hi = mid;
        else
            lo = mid;
    }
    search.found = true;
    search.scale = hi;
    return search;
}

EngineComparison compare_engines(const Scenario& sc) {
    auto demand = generate_demand(sc.demand.periods, sc.demand.group_size, sc.run.duration_s,
                                  sc.run.seed, sc.demand.demand_scale);
    auto ed_job = std::async(std::launch::async,
                             [&] { return simulate(sc, EngineKind::EventDriven, demand); });
    RunResult ca_run = simulate(sc, EngineKind::CellularAutomata, demand);
    RunResult ed_run = ed_job.get();

    EngineComparison cmp;
    cmp.ed = metrics_of(sc, ed_run);
    cmp.ca = metrics_of(sc, ca_run);
    cmp.ed_safety = ed_run.safety;
    cmp.ca_safety = ca_run.safety;

    auto rel = [](double a, double b) {
        double m = std::max(std::abs(a), std::abs(b));
        return m == 0.0 ? 0.0 : std::abs(a - b) / m;
    };
    cmp.throughput_rel_diff = rel(cmp.ed.trips_full_per_h, cmp.ca.trips_full_per_h);
    cmp.wait_rel_diff = rel(cmp.ed.wait_mean_s, cmp.ca.wait_mean_s);
    cmp.empty_rel_diff = rel(cmp.ed.trips_empty_per_h, cmp.ca.trips_empty_per_h);
    return cmp;
}

std::string render_curve_svg(const std::vector<std::pair<double, double>>& points,
                             const std::string& x_label, const std::string& y_label) {
    const int w = 640, h = 420, ml = 70, mr = 20, mt = 20, mb = 50;
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    if (!points.empty()) {
        xmin = xmax = points[0].first;
        ymin = 0.0;
        ymax = points[0].second;
        for (const auto& [x, y] : points) {
            xmin = std::min(xmin, x);
            xmax = std::max(xmax, x);
            ymax = std::max(ymax, y);
        }
        if (xmax == xmin) xmax = xmin + 1.0;
        if (ymax == ymin) ymax = ymin + 1.0;
    }
    auto sx = [&](double x) { return ml + (x - xmin) / (xmax - xmin) * (w - ml - mr); };
    auto sy = [&](double y) { return h - mb - (y - ymin) / (ymax - ymin) * (h - mt - mb); };

    std::string svg;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" "
                  "viewBox=\"0 0 %d %d\">\n",
                  w, h, w, h);
    svg += buf;
    svg += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", ml,
                  h - mb, w - mr, h - mb);
    svg += buf;
    std::snprintf(buf, sizeof buf,
                  "<line x1=\"%d\" y1=\"%d\" x2=\"%d\" y2=\"%d\" stroke=\"black\"/>\n", ml, mt,
                  ml, h - mb);
    svg += buf;

    if (!points.empty()) {
        svg += "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"2\" points=\"";
        for (const auto& [x, y] : points) {
            std::snprintf(buf, sizeof buf, "%.2f,%.2f ", sx(x), sy(y));
            svg += buf;
        }
        svg += "\"/>\n";
        for (const auto& [x, y] : points) {
            std::snprintf(buf, sizeof buf,
                          "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"#1f6fb2\"/>\n", sx(x),
                          sy(y));
            svg += buf;
        }
        // axis extremes as plain tick labels
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%d\" y=\"%d\" font-size=\"12\">%s</text>\n", ml,
                      h - mb + 16, fmt_num(xmin).c_str());
        svg += buf;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%d\" y=\"%d\" font-size=\"12\" text-anchor=\"end\">%s</text>\n",
                      w - mr, h - mb + 16, fmt_num(xmax).c_str());
        svg += buf;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%d\" y=\"%d\" font-size=\"12\" text-anchor=\"end\">%s</text>\n",
                      ml - 6, mt + 6, fmt_num(ymax).c_str());
        svg += buf;
    }
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%d\" y=\"%d\" font-size=\"13\" text-anchor=\"middle\">%s</text>\n",
                  (ml + w - mr) / 2, h - 12, x_label.c_str());
    svg += buf;
    std::snprintf(
        buf, sizeof buf,
        "<text x=\"14\" y=\"%d\" font-size=\"13\" transform=\"rotate(-90 14 %d)\" "
        "text-anchor=\"middle\">%s</text>\n",
        (mt + h - mb) / 2, (mt + h - mb) / 2, y_label.c_str());
    svg += buf;
    svg += "</svg>\n";
    return svg;
}

}  // namespace prt
