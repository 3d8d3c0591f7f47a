#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "prtsim/analytics.hpp"
#include "prtsim/demand.hpp"
#include "prtsim/run_result.hpp"
#include "prtsim/scenario.hpp"

namespace prt {

/// Run the scenario on the selected engine.
RunResult simulate(const Scenario& sc, EngineKind engine);
/// Same, on an explicit demand stream (for engine comparisons).
RunResult simulate(const Scenario& sc, EngineKind engine, const std::vector<DemandEvent>& demand);

/// Metrics over the post-warmup window of a finished run.
MetricsReport metrics_of(const Scenario& sc, const RunResult& result);

struct SweepResult {
    std::vector<SweepPoint> points;  // ascending by demand scale
    EmptyTripCurve curve;
};

/// One run per scale factor (applied on top of the scenario's own
/// demand_scale), in parallel. Scales are sorted into the result.
SweepResult run_sweep(const Scenario& base, EngineKind engine,
                      const std::vector<double>& scale_factors);

struct SaturationSearch {
    bool found = false;
    double scale = 0.0;  // lowest probed scale factor whose run saturates
    int probes = 0;
    std::vector<ScaleObservation> observations;  // in probe order
};

/// Exponential bracketing (doubling, halving below 1 when needed) followed
/// by bisection, never exceeding max_probes runs.
SaturationSearch find_saturation_scale(const Scenario& base, EngineKind engine,
                                       int max_probes = 12);

struct EngineComparison {
    MetricsReport ed;
    MetricsReport ca;
    SafetyCounters ed_safety;
    SafetyCounters ca_safety;
    double throughput_rel_diff = 0.0;
    double wait_rel_diff = 0.0;
    double empty_rel_diff = 0.0;
};

/// Both engines on the identical demand stream; relative differences are
/// |a - b| / max(|a|, |b|) and zero when both sides vanish.
EngineComparison compare_engines(const Scenario& sc);

/// Minimal standalone SVG of an empty-trip curve (or any 2d polyline).
std::string render_curve_svg(const std::vector<std::pair<double, double>>& points,
                             const std::string& x_label, const std::string& y_label);

}  // namespace prt
