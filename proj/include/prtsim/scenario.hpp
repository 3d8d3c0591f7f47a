#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "prtsim/network.hpp"
#include "prtsim/types.hpp"

namespace prt {

struct FleetSpec {
    int count = 0;
    VehicleTraits base;
    std::map<int, VehicleTraits> overrides;  // fully-resolved traits per special vehicle

    VehicleTraits traits_for(int vehicle) const {
        auto it = overrides.find(vehicle);
        return it == overrides.end() ? base : it->second;
    }
    bool operator==(const FleetSpec&) const = default;
};

struct RoutingSpec {
    EdgeWeightParams weights;
    double reroute_interval_s = 0.0;  // 0 = routes fixed once assigned
    bool operator==(const RoutingSpec&) const = default;
};

struct EngineParams {
    double sector_length_m = 10.0;
    CaConfig ca;
    bool operator==(const EngineParams&) const = default;
};

struct RunParams {
    double duration_s = 0.0;
    double warmup_s = 600.0;
    std::uint64_t seed = 0;
    bool operator==(const RunParams&) const = default;
};

struct DemandSpec {
    std::vector<DemandPeriod> periods;
    GroupSizeDistribution group_size;
    double demand_scale = 1.0;
    bool operator==(const DemandSpec&) const = default;
};

struct Scenario {
    std::string description;
    Network network;
    FleetSpec fleet;
    TrafficParams traffic;
    DemandSpec demand;
    EvmConfig evm;
    RoutingSpec routing;
    EngineParams engine;
    RunParams run;
    std::vector<std::string> warnings;  // lenient-mode notes, not serialised
};

class ScenarioError : public std::runtime_error {
public:
    ScenarioError(const std::string& what, std::vector<std::string> issues = {})
        : std::runtime_error(what), m_issues(std::move(issues)) {}
    const std::vector<std::string>& issues() const { return m_issues; }

private:
    std::vector<std::string> m_issues;
};

/// Reference parameter set used by the bundled experiments: 4-passenger
/// vehicles, 14 m/s, 2 m/s^2, 10 s board/debark, 4 m (track model) and 2 m
/// (cell model) separation, four in-line berths, calling + expelling +
/// withdrawing on with a 120 s withdraw timeout.
struct PaperDefaults {
    VehicleTraits traits;
    TrafficParams traffic;
    StationSpec station;
    CaConfig ca;
    EvmConfig evm;
    EdgeWeightParams routing;
    double sector_length_m = 10.0;
    double warmup_s = 600.0;
    GroupSizeDistribution group_size;
    int fleet_small = 12;
    int fleet_large = 24;
};

PaperDefaults paper_defaults();

/// Hand-built fixture networks. Total track lengths are pinned: 6064.5 m for
/// the city grid (ring of 14 stations + 2 capacitors with one cross chord)
/// and 5584 m for the seashore line (ring of 10 stations + 2 capacitors).
Network bundled_city();
Network bundled_seashore();

/// Ready-to-run scenario around a bundled network ("city" or "seashore"),
/// 24 vehicles, uniform demand.
Scenario bundled_scenario(const std::string& name);

/// Changes the run length. Demand periods that covered the whole old run
/// stretch (or shrink) with it; periods with their own shorter horizon stay.
void set_run_duration(Scenario& s, double duration_s);

/// Strict by default: unknown keys are errors. Lenient mode records them in
/// Scenario::warnings instead. Throws ScenarioError with the full issue list.
Scenario load_scenario(const std::string& path, bool lenient = false);
Scenario scenario_from_json(const nlohmann::json& j, bool lenient = false,
                            const std::string& base_dir = ".");

nlohmann::json scenario_to_json(const Scenario& s);
void save_scenario(const Scenario& s, const std::string& path);

/// Cross-field checks (fleet vs. parking places, group sizes vs. capacity,
/// demand stations vs. network, warmup vs. duration). Empty when fine.
std::vector<std::string> validate_scenario(const Scenario& s);

}  // namespace prt
