#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace prt {

using NodeId = std::uint32_t;
using SegmentId = std::uint32_t;

/// Per-vehicle physical capabilities. d_emergency is the friction limit and
/// is only exercised by the strict separation mode; normal planning never
/// brakes harder than d_max.
struct VehicleTraits {
    int capacity = 4;           // passengers
    double v_max = 14.0;        // m/s
    double a_max = 2.0;         // m/s^2
    double d_max = 2.0;         // m/s^2, service braking
    double d_emergency = 7.0;   // m/s^2, friction limit
    int ca_priority = 0;        // junction-rule vehicle priority term

    bool operator==(const VehicleTraits&) const = default;
};

/// Parameters shared by every vehicle of the event-driven track model.
struct TrafficParams {
    double horizon_m = 200.0;          // sensing range along the route
    double static_separation_m = 4.0;  // minimum stopped gap
    double board_time_s = 10.0;
    double debark_time_s = 10.0;
    double model_v_max = 14.0;         // network-wide speed cap
    bool strict_separation = false;    // plan against leader's d_emergency

    bool operator==(const TrafficParams&) const = default;
};

struct EdgeWeightParams {
    double alpha_length = 0.0;      // weight on metres
    double beta_time = 1.0;         // weight on free-flow seconds
    double gamma_congestion = 0.0;  // weight on occupancy estimate

    bool operator==(const EdgeWeightParams&) const = default;
};

/// Coefficients of the junction priority value
///   W = w_t * t + w_d * d + w_p * p + w_pas * pas
struct JunctionWeights {
    double w_t = 1.0;
    double w_d = 0.0;
    double w_p = 0.0;
    double w_pas = 0.0;

    bool operator==(const JunctionWeights&) const = default;
};

struct CaConfig {
    double cell_length_m = 4.0;
    double separation_m = 2.0;  // stopped-gap target, converted to cells
    double p1 = 0.0;            // random slowdown probability
    double p2 = 0.0;            // breakdown probability
    int breakdown_steps = 10;   // forced-stop duration once broken down
    JunctionWeights weights;

    bool operator==(const CaConfig&) const = default;

    int separation_cells() const;
    int v_cells(double v_mps) const;  // speed in cells/step, at least 1
};

inline int CaConfig::separation_cells() const {
    long long n = static_cast<long long>(separation_m / cell_length_m + 0.5);
    return static_cast<int>(n < 1 ? 1 : n);
}

inline int CaConfig::v_cells(double v_mps) const {
    long long n = static_cast<long long>(v_mps / cell_length_m + 0.5);
    return static_cast<int>(n < 1 ? 1 : n);
}

struct EvmConfig {
    bool enable_calling = true;
    bool enable_expelling = true;
    bool enable_withdrawing = true;
    bool enable_balancing = false;
    double withdraw_timeout_s = 120.0;
    double expel_lambda = 0.5;          // distance vs. free-berth trade-off
    int balance_surplus_threshold = 1;  // idle-minus-waiting above which a station sheds
    double balance_check_interval_s = 60.0;

    bool operator==(const EvmConfig&) const = default;
};

/// Probability per group size; support must stay within vehicle capacity.
struct GroupSizeDistribution {
    std::map<int, double> weights;

    bool operator==(const GroupSizeDistribution&) const = default;
};

/// One homogeneous demand window. Rates are groups/hour per origin station;
/// od rows are row-stochastic with a zero diagonal.
struct DemandPeriod {
    double start_s = 0.0;
    double end_s = 0.0;
    std::map<NodeId, double> station_rates;
    std::map<NodeId, std::map<NodeId, double>> od;

    bool operator==(const DemandPeriod&) const = default;
};

struct PassengerGroup {
    std::int64_t id = -1;
    int size = 1;
    NodeId origin = 0;
    NodeId destination = 0;
    double spawn_time_s = 0.0;

    bool operator==(const PassengerGroup&) const = default;
};

enum class EngineKind { EventDriven, CellularAutomata };

inline const char* engine_name(EngineKind k) {
    return k == EngineKind::EventDriven ? "ed" : "ca";
}

}  // namespace prt
