#pragma once

#include <map>
#include <optional>
#include <vector>

#include "prtsim/routing.hpp"
#include "prtsim/types.hpp"

namespace prt::evm {

enum class OrderKind { Call, Expel, Withdraw, Balance };

const char* order_kind_name(OrderKind k);

struct Order {
    OrderKind kind;
    int vehicle;
    NodeId target;  // station for Call/Balance, station or capacitor for Expel, capacitor for Withdraw
};

enum class VehiclePlace { AtStation, AtCapacitor, EnRoute };

/// Snapshot row per vehicle. Engines list a vehicle as EnRoute as soon as an
/// order is accepted for it, so policy functions never double-book.
struct VehicleView {
    int id = 0;
    VehiclePlace place = VehiclePlace::EnRoute;
    NodeId at_node = 0;        // meaningful unless EnRoute
    double idle_since_s = 0.0; // start of the current continuous idle span
    int occupancy = 0;         // passengers aboard (includes boarding)
};

struct StationView {
    NodeId id = 0;
    int total_berths = 0;
    int free_berths = 0;       // net of vehicles already inbound
    int free_entry_slots = 0;
    int waiting_groups = 0;
    int inbound_empties = 0;   // active Call/Balance orders heading here
    /// Spawn time of the oldest waiting group that no inbound or parked
    /// vehicle is going to serve; unset when everyone is covered.
    std::optional<double> oldest_unserved_spawn_s;
};

struct CapacitorView {
    NodeId id = 0;
    int free_places = 0;  // net of inbound withdrawals
};

struct FleetView {
    std::vector<VehicleView> vehicles;    // ascending id
    std::vector<StationView> stations;    // ascending id
    std::vector<CapacitorView> capacitors;
    const DistanceMatrix* distances = nullptr;  // static weights, beta = 1

    const StationView* station(NodeId id) const;
    const CapacitorView* capacitor(NodeId id) const;
};

/// Calling. A group just spawned at `station`: nothing to do when an idle
/// empty vehicle is parked right there (the group claims it without an
/// order); otherwise call the nearest idle empty vehicle, ties to the lower
/// vehicle id. No candidates or calling disabled: no order.
std::optional<Order> on_group_arrival(const FleetView& view, NodeId station, const EvmConfig& cfg);

/// Expelling. An occupied vehicle found `station` full: push out the
/// longest-idle empty vehicle parked there. Target minimises
///   score(s) = lambda * dist/max_dist - (1 - lambda) * free_berths/max_berths
/// over stations with a free berth; with none, fall back to the nearest
/// capacitor with space. No candidates: no order (the arrival keeps waiting).
std::optional<Order> on_station_full(const FleetView& view, NodeId station, const EvmConfig& cfg);

/// Withdrawing. Fires only after withdraw_timeout_s of continuous idleness
/// at a station, when no group waits there and some capacitor has room;
/// targets the nearest such capacitor.
std::optional<Order> on_idle_tick(const FleetView& view, int vehicle, double now_s,
                                  const EvmConfig& cfg);

/// Balancing. One order per surplus station (idle empties minus waiting
/// groups above threshold) towards the zero-idle station with the highest
/// expected rate.
std::vector<Order> balancing_tick(const FleetView& view,
                                  const std::map<NodeId, double>& expected_rates,
                                  const EvmConfig& cfg);

/// Backlog rescue. When a vehicle turns idle somewhere, re-run the call
/// decision for the most pressing uncovered station: nearest idle-to-station
/// distance minus an aging credit of kRescueAgingMps metres per waited
/// second, so close stations are cleared first but nobody starves.
std::optional<Order> on_vehicle_idle(const FleetView& view, double now_s, const EvmConfig& cfg);

/// Aging rate of the rescue score, in metres of empty driving one second of
/// passenger waiting is worth. Set to the line speed: waiting outweighs
/// driving one second for one.
inline constexpr double kRescueAgingMps = 14.0;

}  // namespace prt::evm
