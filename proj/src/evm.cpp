#include "prtsim/evm.hpp"

#include <algorithm>
#include <cmath>

namespace prt::evm {

const char* order_kind_name(OrderKind k) {
    switch (k) {
        case OrderKind::Call: return "call";
        case OrderKind::Expel: return "expel";
        case OrderKind::Withdraw: return "withdraw";
        case OrderKind::Balance: return "balance";
    }
    return "?";
}

const StationView* FleetView::station(NodeId id) const {
    for (const auto& s : stations)
        if (s.id == id) return &s;
    return nullptr;
}

const CapacitorView* FleetView::capacitor(NodeId id) const {
    for (const auto& c : capacitors)
        if (c.id == id) return &c;
    return nullptr;
}

namespace {

bool idle_empty(const VehicleView& v) {
    return v.place != VehiclePlace::EnRoute && v.occupancy == 0;
}

/// Nearest idle empty vehicle by static route weight; ties to the lower id.
const VehicleView* nearest_idle(const FleetView& view, NodeId to) {
    const VehicleView* best = nullptr;
    double best_dist = DistanceMatrix::unreachable;
    for (const auto& v : view.vehicles) {
        if (!idle_empty(v)) continue;
        double d = view.distances->between(v.at_node, to);
        if (d == DistanceMatrix::unreachable) continue;
        if (!best || d < best_dist) {
            best = &v;
            best_dist = d;
        }
    }
    return best;
}

/// Nearest capacitor with a free place as seen from `from`; nullptr if every
/// capacitor is full. Ties to the lower capacitor id (map order).
const CapacitorView* nearest_free_capacitor(const FleetView& view, NodeId from) {
    const CapacitorView* best = nullptr;
    double best_dist = DistanceMatrix::unreachable;
    for (const auto& c : view.capacitors) {
        if (c.free_places <= 0) continue;
        double d = view.distances->between(from, c.id);
        if (d == DistanceMatrix::unreachable) continue;
        if (!best || d < best_dist) {
            best = &c;
            best_dist = d;
        }
    }
    return best;
}

}  // namespace

std::optional<Order> on_group_arrival(const FleetView& view, NodeId station, const EvmConfig& cfg) {
    if (!cfg.enable_calling) return std::nullopt;
    for (const auto& v : view.vehicles) {
        if (idle_empty(v) && v.place == VehiclePlace::AtStation && v.at_node == station)
            return std::nullopt;  // the group claims the parked vehicle directly
    }
    const VehicleView* v = nearest_idle(view, station);
    if (!v) return std::nullopt;
    return Order{OrderKind::Call, v->id, station};
}

std::optional<Order> on_station_full(const FleetView& view, NodeId station, const EvmConfig& cfg) {
    if (!cfg.enable_expelling) return std::nullopt;

    const VehicleView* victim = nullptr;
    for (const auto& v : view.vehicles) {
        if (!idle_empty(v) || v.place != VehiclePlace::AtStation || v.at_node != station) continue;
        if (!victim || v.idle_since_s < victim->idle_since_s) victim = &v;
    }
    if (!victim) return std::nullopt;

    // Candidate stations and the normalisers of the score formula.
    double max_dist = 0.0;
    int max_berths = 0;
    std::vector<const StationView*> candidates;
    for (const auto& s : view.stations) {
        if (s.id == station || s.free_berths <= 0) continue;
        double d = view.distances->between(station, s.id);
        if (d == DistanceMatrix::unreachable) continue;
        candidates.push_back(&s);
        max_dist = std::max(max_dist, d);
        max_berths = std::max(max_berths, s.total_berths);
    }

    const StationView* best = nullptr;
    double best_score = 0.0;
    for (const StationView* s : candidates) {
        double d = view.distances->between(station, s->id);
        double dist_part = max_dist > 0.0 ? d / max_dist : 0.0;
        double berth_part = max_berths > 0 ? static_cast<double>(s->free_berths) / max_berths : 0.0;
        double score = cfg.expel_lambda * dist_part - (1.0 - cfg.expel_lambda) * berth_part;
        if (!best || score < best_score) {
            best = s;
            best_score = score;
        }
    }
    if (best) return Order{OrderKind::Expel, victim->id, best->id};

    if (const CapacitorView* c = nearest_free_capacitor(view, station))
        return Order{OrderKind::Expel, victim->id, c->id};
    return std::nullopt;
}

std::optional<Order> on_idle_tick(const FleetView& view, int vehicle, double now_s,
                                  const EvmConfig& cfg) {
    if (!cfg.enable_withdrawing) return std::nullopt;
    const VehicleView* v = nullptr;
    for (const auto& cand : view.vehicles)
        if (cand.id == vehicle) v = &cand;
    if (!v || !idle_empty(*v) || v->place != VehiclePlace::AtStation) return std::nullopt;
    if (now_s - v->idle_since_s < cfg.withdraw_timeout_s) return std::nullopt;

    const StationView* here = view.station(v->at_node);
    if (here && here->waiting_groups > 0) return std::nullopt;

    const CapacitorView* c = nearest_free_capacitor(view, v->at_node);
    if (!c) return std::nullopt;
    return Order{OrderKind::Withdraw, v->id, c->id};
}

std::vector<Order> balancing_tick(const FleetView& view,
                                  const std::map<NodeId, double>& expected_rates,
                                  const EvmConfig& cfg) {
    std::vector<Order> orders;
    if (!cfg.enable_balancing) return orders;

    // Idle empties per station.
    std::map<NodeId, std::vector<const VehicleView*>> idle_at;
    for (const auto& v : view.vehicles)
        if (idle_empty(v) && v.place == VehiclePlace::AtStation) idle_at[v.at_node].push_back(&v);

    for (const auto& s : view.stations) {
        auto it = idle_at.find(s.id);
        int idle_count = it == idle_at.end() ? 0 : static_cast<int>(it->second.size());
        if (idle_count - s.waiting_groups <= cfg.balance_surplus_threshold) continue;

        // Deficit target: no idle empties (parked or inbound), highest rate.
        const StationView* target = nullptr;
        double target_rate = -1.0;
        for (const auto& d : view.stations) {
            if (d.id == s.id) continue;
            bool has_idle = idle_at.count(d.id) > 0 || d.inbound_empties > 0;
            if (has_idle) continue;
            if (view.distances->between(s.id, d.id) == DistanceMatrix::unreachable) continue;
            auto rit = expected_rates.find(d.id);
            double rate = rit == expected_rates.end() ? 0.0 : rit->second;
            if (!target || rate > target_rate) {
                target = &d;
                target_rate = rate;
            }
        }
        if (!target) continue;

        // Longest idle vehicle moves.
        const VehicleView* victim = it->second.front();
        for (const VehicleView* v : it->second)
            if (v->idle_since_s < victim->idle_since_s) victim = v;
        orders.push_back({OrderKind::Balance, victim->id, target->id});
    }
    return orders;
}

std::optional<Order> on_vehicle_idle(const FleetView& view, double now_s, const EvmConfig& cfg) {
    if (!cfg.enable_calling) return std::nullopt;
    const StationView* needy = nullptr;
    double best_score = 0.0;
    for (const auto& s : view.stations) {
        if (!s.oldest_unserved_spawn_s) continue;
        double d = DistanceMatrix::unreachable;
        for (const auto& v : view.vehicles) {
            if (!idle_empty(v)) continue;
            d = std::min(d, view.distances->between(v.at_node, s.id));
        }
        if (d == DistanceMatrix::unreachable) continue;
        double score = d - kRescueAgingMps * (now_s - *s.oldest_unserved_spawn_s);
        if (!needy || score < best_score) {
            needy = &s;
            best_score = score;
        }
    }
    if (!needy) return std::nullopt;
    return on_group_arrival(view, needy->id, cfg);
}

}  // namespace prt::evm
