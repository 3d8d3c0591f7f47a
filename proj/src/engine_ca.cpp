#include "prtsim/engine_ca.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>

#include "prtsim/engine_event.hpp"  // allowed_velocity
#include "prtsim/evm.hpp"
#include "prtsim/routing.hpp"
#include "prtsim/rng.hpp"
#include "prtsim/station.hpp"

namespace prt {

int ca_accelerate(int v, int v_max_cells) { return std::min(v + 1, v_max_cells); }

int ca_decelerate(int v, int dist_to_obstacle_cells) {
    return std::max(0, std::min(v, dist_to_obstacle_cells - 1));
}

int ca_randomize(int v, double p1, double u) { return (v > 0 && u < p1) ? v - 1 : v; }

std::pair<int, int> ca_breakdown(int v, int steps_left, double p2, double u,
                                 int breakdown_steps) {
    if (steps_left > 0) return {0, steps_left - 1};
    if (v > 0 && u < p2) return {0, breakdown_steps - 1};  // trigger step counts
    return {v, 0};
}

double junction_weight(const JunctionWeights& w, double waiting_steps, double distance_m,
                       double priority, double passengers) {
    return w.w_t * waiting_steps + w.w_d * distance_m + w.w_p * priority + w.w_pas * passengers;
}

std::size_t resolve_junction(const std::vector<JunctionCandidate>& cands,
                             const JunctionWeights& w) {
    std::size_t best = 0;
    double best_w = 0.0;
    for (std::size_t i = 0; i < cands.size(); ++i) {
        double wi = junction_weight(w, cands[i].waiting_steps, cands[i].distance_m,
                                    cands[i].priority, cands[i].passengers);
        if (i == 0 || wi > best_w || (wi == best_w && cands[i].vehicle < cands[best].vehicle)) {
            best = i;
            best_w = wi;
        }
    }
    return best;
}

CellMap::CellMap(const Network& net, double cell_length_m) {
    for (const Segment& s : net.segments()) {
        int n = cellize(s, cell_length_m);
        m_cells[s.id] = n;
        m_total += n;
    }
    for (const Node& n : net.nodes())
        if (n.type == NodeType::Fork || n.type == NodeType::Join ||
            n.type == NodeType::Junction) {
            m_node_cell[n.id] = 1;
            ++m_total;
        }
}

namespace {

constexpr int kBufferAdvanceSteps = 2;
constexpr int kStubExitSteps = 4;

enum class CState { Parked, InStation, OnTrack };
enum TimerWhat { cNone, cDebark, cBoard, cAdvanceEntry, cAdvanceExit, cStubTurn };

struct CPos {
    SegmentId seg = 0;
    int cell = 0;
    bool at_node = false;
    NodeId node = 0;
};

struct CaVeh {
    int id = 0;
    VehicleTraits traits;
    CState st = CState::Parked;
    NodeId house_node = 0;

    std::vector<SegmentId> route;
    std::size_t route_idx = 0;
    CPos pos;
    int v = 0;        // cells per step
    int broken = 0;   // breakdown steps remaining
    int waiting = 0;  // stopped steps with a join right ahead
    NodeId dest = 0;
    bool has_reservation = false;

    std::optional<PassengerGroup> group;
    bool trip_empty = true;
    std::string trip_cause;
    double trip_start = 0.0, trip_dist = 0.0;
    long route_step = 0;

    int timer = 0;
    int timer_what = cNone;
    long timer_set = -1;  // boundary that armed it; ticks start one later
    bool departing = false;
    bool stub_done = false;
    bool idle = false;
    double idle_since = 0.0;
    bool refusal_noted = false;

    Rng rng = Rng(0);

    // scratch for the current step
    int tv = 0;
    int entrance_dist = -1;  // cells to the house entrance; -1 out of reach
};

// One hop along a vehicle's cell path. Stations and capacitors contribute no
// cell: their node point is the house entrance.
struct Hop {
    CPos to;
    std::optional<SegmentId> completed;  // segment left behind in this hop
    bool crossed_join = false;
    bool entrance = false;  // path ends at the destination house
};

class CaEngine {
public:
    CaEngine(const Scenario& sc, const std::vector<DemandEvent>& demand)
        : m_sc(sc),
          m_net(sc.network),
          m_demand(demand),
          m_result{EventLog(EngineKind::CellularAutomata), {}, {}},
          m_static_dist(all_pairs_static(sc.network, EdgeWeightParams{0.0, 1.0, 0.0})),
          m_map(sc.network, sc.engine.ca.cell_length_m) {}

    RunResult run();

private:
    void place_fleet();
    void boundary_phase(long t);
    void move_phase(long t);

    Hop hop_after(const CaVeh& v, const CPos& cur, std::size_t idx) const;
    int occupant(const CPos& p) const;
    bool admission_open(const CaVeh& v) const;

    // house lifecycle (step clocks)
    void fire_timer(CaVeh& v, long t);
    void berth_arrival(CaVeh& v, long t);
    void become_idle(CaVeh& v, long t);
    void couple_if_possible(NodeId station, long t);
    void maybe_advance_entry(NodeId station, long t);
    void try_depart(CaVeh& v, long t);
    void admit_vehicle(CaVeh& v, long t);
    void complete_trip(CaVeh& v, long t);

    // EVM
    evm::FleetView make_view() const;
    void execute_order(const evm::Order& o, long t);
    void dispatch_trip(CaVeh& v, NodeId target, const char* cause, bool empty, long t);
    void fire_calling(NodeId station, long t);
    void fire_rescue(long t);
    void fire_expel(NodeId station, long t);

    void log(long t, EventKind k, std::int64_t veh = -1, std::int64_t grp = -1,
             std::int64_t node = -1, std::int64_t seg = -1, std::string detail = {});

    const Scenario& m_sc;
    const Network& m_net;
    const std::vector<DemandEvent>& m_demand;
    RunResult m_result;
    DistanceMatrix m_static_dist;
    CellMap m_map;

    std::vector<CaVeh> m_vehicles;
    std::map<NodeId, StationHouse> m_houses;
    std::map<NodeId, CapacitorPark> m_parks;
    std::unordered_map<SegmentId, std::vector<int>> m_cells;  // -1 free
    std::map<NodeId, int> m_node_occ;                         // fork/join/junction cells
    std::size_t m_demand_idx = 0;
    std::vector<std::pair<int, NodeId>> m_pending_expels;
    bool m_in_move = false;  // injections must not touch the frozen grid
    int m_steps = 0;
};

void CaEngine::log(long t, EventKind k, std::int64_t veh, std::int64_t grp, std::int64_t node,
                   std::int64_t seg, std::string detail) {
    m_result.log.append({static_cast<double>(t), k, veh, grp, node, seg, std::move(detail)});
}

void arm_timer(CaVeh& v, int steps, int what, long t) {
    v.timer = steps;
    v.timer_what = what;
    v.timer_set = t;
}

int CaEngine::occupant(const CPos& p) const {
    if (p.at_node) {
        auto it = m_node_occ.find(p.node);
        return it == m_node_occ.end() ? -1 : it->second;
    }
    return m_cells.at(p.seg)[static_cast<std::size_t>(p.cell)];
}

// Whether the destination house would take this vehicle right now. Physical
// space is what counts: on a single-lane approach the head of the line must
// never be held out by a reservation whose holder is queued behind it, so
// reservations only steer order issuing, not admission.
bool CaEngine::admission_open(const CaVeh& v) const {
    if (v.has_reservation) return true;
    if (auto it = m_houses.find(v.dest); it != m_houses.end())
        return it->second.free_berths() + it->second.free_entry_slots() > 0;
    const CapacitorPark& park = m_parks.at(v.dest);
    return park.parked_count() < park.places();
}

Hop CaEngine::hop_after(const CaVeh& v, const CPos& cur, std::size_t idx) const {
    // idx is the segment being ridden; standing on a node cell means the
    // previous segment is closed and idx already names the one beyond it.
    Hop h;
    if (cur.at_node) {
        h.to = {v.route[idx], 0, false, 0};
        return h;
    }
    if (cur.cell + 1 < m_map.cells(cur.seg)) {
        h.to = {cur.seg, cur.cell + 1, false, 0};
        return h;
    }
    NodeId node = m_net.segment(cur.seg).to;
    h.completed = cur.seg;
    if (idx + 1 >= v.route.size()) {
        h.entrance = true;
        return h;
    }
    if (m_map.node_has_cell(node)) {
        h.to = {0, 0, true, node};
        h.crossed_join = m_net.node(node).type == NodeType::Join;
        return h;
    }
    h.to = {v.route[idx + 1], 0, false, 0};
    return h;
}

void CaEngine::place_fleet() {
    auto caps = m_net.capacitors();
    for (NodeId c : caps) m_parks.emplace(c, CapacitorPark(m_net.node(c).parking_places));
    for (NodeId s : m_net.stations()) m_houses.emplace(s, StationHouse(m_net.node(s).station));
    for (const Segment& s : m_net.segments())
        m_cells[s.id].assign(static_cast<std::size_t>(m_map.cells(s.id)), -1);

    m_vehicles.resize(static_cast<std::size_t>(m_sc.fleet.count));
    for (int i = 0; i < m_sc.fleet.count; ++i) {
        CaVeh& v = m_vehicles[static_cast<std::size_t>(i)];
        v.id = i;
        v.traits = m_sc.fleet.traits_for(i);
        v.rng = Rng::substream(m_sc.run.seed, {stream::ca, static_cast<std::uint64_t>(i)});
        std::size_t k = static_cast<std::size_t>(i) % caps.size();
        for (std::size_t tries = 0; tries < caps.size(); ++tries) {
            CapacitorPark& p = m_parks.at(caps[(k + tries) % caps.size()]);
            if (p.free_places() > 0) {
                p.park(i, false);
                v.house_node = caps[(k + tries) % caps.size()];
                break;
            }
        }
        v.idle = true;
    }
    m_result.totals.vehicles = m_sc.fleet.count;
}

RunResult CaEngine::run() {
    place_fleet();
    m_steps = static_cast<int>(std::llround(m_sc.run.duration_s));

    char head[96];
    std::snprintf(head, sizeof head, "engine=ca;vehicles=%d;stations=%zu", m_sc.fleet.count,
                  m_net.stations().size());
    log(0, EventKind::SimulationStarted, -1, -1, -1, -1, head);

    for (long t = 0; t <= m_steps; ++t) {
        boundary_phase(t);
        if (t < m_steps) move_phase(t);
    }

    log(m_steps, EventKind::SimulationEnded);
    for (const CaVeh& v : m_vehicles)
        if (v.group) ++m_result.totals.groups_riding;
    for (const auto& [id, house] : m_houses)
        m_result.totals.groups_waiting += static_cast<long>(house.queue().size());
    return std::move(m_result);
}

// ---------------------------------------------------------------------------
// between-step administration

void CaEngine::boundary_phase(long t) {
    // 1. dwell clocks
    for (CaVeh& v : m_vehicles)
        if (v.timer > 0 && v.timer_set < t && --v.timer == 0) fire_timer(v, t);

    // 2. passenger arrivals
    while (m_demand_idx < m_demand.size() &&
           m_demand[m_demand_idx].time_s <= static_cast<double>(t) + 1e-9) {
        const PassengerGroup& g = m_demand[m_demand_idx].group;
        ++m_demand_idx;
        StationHouse& house = m_houses.at(g.origin);
        house.queue().push_back(g);
        ++m_result.totals.groups_spawned;
        char sd[48];
        std::snprintf(sd, sizeof sd, "size=%d;dest=%u", g.size, g.destination);
        log(t, EventKind::GroupSpawned, -1, g.id, static_cast<std::int64_t>(g.origin), -1, sd);
        char qd[24];
        std::snprintf(qd, sizeof qd, "len=%zu", house.queue().size());
        log(t, EventKind::QueueSampled, -1, -1, static_cast<std::int64_t>(g.origin), -1, qd);
        couple_if_possible(g.origin, t);
        if (!house.queue().empty()) fire_calling(g.origin, t);
    }

    // 3. deferred expel triggers from the previous move
    for (const auto& pe : m_pending_expels) fire_expel(pe.second, t);
    m_pending_expels.clear();

    // 4. withdraw clocks
    if (m_sc.evm.enable_withdrawing)
        for (CaVeh& v : m_vehicles) {
            if (!v.idle || v.st != CState::InStation) continue;
            if (static_cast<double>(t) - v.idle_since < m_sc.evm.withdraw_timeout_s - 1e-9)
                continue;
            auto order = evm::on_idle_tick(make_view(), v.id, static_cast<double>(t), m_sc.evm);
            if (order) execute_order(*order, t);
        }

    // 5. balancing
    if (m_sc.evm.enable_balancing) {
        long interval = std::llround(m_sc.evm.balance_check_interval_s);
        if (interval > 0 && t > 0 && t % interval == 0) {
            std::map<NodeId, double> rates;
            for (const auto& p : m_sc.demand.periods)
                if (p.start_s <= static_cast<double>(t) && static_cast<double>(t) < p.end_s)
                    for (const auto& [st, r] : p.station_rates)
                        rates[st] = r * m_sc.demand.demand_scale;
            for (const auto& o : evm::balancing_tick(make_view(), rates, m_sc.evm))
                execute_order(o, t);
        }
    }

    // 6. rerouting
    if (m_sc.routing.reroute_interval_s > 0.0)
        for (CaVeh& v : m_vehicles) {
            if (v.st != CState::OnTrack || v.route_idx + 1 >= v.route.size()) continue;
            if (static_cast<double>(t - v.route_step) < m_sc.routing.reroute_interval_s)
                continue;
            if (auto r = reroute(m_net, v.route[v.route_idx], v.dest, m_sc.routing.weights,
                                 CongestionSnapshot{})) {
                v.route.resize(v.route_idx + 1);
                v.route.insert(v.route.end(), r->segments.begin(), r->segments.end());
                v.route_step = t;
            }
        }

    // 7. departures and injections
    for (CaVeh& v : m_vehicles)
        if (v.departing && v.timer == 0 && v.st != CState::OnTrack) try_depart(v, t);
}

void CaEngine::fire_timer(CaVeh& v, long t) {
    int what = v.timer_what;
    v.timer_what = cNone;
    switch (what) {
        case cDebark:
            log(t, EventKind::DebarkDone, v.id, v.group->id,
                static_cast<std::int64_t>(v.house_node));
            ++m_result.totals.groups_arrived;
            v.group.reset();
            become_idle(v, t);
            break;
        case cBoard:
            log(t, EventKind::BoardingDone, v.id, v.group->id,
                static_cast<std::int64_t>(v.house_node));
            dispatch_trip(v, v.group->destination, "pax", false, t);
            break;
        case cAdvanceEntry:
            berth_arrival(v, t);
            break;
        case cAdvanceExit:
            try_depart(v, t);
            break;
        case cStubTurn:
            v.stub_done = true;
            try_depart(v, t);
            break;
        default:
            break;
    }
}

void CaEngine::berth_arrival(CaVeh& v, long t) {
    if (v.group) {
        log(t, EventKind::DebarkStarted, v.id, v.group->id,
            static_cast<std::int64_t>(v.house_node));
        arm_timer(v, static_cast<int>(std::llround(m_sc.traffic.debark_time_s)), cDebark, t);
    } else {
        become_idle(v, t);
    }
}

void CaEngine::become_idle(CaVeh& v, long t) {
    v.idle = true;
    v.idle_since = static_cast<double>(t);
    v.departing = false;
    v.stub_done = false;
    log(t, EventKind::VehicleIdle, v.id, -1, static_cast<std::int64_t>(v.house_node));
    if (v.st == CState::InStation) {
        couple_if_possible(v.house_node, t);
        if (v.idle)
            for (const CaVeh& w : m_vehicles)
                if (w.st == CState::OnTrack && w.refusal_noted && w.dest == v.house_node) {
                    fire_expel(v.house_node, t);
                    break;
                }
    }
    if (v.idle) fire_rescue(t);
}

void CaEngine::couple_if_possible(NodeId station, long t) {
    StationHouse& house = m_houses.at(station);
    while (!house.queue().empty()) {
        int pick = -1;
        for (int cand : house.occupants()) {
            const CaVeh& w = m_vehicles[static_cast<std::size_t>(cand)];
            if (house.berthed(cand) && w.idle && w.timer == 0 && !w.departing && !w.group) {
                pick = cand;
                break;
            }
        }
        if (pick < 0) return;
        CaVeh& v = m_vehicles[static_cast<std::size_t>(pick)];
        PassengerGroup g = house.queue().front();
        house.queue().pop_front();
        char qd[24];
        std::snprintf(qd, sizeof qd, "len=%zu", house.queue().size());
        log(t, EventKind::QueueSampled, -1, -1, static_cast<std::int64_t>(station), -1, qd);
        char wd[48];
        std::snprintf(wd, sizeof wd, "wait_s=%s",
                      fmt_num(static_cast<double>(t) - g.spawn_time_s).c_str());
        log(t, EventKind::GroupCoupled, v.id, g.id, static_cast<std::int64_t>(station), -1, wd);
        log(t, EventKind::BoardingStarted, v.id, g.id, static_cast<std::int64_t>(station));
        v.group = g;
        v.idle = false;
        arm_timer(v, static_cast<int>(std::llround(m_sc.traffic.board_time_s)), cBoard, t);
    }
}

void CaEngine::maybe_advance_entry(NodeId station, long t) {
    StationHouse& house = m_houses.at(station);
    while (house.free_berths() > 0) {
        auto vid = house.advance_entry();
        if (!vid) return;
        CaVeh& v = m_vehicles[static_cast<std::size_t>(*vid)];
        arm_timer(v, kBufferAdvanceSteps, cAdvanceEntry, t);
    }
}

void CaEngine::try_depart(CaVeh& v, long t) {
    if (!v.departing || v.timer > 0) return;

    auto inject = [&]() {
        if (m_in_move) return false;  // grid is frozen; retry next boundary
        SegmentId out = m_net.out_segments(v.house_node).front();
        auto& cells = m_cells.at(out);
        int need = std::min(m_sc.engine.ca.separation_cells(),
                            static_cast<int>(cells.size()));
        for (int c = 0; c < need; ++c)
            if (cells[static_cast<std::size_t>(c)] != -1) return false;

        if (v.st == CState::Parked) {
            m_parks.at(v.house_node).remove(v.id);
        } else {
            StationHouse& house = m_houses.at(v.house_node);
            bool from_berth = house.berthed(v.id);
            house.remove(v.id);
            if (from_berth) maybe_advance_entry(v.house_node, t);
        }
        v.st = CState::OnTrack;
        v.departing = false;
        v.stub_done = false;
        v.route_idx = 0;
        v.pos = {v.route[0], 0, false, 0};
        cells[0] = v.id;
        v.v = 0;
        v.waiting = 0;
        v.trip_start = static_cast<double>(t);
        v.trip_dist = 0.0;
        char d[48];
        std::snprintf(d, sizeof d, "empty=%d;cause=%s", v.trip_empty ? 1 : 0,
                      v.trip_cause.c_str());
        log(t, EventKind::TripStarted, v.id, v.group ? v.group->id : -1,
            static_cast<std::int64_t>(v.house_node), v.route[0], d);
        return true;
    };

    if (v.st == CState::Parked) {
        inject();
        return;
    }

    StationHouse& house = m_houses.at(v.house_node);
    if (house.in_entry_buffer(v.id)) return;
    if (house.berthed(v.id)) {
        if (house.spec().layout == StationLayout::StubBerths && !v.stub_done) {
            arm_timer(v, kStubExitSteps, cStubTurn, t);
            return;
        }
        auto eligible = house.departure_eligible();
        if (std::find(eligible.begin(), eligible.end(), v.id) == eligible.end()) return;
        if (house.spec().exit_buffer > 0) {
            if (house.free_exit_slots() <= 0) return;
            house.move_to_exit(v.id);
            maybe_advance_entry(v.house_node, t);
            arm_timer(v, kBufferAdvanceSteps, cAdvanceExit, t);
            return;
        }
        inject();
        return;
    }
    if (house.in_exit_buffer(v.id) && house.exit_buffer_head() == std::optional<int>(v.id))
        inject();
}

void CaEngine::admit_vehicle(CaVeh& v, long t) {
    if (auto hit = m_houses.find(v.dest); hit != m_houses.end()) {
        Placement p = hit->second.admit(v.id, v.has_reservation);
        if (p == Placement::Refused) {
            // Intent said open but an order raced in; stand and wait.
            if (!v.refusal_noted) {
                v.refusal_noted = true;
                m_pending_expels.emplace_back(v.id, v.dest);
            }
            return;
        }
        v.has_reservation = false;
        v.refusal_noted = false;
        complete_trip(v, t);
        v.st = CState::InStation;
        v.house_node = v.dest;
        if (p == Placement::Berth)
            berth_arrival(v, t);
        else
            maybe_advance_entry(v.dest, t);
        return;
    }
    if (!m_parks.at(v.dest).park(v.id, v.has_reservation)) return;
    v.has_reservation = false;
    complete_trip(v, t);
    v.st = CState::Parked;
    v.house_node = v.dest;
    become_idle(v, t);
}

void CaEngine::complete_trip(CaVeh& v, long t) {
    v.trip_dist += m_net.segment(v.route.back()).length_m;
    char d[128];
    std::snprintf(d, sizeof d, "empty=%d;cause=%s;dist_m=%s;dur_s=%s", v.trip_empty ? 1 : 0,
                  v.trip_cause.c_str(), fmt_num(v.trip_dist).c_str(),
                  fmt_num(static_cast<double>(t) - v.trip_start).c_str());
    log(t, EventKind::TripCompleted, v.id, v.group ? v.group->id : -1,
        static_cast<std::int64_t>(v.dest), v.route.back(), d);
}

// ---------------------------------------------------------------------------
// the step itself

void CaEngine::move_phase(long t) {
    const CaConfig& ca = m_sc.engine.ca;
    const long ta = t + 1;  // moves land at the next boundary
    m_in_move = true;

    // joins contested this step: node -> (vehicle, cells to the node cell)
    std::map<NodeId, std::vector<std::pair<int, int>>> contention;

    for (CaVeh& v : m_vehicles) {
        if (v.st != CState::OnTrack) continue;
        v.entrance_dist = -1;

        int limit = ca.v_cells(allowed_velocity(v.traits, m_sc.traffic,
                                                m_net.segment(v.route[v.route_idx])));
        v.tv = ca_accelerate(v.v, limit);

        // scan ahead over the frozen grid
        CPos cur = v.pos;
        std::size_t idx = v.route_idx;
        bool open = admission_open(v);
        for (int d = 1; d <= v.tv + 1; ++d) {
            Hop h = hop_after(v, cur, idx);
            if (h.entrance) {
                if (open)
                    v.entrance_dist = d;
                else
                    v.tv = ca_decelerate(v.tv, d);  // full house acts as an obstacle
                if (!open && d == 1 && !v.refusal_noted && v.v == 0) {
                    v.refusal_noted = true;
                    m_pending_expels.emplace_back(v.id, v.dest);
                }
                break;
            }
            // Candidacy must be recorded even when the join cell is occupied
            // in the frozen grid: under a dense crossing stream that cell is
            // never free at scan time, and a vehicle that only contends when
            // its path is clear would starve there forever.
            if (h.to.at_node && m_net.node(h.to.node).type == NodeType::Join)
                contention[h.to.node].emplace_back(v.id, d);
            if (occupant(h.to) != -1) {
                v.tv = ca_decelerate(v.tv, d);
                break;
            }
            if (h.completed) ++idx;
            cur = h.to;
        }

        if (ca.p1 > 0.0) v.tv = ca_randomize(v.tv, ca.p1, v.rng.uniform01());
        if (ca.p2 > 0.0 || v.broken > 0) {
            double u = (ca.p2 > 0.0 && v.broken == 0) ? v.rng.uniform01() : 1.0;
            auto [nv, nb] = ca_breakdown(v.tv, v.broken, ca.p2, u, ca.breakdown_steps);
            v.tv = nv;
            v.broken = nb;
        }
    }

    // merge arbitration, ascending node id
    for (auto& [node, cands] : contention) {
        std::vector<JunctionCandidate> live;
        std::vector<int> dist;
        for (auto [vid, d] : cands) {
            const CaVeh& v = m_vehicles[static_cast<std::size_t>(vid)];
            // Still in the running if it can at least be adjacent to the node
            // by the end of this step; that keeps a vehicle blocked right at
            // the merge contending while it waits for the cell to clear.
            if (v.tv < d - 1) continue;
            live.push_back({vid, static_cast<double>(v.waiting),
                            static_cast<double>(v.trip_dist), // closed segments so far
                            static_cast<double>(v.traits.ca_priority),
                            static_cast<double>(v.group ? v.group->size : 0)});
            dist.push_back(d);
        }
        if (live.size() < 2) continue;
        std::size_t win = resolve_junction(live, ca.weights);
        log(t, EventKind::JoinAllocated, live[win].vehicle, -1,
            static_cast<std::int64_t>(node));
        for (std::size_t i = 0; i < live.size(); ++i) {
            if (i == win) continue;
            CaVeh& v = m_vehicles[static_cast<std::size_t>(live[i].vehicle)];
            v.tv = ca_decelerate(v.tv, dist[i]);
        }
    }

    // apply the moves
    for (CaVeh& v : m_vehicles) {
        if (v.st != CState::OnTrack) continue;

        if (v.entrance_dist >= 0 && v.tv >= v.entrance_dist) {
            // leaves the track into the destination house
            if (v.pos.at_node)
                m_node_occ.erase(v.pos.node);
            else
                m_cells.at(v.pos.seg)[static_cast<std::size_t>(v.pos.cell)] = -1;
            // account for segments closed on the way in
            CPos cur = v.pos;
            std::size_t idx = v.route_idx;
            for (int s = 1; s < v.entrance_dist; ++s) {
                Hop h = hop_after(v, cur, idx);
                if (h.completed) {
                    v.trip_dist += m_net.segment(*h.completed).length_m;
                    ++idx;
                }
                cur = h.to;
            }
            v.v = 0;
            v.route_idx = v.route.size() - 1;
            admit_vehicle(v, ta);
            if (v.st == CState::OnTrack) {
                // refused after all: stand on the last approach cell
                v.pos = cur;
                v.route_idx = idx;
                if (cur.at_node)
                    m_node_occ[cur.node] = v.id;
                else
                    m_cells.at(cur.seg)[static_cast<std::size_t>(cur.cell)] = v.id;
            }
            continue;
        }

        if (v.tv > 0) {
            if (v.pos.at_node)
                m_node_occ.erase(v.pos.node);
            else
                m_cells.at(v.pos.seg)[static_cast<std::size_t>(v.pos.cell)] = -1;
            CPos cur = v.pos;
            std::size_t idx = v.route_idx;
            for (int s = 0; s < v.tv; ++s) {
                Hop h = hop_after(v, cur, idx);
                if (h.completed) {
                    v.trip_dist += m_net.segment(*h.completed).length_m;
                    ++idx;
                }
                if (h.crossed_join) v.waiting = 0;
                cur = h.to;
            }
            if (occupant(cur) != -1) ++m_result.safety.cell_collisions;
            if (cur.at_node)
                m_node_occ[cur.node] = v.id;
            else
                m_cells.at(cur.seg)[static_cast<std::size_t>(cur.cell)] = v.id;
            v.pos = cur;
            v.route_idx = idx;

            char d[48];
            std::snprintf(d, sizeof d, "cell=%d;v=%d", cur.at_node ? -1 : cur.cell, v.tv);
            log(ta, EventKind::CellMoved, v.id, -1,
                cur.at_node ? static_cast<std::int64_t>(cur.node) : -1,
                cur.at_node ? -1 : static_cast<std::int64_t>(cur.seg), d);
        }
        v.v = v.tv;

        // waiting clock: stopped with the join cell right ahead
        if (v.v == 0) {
            Hop h = hop_after(v, v.pos, v.route_idx);
            if (!h.entrance && h.to.at_node &&
                m_net.node(h.to.node).type == NodeType::Join)
                ++v.waiting;
            else
                v.waiting = 0;
        } else {
            v.waiting = 0;
        }
    }
    m_in_move = false;
}

// ---------------------------------------------------------------------------
// EVM wiring (same policies as the event-driven engine, step clocks)

evm::FleetView CaEngine::make_view() const {
    evm::FleetView view;
    view.distances = &m_static_dist;
    view.vehicles.reserve(m_vehicles.size());
    for (const CaVeh& v : m_vehicles) {
        evm::VehicleView vv;
        vv.id = v.id;
        vv.occupancy = v.group ? v.group->size : 0;
        vv.idle_since_s = v.idle_since;
        if (v.idle && !v.departing && v.st == CState::Parked) {
            vv.place = evm::VehiclePlace::AtCapacitor;
            vv.at_node = v.house_node;
        } else if (v.idle && !v.departing && v.st == CState::InStation) {
            vv.place = evm::VehiclePlace::AtStation;
            vv.at_node = v.house_node;
        } else {
            vv.place = evm::VehiclePlace::EnRoute;
        }
        view.vehicles.push_back(vv);
    }
    for (NodeId sid : m_net.stations()) {
        const StationHouse& house = m_houses.at(sid);
        evm::StationView sv;
        sv.id = sid;
        sv.total_berths = house.spec().berths;
        sv.free_berths = std::max(0, house.free_berths() - house.reservations());
        sv.free_entry_slots = house.free_entry_slots();
        sv.waiting_groups = static_cast<int>(house.queue().size());
        sv.inbound_empties = house.reservations();
        int covered = sv.inbound_empties;
        for (const evm::VehicleView& vv : view.vehicles)
            if (vv.place == evm::VehiclePlace::AtStation && vv.at_node == sid &&
                vv.occupancy == 0)
                ++covered;
        if (static_cast<int>(house.queue().size()) > covered)
            sv.oldest_unserved_spawn_s =
                house.queue()[static_cast<std::size_t>(covered)].spawn_time_s;
        view.stations.push_back(sv);
    }
    for (NodeId cid : m_net.capacitors())
        view.capacitors.push_back({cid, m_parks.at(cid).free_places()});
    return view;
}

void CaEngine::execute_order(const evm::Order& o, long t) {
    CaVeh& v = m_vehicles[static_cast<std::size_t>(o.vehicle)];
    if (!v.idle || v.departing || v.group) return;

    char d[64];
    std::snprintf(d, sizeof d, "order=%s;target=%u", evm::order_kind_name(o.kind), o.target);
    log(t, EventKind::EvmOrderIssued, v.id, -1, static_cast<std::int64_t>(o.target), -1, d);
    if (o.kind == evm::OrderKind::Withdraw)
        log(t, EventKind::VehicleWithdrawn, v.id, -1, static_cast<std::int64_t>(v.house_node));

    if (auto hit = m_houses.find(o.target); hit != m_houses.end())
        hit->second.reserve();
    else
        m_parks.at(o.target).reserve();
    v.has_reservation = true;
    v.idle = false;
    dispatch_trip(v, o.target, evm::order_kind_name(o.kind), true, t);
}

void CaEngine::dispatch_trip(CaVeh& v, NodeId target, const char* cause, bool empty, long t) {
    auto r = shortest_route(m_net, v.house_node, target, m_sc.routing.weights,
                            CongestionSnapshot{});
    if (!r || r->segments.empty()) {
        if (v.has_reservation) {
            if (auto hit = m_houses.find(target); hit != m_houses.end())
                hit->second.release_reservation();
            else
                m_parks.at(target).release_reservation();
            v.has_reservation = false;
        }
        become_idle(v, t);
        return;
    }
    v.route = r->segments;
    v.route_step = t;
    v.dest = target;
    v.trip_cause = cause;
    v.trip_empty = empty;
    v.departing = true;
    v.idle = false;
    try_depart(v, t);
}

void CaEngine::fire_calling(NodeId station, long t) {
    if (!m_sc.evm.enable_calling) return;
    if (auto order = evm::on_group_arrival(make_view(), station, m_sc.evm))
        execute_order(*order, t);
}

void CaEngine::fire_rescue(long t) {
    if (!m_sc.evm.enable_calling) return;
    if (auto order = evm::on_vehicle_idle(make_view(), static_cast<double>(t), m_sc.evm)) execute_order(*order, t);
}

void CaEngine::fire_expel(NodeId station, long t) {
    if (!m_sc.evm.enable_expelling) return;
    if (auto order = evm::on_station_full(make_view(), station, m_sc.evm))
        execute_order(*order, t);
}

}  // namespace

RunResult run_cellular(const Scenario& sc, const std::vector<DemandEvent>& demand) {
    CaEngine eng(sc, demand);
    return eng.run();
}

RunResult run_cellular(const Scenario& sc) {
    auto demand = generate_demand(sc.demand.periods, sc.demand.group_size, sc.run.duration_s,
                                  sc.run.seed, sc.demand.demand_scale);
    return run_cellular(sc, demand);
}

}  // namespace prt
