#include "prtsim/engine_event.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdio>
#include <deque>
#include <map>
#include <queue>
#include <stdexcept>
#include <unordered_map>

#include "prtsim/evm.hpp"
#include "prtsim/routing.hpp"
#include "prtsim/station.hpp"

namespace prt {

double allowed_velocity(const VehicleTraits& v, const TrafficParams& p, const Segment& seg) {
    return std::min({v.v_max, p.model_v_max, seg.max_velocity_mps});
}

double stopping_distance(double v_mps, double decel_mps2) {
    return v_mps * v_mps / (2.0 * decel_mps2);
}

SpeedConstraint leader_constraint(double gap_m, double leader_v_mps, double leader_decel_mps2,
                                  double separation_m) {
    double stop_at = gap_m + stopping_distance(leader_v_mps, leader_decel_mps2) - separation_m;
    return {std::max(0.0, stop_at), 0.0};
}

bool sector_blocked(double sector_len_m, const std::vector<SpeedConstraint>& ahead) {
    for (const auto& c : ahead)
        if (c.v_mps <= 0.0 && c.at_m < sector_len_m - 1e-9) return true;
    return false;
}

double exit_speed_cap(double sector_len_m, double cruise_cap, double decel_mps2,
                      const std::vector<SpeedConstraint>& ahead) {
    double cap = cruise_cap;
    for (const auto& c : ahead) {
        double slack = c.at_m - sector_len_m;
        double v2 = c.v_mps * c.v_mps + 2.0 * decel_mps2 * std::max(0.0, slack);
        // A requirement inside the sector (slack < 0) degenerates to the
        // requirement speed itself; stop requirements there are rejected by
        // sector_blocked before planning.
        cap = std::min(cap, std::sqrt(v2));
    }
    return cap;
}

double PlanProfile::position_at(double dt_s) const {
    if (dt_s <= 0.0) return 0.0;
    double x = 0.0, t = dt_s;
    for (const auto& ph : phases) {
        if (t < ph.duration_s) return std::min(length_m, x + ph.v0_mps * t + 0.5 * ph.accel_mps2 * t * t);
        x += ph.v0_mps * ph.duration_s + 0.5 * ph.accel_mps2 * ph.duration_s * ph.duration_s;
        t -= ph.duration_s;
    }
    return length_m;
}

double PlanProfile::velocity_at(double dt_s) const {
    if (dt_s <= 0.0) return entry_v;
    double t = dt_s;
    for (const auto& ph : phases) {
        if (t < ph.duration_s) return ph.v0_mps + ph.accel_mps2 * t;
        t -= ph.duration_s;
    }
    return exit_v;
}

double PlanProfile::time_to_reach(double dist_m) const {
    if (dist_m <= 0.0) return 0.0;
    double x = dist_m, t = 0.0;
    for (const auto& ph : phases) {
        double step = ph.v0_mps * ph.duration_s + 0.5 * ph.accel_mps2 * ph.duration_s * ph.duration_s;
        if (x <= step + 1e-12) {
            if (std::abs(ph.accel_mps2) < 1e-12)
                return t + (ph.v0_mps > 1e-12 ? x / ph.v0_mps : ph.duration_s);
            double disc = ph.v0_mps * ph.v0_mps + 2.0 * ph.accel_mps2 * x;
            return t + (-ph.v0_mps + std::sqrt(std::max(0.0, disc))) / ph.accel_mps2;
        }
        x -= step;
        t += ph.duration_s;
    }
    return duration_s;
}

PlanProfile plan_profile(double length_m, double entry_v, double cruise_cap, double exit_cap,
                         double accel_mps2, double decel_mps2) {
    PlanProfile p;
    p.length_m = length_m;
    p.entry_v = entry_v;
    if (length_m <= 0.0) {
        p.exit_v = entry_v;
        return p;
    }

    const double a = accel_mps2, d = decel_mps2;
    // Exit speed actually reachable: no faster than acceleration allows, no
    // slower than service braking over the full length permits.
    double ve = std::min(exit_cap, std::sqrt(entry_v * entry_v + 2.0 * a * length_m));
    double ve_floor2 = entry_v * entry_v - 2.0 * d * length_m;
    if (ve_floor2 > ve * ve) ve = std::sqrt(std::max(0.0, ve_floor2));

    // Peak of the accelerate-then-brake triangle, clipped by the cruise cap.
    double vp2 = (2.0 * a * d * length_m + d * entry_v * entry_v + a * ve * ve) / (a + d);
    double vp = std::min(cruise_cap, std::sqrt(std::max(vp2, 0.0)));
    vp = std::max({vp, entry_v, ve});

    double d_up = (vp * vp - entry_v * entry_v) / (2.0 * a);
    double d_down = (vp * vp - ve * ve) / (2.0 * d);
    double d_cruise = std::max(0.0, length_m - d_up - d_down);

    if (vp > entry_v)
        p.phases.push_back({(vp - entry_v) / a, a, entry_v});
    if (d_cruise > 1e-12 && vp > 0.0)
        p.phases.push_back({d_cruise / vp, 0.0, vp});
    if (vp > ve)
        p.phases.push_back({(vp - ve) / d, -d, vp});

    p.exit_v = ve;
    for (const auto& ph : p.phases) p.duration_s += ph.duration_s;
    if (p.phases.empty()) {
        // Constant speed across the whole sector.
        p.phases.push_back({length_m / std::max(entry_v, 1e-9), 0.0, entry_v});
        p.duration_s = p.phases.back().duration_s;
        p.exit_v = entry_v;
    }
    return p;
}

double free_run_time(double dist_m, double v0, double cruise, double accel) {
    if (dist_m <= 0.0) return 0.0;
    double v = std::min(v0, cruise);
    double d_up = (cruise * cruise - v * v) / (2.0 * accel);
    if (dist_m <= d_up)
        return (-v + std::sqrt(v * v + 2.0 * accel * dist_m)) / accel;
    return (cruise - v) / accel + (dist_m - d_up) / cruise;
}

namespace {

constexpr double kBufferAdvanceS = 2.0;  // entry/exit buffer shuffle time
constexpr double kStubExitS = 4.0;       // reversing out of a stub berth
constexpr double kWithdrawRetryS = 15.0; // re-poll cadence after a declined withdraw

enum class VState { Parked, InStation, Moving, Blocked };

enum DwellWhat { kDebark, kBoard, kAdvanceEntry, kAdvanceExit, kStubTurn };

struct Veh {
    int id = 0;
    VehicleTraits traits;
    VState st = VState::Parked;
    NodeId house_node = 0;

    SegmentId seg = 0;
    std::vector<SegmentId> route;
    std::size_t route_idx = 0;
    std::size_t boundary_idx = 0;
    double pos = 0.0, vel = 0.0;
    PlanProfile plan;
    double plan_t0 = 0.0;
    NodeId dest = 0;
    bool has_reservation = false;

    std::optional<PassengerGroup> group;
    bool trip_empty = true;
    std::string trip_cause;
    double trip_start = 0.0, trip_dist = 0.0;
    double route_assigned_t = 0.0;

    bool busy = false;       // dwell timer in progress
    bool departing = false;  // trip assigned, working through the exit
    bool stub_done = false;

    bool idle = false;
    double idle_since = 0.0;
    long long idle_stamp = 0;
    bool refusal_noted = false;

    double pos_at(double t) const {
        return st == VState::Moving ? pos + plan.position_at(t - plan_t0) : pos;
    }
    double vel_at(double t) const {
        return st == VState::Moving ? plan.velocity_at(t - plan_t0) : vel;
    }
};

struct Ev {
    double t = 0.0;
    int cls = 0;  // 0 releases/admin, 1 node crossings, 2 sector arrivals
    long long entity = 0;
    long long seq = 0;
    enum class K {
        Arrival,
        Dwell,
        Spawn,
        WithdrawCheck,
        BalanceTick,
        Regrant,
        JoinRelease
    } k = K::Arrival;
    int vehicle = -1;
    int dwell = 0;
    std::size_t spawn_idx = 0;
    long long stamp = 0;
};

struct EvAfter {
    bool operator()(const Ev& a, const Ev& b) const {
        if (a.t != b.t) return a.t > b.t;
        if (a.cls != b.cls) return a.cls > b.cls;
        if (a.entity != b.entity) return a.entity > b.entity;
        return a.seq > b.seq;
    }
};

struct JoinCtl {
    std::optional<int> holder;
    // vehicle -> (projected arrival, feeding segment)
    std::map<int, std::pair<double, SegmentId>> requests;
    double last_cross_t = -1e18;
    int last_cross_vehicle = -1;
    bool regrant_pending = false;  // a deferred grant is already scheduled
    // A crossing vehicle keeps the node until it is one static separation
    // past it. Otherwise a vehicle braking towards the node from another leg
    // would suddenly see a leader standing closer than its planned stop.
    bool clearing = false;
    SegmentId clear_seg = 0;
};

class Engine {
public:
    Engine(const Scenario& sc, const std::vector<DemandEvent>& demand)
        : m_sc(sc),
          m_net(sc.network),
          m_demand(demand),
          m_result{EventLog(EngineKind::EventDriven), {}, {}},
          m_static_dist(all_pairs_static(sc.network, EdgeWeightParams{0.0, 1.0, 0.0})) {}

    RunResult run();

private:
    // --- setup -----------------------------------------------------------
    void place_fleet();
    const std::vector<double>& boundaries(SegmentId id);

    // --- event handlers ---------------------------------------------------
    void on_arrival(int vid, double t);
    void on_dwell(const Ev& ev, double t);
    void on_spawn(std::size_t idx, double t);
    void on_withdraw_check(int vid, long long stamp, double t);
    void on_balance_tick(double t);

    // --- movement ---------------------------------------------------------
    bool resume(Veh& v, double t);
    bool plan_and_schedule(Veh& v, double t);
    std::vector<SpeedConstraint> gather_constraints(Veh& v, double t, double sector_len,
                                                    double cruise);
    void do_transition(Veh& v, double t);
    bool try_admit(Veh& v, double t);
    void complete_trip(Veh& v, double t);
    void check_separation(const Veh& v, double t);

    // --- houses -----------------------------------------------------------
    void berth_arrival(Veh& v, double t);
    void become_idle(Veh& v, double t);
    void couple_if_possible(NodeId station, double t);
    void couple(Veh& v, NodeId station, double t);
    void maybe_advance_entry(NodeId station, double t);
    bool try_depart(Veh& v, double t);
    bool inject(Veh& v, double t);
    bool approach_clear(NodeId node, double acc, int depth, double t);

    // --- EVM ---------------------------------------------------------------
    evm::FleetView make_view() const;
    void execute_order(const evm::Order& o, double t);
    void dispatch_trip(Veh& v, NodeId target, const char* cause, bool empty, double t);
    void fire_calling(NodeId station, double t);
    void fire_rescue(double t);
    void fire_expel(NodeId station, double t);

    // --- joins -------------------------------------------------------------
    void request_join(NodeId node, int vid, double eta, SegmentId leg);
    void grant_if_free(NodeId node, double t);
    void cross_join(NodeId node, Veh& v, double t);
    void finish_clear(NodeId node, double t);
    void finish_clear_held_by(int vid, double t);
    void release_after_clear(Veh& v, double t);
    void on_join_release(NodeId node, double t);
    bool holder_cannot_reach(int vid, NodeId join) const;

    // --- plumbing ----------------------------------------------------------
    void cascade(double t);
    void schedule(Ev ev);
    void log(double t, EventKind k, std::int64_t veh = -1, std::int64_t grp = -1,
             std::int64_t node = -1, std::int64_t seg = -1, std::string detail = {});
    CongestionSnapshot congestion() const;
    std::deque<int>& on_seg(SegmentId id) { return m_on_segment[id]; }
    double seg_len(SegmentId id) const { return m_net.segment(id).length_m; }
    std::map<NodeId, double> active_rates(double t) const;

    const Scenario& m_sc;
    const Network& m_net;
    const std::vector<DemandEvent>& m_demand;
    RunResult m_result;
    DistanceMatrix m_static_dist;

    std::vector<Veh> m_vehicles;
    std::map<NodeId, StationHouse> m_houses;
    std::map<NodeId, CapacitorPark> m_parks;
    std::map<NodeId, JoinCtl> m_joins;
    std::unordered_map<SegmentId, std::deque<int>> m_on_segment;
    std::unordered_map<SegmentId, std::vector<double>> m_bounds;
    double m_max_sector = 0.0;  // longest sector anywhere, for injection guards
    std::priority_queue<Ev, std::vector<Ev>, EvAfter> m_events;
    long long m_seq = 0;
    double m_now = 0.0;
};

void Engine::schedule(Ev ev) {
    ev.seq = m_seq++;
    m_events.push(ev);
}

void Engine::log(double t, EventKind k, std::int64_t veh, std::int64_t grp, std::int64_t node,
                 std::int64_t seg, std::string detail) {
    m_result.log.append({t, k, veh, grp, node, seg, std::move(detail)});
}

const std::vector<double>& Engine::boundaries(SegmentId id) {
    auto it = m_bounds.find(id);
    if (it == m_bounds.end())
        it = m_bounds.emplace(id, sectorize(m_net.segment(id), m_sc.engine.sector_length_m)).first;
    return it->second;
}

void Engine::place_fleet() {
    auto caps = m_net.capacitors();
    for (NodeId c : caps) m_parks.emplace(c, CapacitorPark(m_net.node(c).parking_places));
    for (NodeId s : m_net.stations()) m_houses.emplace(s, StationHouse(m_net.node(s).station));
    for (const auto& n : m_net.nodes())
        if (n.type == NodeType::Join) m_joins.emplace(n.id, JoinCtl{});

    m_vehicles.resize(static_cast<std::size_t>(m_sc.fleet.count));
    for (int i = 0; i < m_sc.fleet.count; ++i) {
        Veh& v = m_vehicles[static_cast<std::size_t>(i)];
        v.id = i;
        v.traits = m_sc.fleet.traits_for(i);
        std::size_t k = static_cast<std::size_t>(i) % caps.size();
        for (std::size_t tries = 0; tries < caps.size(); ++tries) {
            CapacitorPark& p = m_parks.at(caps[(k + tries) % caps.size()]);
            if (p.free_places() > 0) {
                p.park(i, false);
                v.house_node = caps[(k + tries) % caps.size()];
                break;
            }
        }
        v.st = VState::Parked;
        v.idle = true;
        v.idle_since = 0.0;
    }
    m_result.totals.vehicles = m_sc.fleet.count;
}

RunResult Engine::run() {
    for (const Segment& s : m_net.segments()) {
        const auto& b = boundaries(s.id);
        for (std::size_t i = 0; i + 1 < b.size(); ++i)
            m_max_sector = std::max(m_max_sector, b[i + 1] - b[i]);
    }
    place_fleet();

    char head[96];
    std::snprintf(head, sizeof head, "engine=ed;vehicles=%d;stations=%zu", m_sc.fleet.count,
                  m_net.stations().size());
    log(0.0, EventKind::SimulationStarted, -1, -1, -1, -1, head);

    for (std::size_t i = 0; i < m_demand.size(); ++i)
        schedule({m_demand[i].time_s, 0, m_demand[i].group.id, 0, Ev::K::Spawn, -1, 0, i, 0});
    if (m_sc.evm.enable_balancing)
        schedule({m_sc.evm.balance_check_interval_s, 0, -2, 0, Ev::K::BalanceTick, -1, 0, 0, 0});

    const double end = m_sc.run.duration_s;
    while (!m_events.empty()) {
        Ev ev = m_events.top();
        if (ev.t > end) break;
        m_events.pop();
        m_now = ev.t;
        switch (ev.k) {
            case Ev::K::Arrival: on_arrival(ev.vehicle, ev.t); break;
            case Ev::K::Dwell: on_dwell(ev, ev.t); break;
            case Ev::K::Spawn: on_spawn(ev.spawn_idx, ev.t); break;
            case Ev::K::WithdrawCheck: on_withdraw_check(ev.vehicle, ev.stamp, ev.t); break;
            case Ev::K::BalanceTick: on_balance_tick(ev.t); break;
            case Ev::K::Regrant: {
                NodeId node = static_cast<NodeId>(ev.entity);
                m_joins.at(node).regrant_pending = false;
                grant_if_free(node, ev.t);
                break;
            }
            case Ev::K::JoinRelease: on_join_release(static_cast<NodeId>(ev.entity), ev.t); break;
        }
        cascade(ev.t);
    }

    log(end, EventKind::SimulationEnded);

    for (const Veh& v : m_vehicles)
        if (v.group) ++m_result.totals.groups_riding;
    for (const auto& [id, house] : m_houses)
        m_result.totals.groups_waiting += static_cast<long>(house.queue().size());
    return std::move(m_result);
}

// Try to move every stalled vehicle until the state settles. With fleets of
// a couple dozen vehicles a plain fixpoint loop is cheaper than precise
// dependency tracking.
void Engine::cascade(double t) {
    bool progress = true;
    while (progress) {
        progress = false;
        for (Veh& v : m_vehicles) {
            if (v.st == VState::Blocked) {
                if (resume(v, t)) progress = true;
            } else if ((v.st == VState::InStation || v.st == VState::Parked) && v.departing &&
                       !v.busy) {
                if (try_depart(v, t)) progress = true;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// movement

void Engine::on_arrival(int vid, double t) {
    Veh& v = m_vehicles[static_cast<std::size_t>(vid)];
    const auto& bounds = boundaries(v.seg);
    ++v.boundary_idx;
    v.pos = bounds[v.boundary_idx];
    v.vel = v.plan.exit_v;
    v.st = VState::Blocked;  // provisional; resume() decides what follows

    char d[32];
    std::snprintf(d, sizeof d, "v=%s", fmt_num(v.vel).c_str());
    log(t, EventKind::SectorCrossed, vid, -1, -1, v.seg, d);
    check_separation(v, t);

    resume(v, t);
}

// At a sector connection: cross nodes while possible, then plan the next
// sector or come to rest. Returns true when the vehicle made any progress.
bool Engine::resume(Veh& v, double t) {
    bool progressed = false;
    while (true) {
        const auto& bounds = boundaries(v.seg);
        if (v.boundary_idx + 1 < bounds.size()) {
            // Interior connection: plan the next sector.
            if (plan_and_schedule(v, t)) return true;
            v.st = VState::Blocked;
            return progressed;
        }

        // Standing at the end node of the current segment.
        const Segment& seg = m_net.segment(v.seg);
        if (v.route_idx + 1 >= v.route.size()) {
            if (try_admit(v, t)) return true;
            v.st = VState::Blocked;
            return progressed;
        }
        if (m_net.node(seg.to).type == NodeType::Join) {
            JoinCtl& ctl = m_joins.at(seg.to);
            if (!ctl.holder || *ctl.holder != v.id) {
                request_join(seg.to, v.id, t, v.seg);
                grant_if_free(seg.to, t);
                if (ctl.holder && *ctl.holder != v.id && !ctl.clearing &&
                    holder_cannot_reach(*ctl.holder, seg.to)) {
                    // The grant went to a vehicle that meanwhile got another
                    // vehicle in front of it; it will stop anyway, so pull
                    // the grant back instead of wedging both legs.
                    ctl.requests.erase(*ctl.holder);
                    ctl.holder.reset();
                    grant_if_free(seg.to, t);
                }
                if (!ctl.holder || *ctl.holder != v.id) {
                    v.st = VState::Blocked;
                    return progressed;
                }
            }
        }
        do_transition(v, t);
        progressed = true;
    }
}

void Engine::do_transition(Veh& v, double t) {
    const Segment& seg = m_net.segment(v.seg);
    if (m_net.node(seg.to).type == NodeType::Join) cross_join(seg.to, v, t);

    auto& dq = on_seg(v.seg);
    if (!dq.empty() && dq.front() == v.id) dq.pop_front();
    v.trip_dist += seg.length_m;
    ++v.route_idx;

    // Mid-trip rerouting happens only at nodes, from the node being crossed.
    if (m_sc.routing.reroute_interval_s > 0.0 &&
        t - v.route_assigned_t >= m_sc.routing.reroute_interval_s &&
        v.route_idx + 1 < v.route.size()) {
        CongestionSnapshot snap = congestion();
        if (auto r = shortest_route(m_net, seg.to, v.dest, m_sc.routing.weights, snap);
            r && !r->segments.empty()) {
            v.route.resize(v.route_idx);
            v.route.insert(v.route.end(), r->segments.begin(), r->segments.end());
            v.route_assigned_t = t;
        }
    }

    v.seg = v.route[v.route_idx];
    v.boundary_idx = 0;
    v.pos = 0.0;
    on_seg(v.seg).push_back(v.id);

    if (m_net.node(seg.to).type == NodeType::Join) m_joins.at(seg.to).clear_seg = v.seg;
}

bool Engine::plan_and_schedule(Veh& v, double t) {
    const Segment& seg = m_net.segment(v.seg);
    const auto& bounds = boundaries(v.seg);
    double L = bounds[v.boundary_idx + 1] - bounds[v.boundary_idx];
    double cruise = allowed_velocity(v.traits, m_sc.traffic, seg);

    auto cs = gather_constraints(v, t, L, cruise);
    if (sector_blocked(L, cs)) return false;

    double cap = exit_speed_cap(L, cruise, v.traits.d_max, cs);
    double feasible2 = cap * cap + 2.0 * v.traits.d_max * L;
    if (v.vel * v.vel > feasible2 + 1e-6) {
        // The induction from previous exit caps should make this impossible.
        ++m_result.safety.envelope_violations;
        cap = std::sqrt(std::max(0.0, v.vel * v.vel - 2.0 * v.traits.d_max * L));
    }

    v.plan = plan_profile(L, v.vel, cruise, cap, v.traits.a_max, v.traits.d_max);
    v.plan_t0 = t;
    v.st = VState::Moving;
    int cls = (v.boundary_idx + 2 == bounds.size()) ? 1 : 2;
    schedule({t + v.plan.duration_s, cls, v.id, 0, Ev::K::Arrival, v.id, 0, 0, 0});
    release_after_clear(v, t);
    return true;
}

std::vector<SpeedConstraint> Engine::gather_constraints(Veh& v, double t, double sector_len,
                                                        double cruise) {
    std::vector<SpeedConstraint> cs;
    const double sep = m_sc.traffic.static_separation_m;
    // Never look at less track than the sector plus a full stop needs.
    const double horizon =
        std::max(m_sc.traffic.horizon_m,
                 sector_len + stopping_distance(cruise, v.traits.d_max) + sep + 1.0);

    bool leader_found = false;
    bool join_requested = false;
    double off = -v.pos;  // start of the walked segment, relative to v

    for (std::size_t k = v.route_idx; k < v.route.size(); ++k) {
        const Segment& sk = m_net.segment(v.route[k]);
        if (k > v.route_idx) {
            if (off > horizon) break;
            double limit = allowed_velocity(v.traits, m_sc.traffic, sk);
            if (limit < cruise) cs.push_back({off, limit});
        }

        if (!leader_found) {
            const auto& dq = on_seg(v.route[k]);
            int leader = -1;
            if (k == v.route_idx) {
                for (std::size_t i = 0; i < dq.size(); ++i)
                    if (dq[i] == v.id) {
                        if (i > 0) leader = dq[i - 1];
                        break;
                    }
            } else if (!dq.empty()) {
                leader = dq.back();
            }
            if (leader >= 0) {
                const Veh& lv = m_vehicles[static_cast<std::size_t>(leader)];
                double gap = off + lv.pos_at(t);
                if (gap <= horizon) {
                    double lead_decel = m_sc.traffic.strict_separation ? lv.traits.d_emergency
                                                                       : lv.traits.d_max;
                    cs.push_back(leader_constraint(gap, lv.vel_at(t), lead_decel, sep));
                }
                leader_found = true;
            }
        }

        double node_dist = off + sk.length_m;
        if (node_dist > horizon) break;

        if (k + 1 >= v.route.size()) {
            cs.push_back({node_dist, 0.0});  // target node: stop at its point
            break;
        }
        if (m_net.node(sk.to).type == NodeType::Join) {
            JoinCtl& ctl = m_joins.at(sk.to);
            bool held = ctl.holder && *ctl.holder == v.id;
            // Only the vehicle with a clear run to the join competes for it;
            // anyone boxed in behind a leader waits for its own replan.
            if (!held && !join_requested && !leader_found) {
                request_join(sk.to, v.id,
                             t + free_run_time(node_dist, v.vel, cruise, v.traits.a_max),
                             v.route[k]);
                grant_if_free(sk.to, t);
                held = ctl.holder && *ctl.holder == v.id;
            }
            join_requested = true;
            // Wait out one separation short of the node: a vehicle standing
            // just past the merge point then never binds tighter than this.
            if (!held) cs.push_back({std::max(0.0, node_dist - sep), 0.0});
        }
        off += sk.length_m;
    }
    return cs;
}

bool Engine::try_admit(Veh& v, double t) {
    const Segment& seg = m_net.segment(v.seg);
    NodeId node = seg.to;

    if (auto hit = m_houses.find(node); hit != m_houses.end()) {
        StationHouse& house = hit->second;
        Placement p = house.admit(v.id, v.has_reservation);
        if (p == Placement::Refused) {
            if (!v.refusal_noted) {
                v.refusal_noted = true;
                fire_expel(node, t);
            }
            return false;
        }
        v.has_reservation = false;
        v.refusal_noted = false;
        auto& dq = on_seg(v.seg);
        if (!dq.empty() && dq.front() == v.id) dq.pop_front();
        complete_trip(v, t);
        finish_clear_held_by(v.id, t);
        v.st = VState::InStation;
        v.house_node = node;
        if (p == Placement::Berth)
            berth_arrival(v, t);
        else
            maybe_advance_entry(node, t);
        return true;
    }

    CapacitorPark& park = m_parks.at(node);
    if (!park.park(v.id, v.has_reservation)) return false;
    v.has_reservation = false;
    auto& dq = on_seg(v.seg);
    if (!dq.empty() && dq.front() == v.id) dq.pop_front();
    complete_trip(v, t);
    finish_clear_held_by(v.id, t);
    v.st = VState::Parked;
    v.house_node = node;
    become_idle(v, t);
    return true;
}

void Engine::complete_trip(Veh& v, double t) {
    v.trip_dist += seg_len(v.seg);
    char d[128];
    std::snprintf(d, sizeof d, "empty=%d;cause=%s;dist_m=%s;dur_s=%s", v.trip_empty ? 1 : 0,
                  v.trip_cause.c_str(), fmt_num(v.trip_dist).c_str(),
                  fmt_num(t - v.trip_start).c_str());
    log(t, EventKind::TripCompleted, v.id, v.group ? v.group->id : -1,
        static_cast<std::int64_t>(m_net.segment(v.seg).to), v.seg, d);
}

void Engine::check_separation(const Veh& v, double t) {
    // Nearest vehicle ahead along the remaining route, same walk as planning.
    double off = -v.pos;
    for (std::size_t k = v.route_idx; k < v.route.size(); ++k) {
        const auto& dq = on_seg(v.route[k]);
        int leader = -1;
        if (k == v.route_idx) {
            for (std::size_t i = 0; i < dq.size(); ++i)
                if (dq[i] == v.id) {
                    if (i > 0) leader = dq[i - 1];
                    break;
                }
        } else if (!dq.empty()) {
            leader = dq.back();
        }
        if (leader >= 0) {
            const Veh& lv = m_vehicles[static_cast<std::size_t>(leader)];
            double gap = off + lv.pos_at(t);
            bool both_stopped = v.vel < 1e-9 && lv.vel_at(t) < 1e-9;
            if (gap < -1e-6 ||
                (both_stopped && gap < m_sc.traffic.static_separation_m - 1e-6))
                ++m_result.safety.separation_violations;
            return;
        }
        off += seg_len(v.route[k]);
        if (off > m_sc.traffic.horizon_m) return;
    }
}

// ---------------------------------------------------------------------------
// joins

void Engine::request_join(NodeId node, int vid, double eta, SegmentId leg) {
    m_joins.at(node).requests[vid] = {eta, leg};
}

void Engine::grant_if_free(NodeId node, double t) {
    JoinCtl& ctl = m_joins.at(node);
    if (ctl.holder || ctl.requests.empty()) return;
    int winner = -1;
    double best_eta = 0.0;
    SegmentId best_leg = 0;
    for (const auto& [vid, req] : ctl.requests) {
        auto [eta, leg] = req;
        if (winner < 0 || eta < best_eta || (eta == best_eta && leg < best_leg)) {
            winner = vid;
            best_eta = eta;
            best_leg = leg;
        }
    }
    // The merge point stays reserved for one separation headway after each
    // crossing; a different vehicle has to wait out that window.
    double open_t = ctl.last_cross_t + m_sc.traffic.static_separation_m / m_sc.traffic.model_v_max;
    if (winner != ctl.last_cross_vehicle && t < open_t - 1e-12) {
        if (!ctl.regrant_pending) {
            ctl.regrant_pending = true;
            schedule({open_t, 0, static_cast<long long>(node), 0, Ev::K::Regrant, -1, 0, 0, 0});
        }
        return;
    }
    ctl.holder = winner;
    log(t, EventKind::JoinAllocated, winner, -1, static_cast<std::int64_t>(node));
}

// True when another vehicle sits between the grant holder and the join, so
// the holder is guaranteed to come to rest before crossing.
bool Engine::holder_cannot_reach(int vid, NodeId join) const {
    const Veh& h = m_vehicles[static_cast<std::size_t>(vid)];
    if (h.st != VState::Moving && h.st != VState::Blocked) return true;  // stale
    for (std::size_t k = h.route_idx; k < h.route.size(); ++k) {
        auto dit = m_on_segment.find(h.route[k]);
        if (k == h.route_idx) {
            if (dit != m_on_segment.end()) {
                const auto& dq = dit->second;
                for (std::size_t i = 0; i < dq.size(); ++i)
                    if (dq[i] == vid) {
                        if (i > 0) return true;
                        break;
                    }
            }
        } else if (dit != m_on_segment.end() && !dit->second.empty()) {
            return true;
        }
        if (m_net.segment(h.route[k]).to == join) return false;
    }
    return true;  // join no longer on its route
}

void Engine::cross_join(NodeId node, Veh& v, double t) {
    JoinCtl& ctl = m_joins.at(node);
    if (!ctl.holder || *ctl.holder != v.id) ++m_result.safety.join_conflicts;
    double headway = m_sc.traffic.static_separation_m / m_sc.traffic.model_v_max;
    if (ctl.last_cross_vehicle >= 0 && ctl.last_cross_vehicle != v.id &&
        t - ctl.last_cross_t < headway - 1e-9)
        ++m_result.safety.join_conflicts;
    ctl.last_cross_t = t;
    ctl.last_cross_vehicle = v.id;
    ctl.holder = v.id;  // held through the clearing distance, not just the point
    ctl.clearing = true;
    ctl.requests.erase(v.id);
}

void Engine::finish_clear(NodeId node, double t) {
    JoinCtl& ctl = m_joins.at(node);
    ctl.clearing = false;
    ctl.holder.reset();
    grant_if_free(node, t);
}

// Admission removes a vehicle from the track entirely, which also empties
// any merge zone it was still clearing.
void Engine::finish_clear_held_by(int vid, double t) {
    for (auto& [node, ctl] : m_joins)
        if (ctl.clearing && ctl.holder && *ctl.holder == vid) finish_clear(node, t);
}

// Called after each fresh plan: once the crossing vehicle has put one
// separation between itself and the node, hand the node to the next vehicle.
// Plans shorter than the remaining distance re-enter here on the next sector.
void Engine::release_after_clear(Veh& v, double t) {
    const double sep = m_sc.traffic.static_separation_m;
    for (auto& [node, ctl] : m_joins) {
        if (!ctl.clearing || !ctl.holder || *ctl.holder != v.id) continue;
        if (v.seg != ctl.clear_seg || v.pos >= sep - 1e-9) {
            finish_clear(node, t);
        } else if (double need = sep - v.pos; v.plan.length_m >= need - 1e-12) {
            schedule({t + v.plan.time_to_reach(need), 0, static_cast<long long>(node), 0,
                      Ev::K::JoinRelease, -1, 0, 0, 0});
        }
    }
}

void Engine::on_join_release(NodeId node, double t) {
    JoinCtl& ctl = m_joins.at(node);
    if (!ctl.clearing || !ctl.holder) return;
    const Veh& h = m_vehicles[static_cast<std::size_t>(*ctl.holder)];
    double past = h.seg == ctl.clear_seg ? h.pos_at(t) : m_sc.traffic.static_separation_m;
    if (h.st == VState::InStation || h.st == VState::Parked ||
        past >= m_sc.traffic.static_separation_m - 1e-6)
        finish_clear(node, t);
    // otherwise the holder stalled inside the zone; its next plan re-arms us
}

// ---------------------------------------------------------------------------
// houses

void Engine::berth_arrival(Veh& v, double t) {
    if (v.group) {
        log(t, EventKind::DebarkStarted, v.id, v.group->id,
            static_cast<std::int64_t>(v.house_node));
        v.busy = true;
        schedule({t + m_sc.traffic.debark_time_s, 0, v.id, 0, Ev::K::Dwell, v.id, kDebark, 0, 0});
    } else {
        become_idle(v, t);
    }
}

void Engine::become_idle(Veh& v, double t) {
    v.idle = true;
    v.idle_since = t;
    ++v.idle_stamp;
    v.departing = false;
    v.stub_done = false;
    log(t, EventKind::VehicleIdle, v.id, -1, static_cast<std::int64_t>(v.house_node));

    if (v.st == VState::InStation) {
        couple_if_possible(v.house_node, t);
        if (v.idle) {
            // A passenger vehicle may be stuck outside because every slot is
            // taken; now that someone idles here, expelling can make room.
            for (const Veh& w : m_vehicles)
                if (w.st == VState::Blocked && w.refusal_noted && w.dest == v.house_node) {
                    fire_expel(v.house_node, t);
                    break;
                }
        }
        if (v.idle && m_sc.evm.enable_withdrawing)
            schedule({t + m_sc.evm.withdraw_timeout_s, 0, v.id, 0, Ev::K::WithdrawCheck, v.id, 0,
                      0, v.idle_stamp});
    }
    if (v.idle) fire_rescue(t);
}

void Engine::couple_if_possible(NodeId station, double t) {
    StationHouse& house = m_houses.at(station);
    while (!house.queue().empty()) {
        int pick = -1;
        for (int cand : house.occupants()) {
            const Veh& w = m_vehicles[static_cast<std::size_t>(cand)];
            if (house.berthed(cand) && w.idle && !w.busy && !w.departing && !w.group) {
                pick = cand;
                break;
            }
        }
        if (pick < 0) return;
        couple(m_vehicles[static_cast<std::size_t>(pick)], station, t);
    }
}

void Engine::couple(Veh& v, NodeId station, double t) {
    StationHouse& house = m_houses.at(station);
    PassengerGroup g = house.queue().front();
    house.queue().pop_front();

    char qd[24];
    std::snprintf(qd, sizeof qd, "len=%zu", house.queue().size());
    log(t, EventKind::QueueSampled, -1, -1, static_cast<std::int64_t>(station), -1, qd);

    char wd[48];
    std::snprintf(wd, sizeof wd, "wait_s=%s", fmt_num(t - g.spawn_time_s).c_str());
    log(t, EventKind::GroupCoupled, v.id, g.id, static_cast<std::int64_t>(station), -1, wd);
    log(t, EventKind::BoardingStarted, v.id, g.id, static_cast<std::int64_t>(station));

    v.group = g;
    v.idle = false;
    ++v.idle_stamp;
    v.busy = true;
    schedule({t + m_sc.traffic.board_time_s, 0, v.id, 0, Ev::K::Dwell, v.id, kBoard, 0, 0});
}

void Engine::maybe_advance_entry(NodeId station, double t) {
    StationHouse& house = m_houses.at(station);
    while (house.free_berths() > 0) {
        auto vid = house.advance_entry();
        if (!vid) return;
        Veh& v = m_vehicles[static_cast<std::size_t>(*vid)];
        v.busy = true;
        schedule({t + kBufferAdvanceS, 0, v.id, 0, Ev::K::Dwell, v.id, kAdvanceEntry, 0, 0});
    }
}

bool Engine::try_depart(Veh& v, double t) {
    if (!v.departing || v.busy) return false;

    if (v.st == VState::Parked) return inject(v, t);

    StationHouse& house = m_houses.at(v.house_node);
    if (house.in_entry_buffer(v.id)) return false;  // must reach a berth first

    if (house.berthed(v.id)) {
        if (house.spec().layout == StationLayout::StubBerths && !v.stub_done) {
            v.busy = true;
            schedule({t + kStubExitS, 0, v.id, 0, Ev::K::Dwell, v.id, kStubTurn, 0, 0});
            return true;
        }
        auto eligible = house.departure_eligible();
        if (std::find(eligible.begin(), eligible.end(), v.id) == eligible.end()) return false;
        if (house.spec().exit_buffer > 0) {
            if (house.free_exit_slots() <= 0) return false;
            house.move_to_exit(v.id);
            maybe_advance_entry(v.house_node, t);
            v.busy = true;
            schedule({t + kBufferAdvanceS, 0, v.id, 0, Ev::K::Dwell, v.id, kAdvanceExit, 0, 0});
            return true;
        }
        return inject(v, t);
    }

    if (house.in_exit_buffer(v.id)) {
        if (house.exit_buffer_head() != std::optional<int>(v.id)) return false;
        return inject(v, t);
    }
    return false;
}

// A departure materialises a standing vehicle at the station node. Every
// mover already heading there planned its current sector without that
// obstacle, so injection must wait until each of them could still come to
// rest behind it: at the mover's next replan point its speed has to fit the
// service braking envelope with the static separation intact, and a nonzero
// replan speed additionally needs at least one full sector of slack so the
// replan itself stays feasible. Walks the feeding legs out to the horizon;
// only the nearest vehicle per leg matters, anything behind it follows it.
bool Engine::approach_clear(NodeId node, double acc, int depth, double t) {
    if (depth > 8 || acc > m_sc.traffic.horizon_m) return true;
    const double sep = m_sc.traffic.static_separation_m;
    for (SegmentId sid : m_net.in_segments(node)) {
        const Segment& s = m_net.segment(sid);
        const auto& dq = on_seg(sid);
        if (dq.empty()) {
            if (!approach_clear(s.from, acc + s.length_m, depth + 1, t)) return false;
            continue;
        }
        const Veh& f = m_vehicles[static_cast<std::size_t>(dq.front())];
        double gap = acc + (s.length_m - f.pos_at(t));
        if (f.st != VState::Moving) {
            if (gap < sep - 1e-9) return false;
            continue;
        }
        double rem = f.plan.length_m - f.plan.position_at(t - f.plan_t0);
        double ve = f.plan.exit_v;
        double margin = gap - rem - sep;
        if (margin < 0.0) return false;
        if (ve * ve > 2.0 * f.traits.d_max * margin + 1e-9) return false;
        if (ve > 1e-9 && margin < m_max_sector) return false;
    }
    return true;
}

bool Engine::inject(Veh& v, double t) {
    SegmentId out = m_net.out_segments(v.house_node).front();
    const auto& dq = on_seg(out);
    if (!dq.empty()) {
        const Veh& last = m_vehicles[static_cast<std::size_t>(dq.back())];
        if (last.pos_at(t) < m_sc.traffic.static_separation_m) return false;
    }
    if (!approach_clear(v.house_node, 0.0, 0, t)) return false;

    bool from_berth = false;
    if (v.st == VState::Parked) {
        m_parks.at(v.house_node).remove(v.id);
    } else {
        StationHouse& house = m_houses.at(v.house_node);
        from_berth = house.berthed(v.id);
        house.remove(v.id);
        if (from_berth) maybe_advance_entry(v.house_node, t);
    }

    v.st = VState::Blocked;
    v.departing = false;
    v.stub_done = false;
    v.seg = v.route[0];
    v.route_idx = 0;
    v.boundary_idx = 0;
    v.pos = 0.0;
    v.vel = 0.0;
    v.trip_start = t;
    v.trip_dist = 0.0;
    on_seg(v.seg).push_back(v.id);

    char d[48];
    std::snprintf(d, sizeof d, "empty=%d;cause=%s", v.trip_empty ? 1 : 0, v.trip_cause.c_str());
    log(t, EventKind::TripStarted, v.id, v.group ? v.group->id : -1,
        static_cast<std::int64_t>(v.house_node), v.seg, d);

    resume(v, t);
    return true;
}

// ---------------------------------------------------------------------------
// event handlers

void Engine::on_dwell(const Ev& ev, double t) {
    Veh& v = m_vehicles[static_cast<std::size_t>(ev.vehicle)];
    v.busy = false;
    switch (ev.dwell) {
        case kDebark: {
            log(t, EventKind::DebarkDone, v.id, v.group->id,
                static_cast<std::int64_t>(v.house_node));
            ++m_result.totals.groups_arrived;
            v.group.reset();
            become_idle(v, t);
            break;
        }
        case kBoard: {
            log(t, EventKind::BoardingDone, v.id, v.group->id,
                static_cast<std::int64_t>(v.house_node));
            dispatch_trip(v, v.group->destination, "pax", false, t);
            break;
        }
        case kAdvanceEntry:
            berth_arrival(v, t);
            break;
        case kAdvanceExit:
            try_depart(v, t);
            break;
        case kStubTurn:
            v.stub_done = true;
            try_depart(v, t);
            break;
    }
}

void Engine::on_spawn(std::size_t idx, double t) {
    const PassengerGroup& g = m_demand[idx].group;
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

void Engine::on_withdraw_check(int vid, long long stamp, double t) {
    Veh& v = m_vehicles[static_cast<std::size_t>(vid)];
    if (!v.idle || v.idle_stamp != stamp || v.st != VState::InStation) return;
    auto order = evm::on_idle_tick(make_view(), vid, t, m_sc.evm);
    if (order) {
        execute_order(*order, t);
    } else {
        schedule({t + kWithdrawRetryS, 0, v.id, 0, Ev::K::WithdrawCheck, v.id, 0, 0, stamp});
    }
}

void Engine::on_balance_tick(double t) {
    auto orders = evm::balancing_tick(make_view(), active_rates(t), m_sc.evm);
    for (const auto& o : orders) execute_order(o, t);
    schedule({t + m_sc.evm.balance_check_interval_s, 0, -2, 0, Ev::K::BalanceTick, -1, 0, 0, 0});
}

std::map<NodeId, double> Engine::active_rates(double t) const {
    std::map<NodeId, double> rates;
    for (const auto& p : m_sc.demand.periods)
        if (p.start_s <= t && t < p.end_s)
            for (const auto& [st, r] : p.station_rates)
                rates[st] = r * m_sc.demand.demand_scale;
    return rates;
}

// ---------------------------------------------------------------------------
// EVM

evm::FleetView Engine::make_view() const {
    evm::FleetView view;
    view.distances = &m_static_dist;
    view.vehicles.reserve(m_vehicles.size());
    for (const Veh& v : m_vehicles) {
        evm::VehicleView vv;
        vv.id = v.id;
        vv.occupancy = v.group ? v.group->size : 0;
        vv.idle_since_s = v.idle_since;
        if (v.idle && !v.departing && v.st == VState::Parked) {
            vv.place = evm::VehiclePlace::AtCapacitor;
            vv.at_node = v.house_node;
        } else if (v.idle && !v.departing && v.st == VState::InStation) {
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

void Engine::execute_order(const evm::Order& o, double t) {
    Veh& v = m_vehicles[static_cast<std::size_t>(o.vehicle)];
    if (!v.idle || v.departing || v.group) return;  // stale snapshot, drop it

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
    ++v.idle_stamp;
    dispatch_trip(v, o.target, evm::order_kind_name(o.kind), true, t);
}

void Engine::dispatch_trip(Veh& v, NodeId target, const char* cause, bool empty, double t) {
    CongestionSnapshot snap;
    if (m_sc.routing.weights.gamma_congestion > 0.0) snap = congestion();
    auto r = shortest_route(m_net, v.house_node, target, m_sc.routing.weights, snap);
    if (!r || r->segments.empty()) {
        // Strong connectivity makes this unreachable; fail shut if it isn't.
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
    v.route_assigned_t = t;
    v.dest = target;
    v.trip_cause = cause;
    v.trip_empty = empty;
    v.departing = true;
    v.idle = false;
    try_depart(v, t);
}

void Engine::fire_calling(NodeId station, double t) {
    if (!m_sc.evm.enable_calling) return;
    auto order = evm::on_group_arrival(make_view(), station, m_sc.evm);
    if (order) execute_order(*order, t);
}

void Engine::fire_rescue(double t) {
    if (!m_sc.evm.enable_calling) return;
    auto order = evm::on_vehicle_idle(make_view(), t, m_sc.evm);
    if (order) execute_order(*order, t);
}

void Engine::fire_expel(NodeId station, double t) {
    if (!m_sc.evm.enable_expelling) return;
    auto order = evm::on_station_full(make_view(), station, m_sc.evm);
    if (order) execute_order(*order, t);
}

CongestionSnapshot Engine::congestion() const {
    CongestionSnapshot snap;
    for (const auto& [sid, dq] : m_on_segment)
        if (!dq.empty())
            snap.occupancy[sid] = segment_occupancy(m_net.segment(sid),
                                                    static_cast<int>(dq.size()),
                                                    m_sc.traffic.static_separation_m);
    return snap;
}

}  // namespace

RunResult run_event_driven(const Scenario& sc, const std::vector<DemandEvent>& demand) {
    Engine eng(sc, demand);
    return eng.run();
}

RunResult run_event_driven(const Scenario& sc) {
    auto demand = generate_demand(sc.demand.periods, sc.demand.group_size, sc.run.duration_s,
                                  sc.run.seed, sc.demand.demand_scale);
    return run_event_driven(sc, demand);
}

}  // namespace prt
