#include "prtsim/scenario.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace prt {

using nlohmann::json;

PaperDefaults paper_defaults() {
    PaperDefaults d;
    d.traits.capacity = 4;
    d.traits.v_max = 14.0;
    d.traits.a_max = 2.0;
    d.traits.d_max = 2.0;
    d.traits.d_emergency = 7.0;
    d.traffic.horizon_m = 200.0;
    d.traffic.static_separation_m = 4.0;
    d.traffic.board_time_s = 10.0;
    d.traffic.debark_time_s = 10.0;
    d.traffic.model_v_max = 14.0;
    d.station.layout = StationLayout::InLine;
    d.station.berths = 4;
    d.station.entry_buffer = 1;
    d.station.exit_buffer = 1;
    d.ca.cell_length_m = 4.0;
    d.ca.separation_m = 2.0;
    d.ca.p1 = 0.0;
    d.ca.p2 = 0.0;
    d.ca.breakdown_steps = 10;
    d.evm.enable_calling = true;
    d.evm.enable_expelling = true;
    d.evm.enable_withdrawing = true;
    d.evm.enable_balancing = false;
    d.evm.withdraw_timeout_s = 120.0;
    d.evm.expel_lambda = 0.5;
    d.routing.alpha_length = 0.0;
    d.routing.beta_time = 1.0;
    d.routing.gamma_congestion = 0.0;
    d.sector_length_m = 10.0;
    d.warmup_s = 600.0;
    d.group_size.weights = {{4, 1.0}};
    return d;
}

namespace {

// Shared geometry of the fixture rings. Every station or capacitor sits on a
// siding: fork -> approach -> node -> exit -> join, with a bypass between the
// fork and the join for through traffic.
constexpr double kApproachLen = 50.0;
constexpr double kExitLen = 50.0;
constexpr double kBypassLen = 60.0;
constexpr double kRingSpeed = 14.0;
constexpr int kParkingPlaces = 12;

struct RingBuilder {
    std::vector<Node> nodes;
    std::vector<Segment> segments;
    SegmentId next_seg = 0;

    NodeId siding_node(int k) const { return static_cast<NodeId>(100 + k); }
    NodeId fork(int k) const { return static_cast<NodeId>(200 + k); }
    NodeId join(int k) const { return static_cast<NodeId>(300 + k); }

    void add_segment(NodeId from, NodeId to, double length) {
        segments.push_back({next_seg++, from, to, length, kRingSpeed, 0});
    }

    void add_siding(int k, bool capacitor, const StationSpec& station) {
        Node n;
        n.id = siding_node(k);
        if (capacitor) {
            n.type = NodeType::Capacitor;
            n.parking_places = kParkingPlaces;
        } else {
            n.type = NodeType::Station;
            n.station = station;
        }
        nodes.push_back(n);
        nodes.push_back({fork(k), NodeType::Fork, {}, 0, {}, {}});
        nodes.push_back({join(k), NodeType::Join, {}, 0, {}, {}});
        add_segment(fork(k), n.id, kApproachLen);
        add_segment(n.id, join(k), kExitLen);
        add_segment(fork(k), join(k), kBypassLen);
    }

    /// Circle coordinates, purely cosmetic for dot export.
    void place_on_circle(double radius) {
        std::size_t count = nodes.size();
        for (std::size_t i = 0; i < count; ++i) {
            double angle = 2.0 * 3.14159265358979 * static_cast<double>(i) / static_cast<double>(count);
            nodes[i].x = radius * std::cos(angle);
            nodes[i].y = radius * std::sin(angle);
        }
    }
};

}  // namespace

Network bundled_city() {
    // 16 sidings: capacitors at ring slots 0 and 8, stations elsewhere.
    // One chord (fork 400 -> join 401) shortcuts half the ring so that some
    // trips have a genuine route choice.
    PaperDefaults d = paper_defaults();
    RingBuilder b;
    for (int k = 0; k < 16; ++k) b.add_siding(k, k == 0 || k == 8, d.station);

    const NodeId chord_fork = 400, chord_join = 401;
    b.nodes.push_back({chord_fork, NodeType::Fork, {}, 0, {}, {}});
    b.nodes.push_back({chord_join, NodeType::Join, {}, 0, {}, {}});

    for (int k = 0; k < 16; ++k) {
        NodeId from = b.join(k);
        NodeId to = b.fork((k + 1) % 16);
        if (k == 3) {  // chord diverges here
            b.add_segment(from, chord_fork, 91.0);
            b.add_segment(chord_fork, to, 91.0);
        } else if (k == 11) {  // and merges back here
            b.add_segment(from, chord_join, 91.0);
            b.add_segment(chord_join, to, 91.0);
        } else {
            b.add_segment(from, to, 182.0);
        }
    }
    b.add_segment(chord_fork, chord_join, 592.5);
    b.place_on_circle(1000.0);

    BuildResult r = build_network(std::move(b.nodes), std::move(b.segments));
    if (!r.ok()) throw std::logic_error("bundled city network failed validation");
    return std::move(*r.network);
}

Network bundled_seashore() {
    // 12 sidings along a single elongated loop: capacitors at slots 0 and 6,
    // stations elsewhere. One plain junction node sits in the first ring
    // link, exercising the pass-through node type.
    PaperDefaults d = paper_defaults();
    RingBuilder b;
    for (int k = 0; k < 12; ++k) b.add_siding(k, k == 0 || k == 6, d.station);

    const NodeId junction = 450;
    b.nodes.push_back({junction, NodeType::Junction, {}, 0, {}, {}});

    for (int k = 0; k < 12; ++k) {
        NodeId from = b.join(k);
        NodeId to = b.fork((k + 1) % 12);
        if (k == 0) {
            b.add_segment(from, junction, 150.0);
            b.add_segment(junction, to, 155.0);
        } else if (k == 11) {
            b.add_segment(from, to, 309.0);
        } else {
            b.add_segment(from, to, 305.0);
        }
    }
    b.place_on_circle(800.0);

    BuildResult r = build_network(std::move(b.nodes), std::move(b.segments));
    if (!r.ok()) throw std::logic_error("bundled seashore network failed validation");
    return std::move(*r.network);
}

Scenario bundled_scenario(const std::string& name) {
    PaperDefaults d = paper_defaults();
    Scenario s;
    double rate = 0.0;
    if (name == "city") {
        s.network = bundled_city();
        s.description = "city ring fixture, 14 stations, uniform demand";
        rate = 20.0;
    } else if (name == "seashore") {
        s.network = bundled_seashore();
        s.description = "seashore loop fixture, 10 stations, uniform demand";
        rate = 24.0;
    } else {
        throw ScenarioError("unknown bundled scenario '" + name + "'");
    }
    // Of the two fleet sizes studied, the smaller one is the bundled default;
    // the larger fleet pushes the half-saturation operating point deep enough
    // into queueing that the two engines' discretization gap (16 vs 14 m/s
    // cruise) stops cancelling out of aggregate waits.
    s.fleet.count = d.fleet_small;
    s.fleet.base = d.traits;
    s.traffic = d.traffic;
    s.evm = d.evm;
    s.routing.weights = d.routing;
    s.engine.sector_length_m = d.sector_length_m;
    s.engine.ca = d.ca;
    s.run.duration_s = 4200.0;
    s.run.warmup_s = d.warmup_s;
    s.run.seed = 0;
    s.demand.group_size = d.group_size;
    s.demand.demand_scale = 1.0;

    DemandPeriod period;
    period.start_s = 0.0;
    period.end_s = s.run.duration_s;
    auto stations = s.network.stations();
    for (NodeId st : stations) {
        period.station_rates[st] = rate;
        for (NodeId other : stations)
            if (other != st)
                period.od[st][other] = 1.0 / static_cast<double>(stations.size() - 1);
    }
    s.demand.periods.push_back(std::move(period));
    return s;
}

void set_run_duration(Scenario& s, double duration_s) {
    for (DemandPeriod& p : s.demand.periods)
        if (p.end_s >= s.run.duration_s) p.end_s = duration_s;
    s.run.duration_s = duration_s;
}

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed, const std::string& where,
                bool lenient, std::vector<std::string>& issues, std::vector<std::string>& warnings) {
    if (!obj.is_object()) return;
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) {
            std::string msg = "unknown key '" + key + "' in " + where;
            if (lenient)
                warnings.push_back(msg);
            else
                issues.push_back(msg);
        }
    }
}

double get_num(const json& obj, const char* key, double fallback) {
    auto it = obj.find(key);
    return it == obj.end() ? fallback : it->get<double>();
}

bool get_bool(const json& obj, const char* key, bool fallback) {
    auto it = obj.find(key);
    return it == obj.end() ? fallback : it->get<bool>();
}

VehicleTraits parse_traits(const json& j, VehicleTraits base, const std::string& where,
                           bool lenient, std::vector<std::string>& issues,
                           std::vector<std::string>& warnings) {
    check_keys(j, {"capacity", "v_max_mps", "a_max_mps2", "d_max_mps2", "d_emergency_mps2",
                   "ca_priority", "id"},
               where, lenient, issues, warnings);
    VehicleTraits t = base;
    if (j.contains("capacity")) t.capacity = j["capacity"].get<int>();
    t.v_max = get_num(j, "v_max_mps", t.v_max);
    t.a_max = get_num(j, "a_max_mps2", t.a_max);
    t.d_max = get_num(j, "d_max_mps2", t.d_max);
    t.d_emergency = get_num(j, "d_emergency_mps2", t.d_emergency);
    if (j.contains("ca_priority")) t.ca_priority = j["ca_priority"].get<int>();
    return t;
}

json traits_to_json(const VehicleTraits& t) {
    return json{{"capacity", t.capacity},
                {"v_max_mps", t.v_max},
                {"a_max_mps2", t.a_max},
                {"d_max_mps2", t.d_max},
                {"d_emergency_mps2", t.d_emergency},
                {"ca_priority", t.ca_priority}};
}

Network parse_network(const json& j, const std::string& base_dir, bool lenient,
                      std::vector<std::string>& issues, std::vector<std::string>& warnings) {
    if (j.contains("bundled")) {
        std::string name = j["bundled"].get<std::string>();
        if (name == "city") return bundled_city();
        if (name == "seashore") return bundled_seashore();
        throw ScenarioError("unknown bundled network '" + name + "'");
    }
    if (j.contains("file")) {
        std::filesystem::path p = j["file"].get<std::string>();
        if (p.is_relative()) p = std::filesystem::path(base_dir) / p;
        std::ifstream in(p);
        if (!in) throw ScenarioError("cannot open network file " + p.string());
        json nested = json::parse(in);
        return parse_network(nested, base_dir, lenient, issues, warnings);
    }
    check_keys(j, {"nodes", "segments"}, "network", lenient, issues, warnings);
    if (!j.contains("nodes") || !j.contains("segments"))
        throw ScenarioError("network needs either 'bundled', 'file', or 'nodes' + 'segments'");

    std::vector<Node> nodes;
    for (const auto& nj : j["nodes"]) {
        check_keys(nj, {"id", "type", "layout", "berths", "entry_buffer", "exit_buffer",
                        "parking_places", "x", "y"},
                   "network.nodes", lenient, issues, warnings);
        Node n;
        n.id = nj.at("id").get<NodeId>();
        std::string type = nj.at("type").get<std::string>();
        if (type == "station") n.type = NodeType::Station;
        else if (type == "capacitor") n.type = NodeType::Capacitor;
        else if (type == "fork") n.type = NodeType::Fork;
        else if (type == "join") n.type = NodeType::Join;
        else if (type == "junction") n.type = NodeType::Junction;
        else throw ScenarioError("unknown node type '" + type + "'");
        if (n.type == NodeType::Station) {
            std::string layout = nj.value("layout", "in_line");
            if (layout == "in_line") n.station.layout = StationLayout::InLine;
            else if (layout == "stub") n.station.layout = StationLayout::StubBerths;
            else throw ScenarioError("unknown station layout '" + layout + "'");
            n.station.berths = nj.value("berths", 4);
            n.station.entry_buffer = nj.value("entry_buffer", 0);
            n.station.exit_buffer = nj.value("exit_buffer", 0);
        }
        if (n.type == NodeType::Capacitor) n.parking_places = nj.value("parking_places", 0);
        if (nj.contains("x")) n.x = nj["x"].get<double>();
        if (nj.contains("y")) n.y = nj["y"].get<double>();
        nodes.push_back(n);
    }
    std::vector<Segment> segments;
    for (const auto& sj : j["segments"]) {
        check_keys(sj, {"id", "from", "to", "length_m", "v_max_mps", "priority"},
                   "network.segments", lenient, issues, warnings);
        Segment s;
        s.id = sj.at("id").get<SegmentId>();
        s.from = sj.at("from").get<NodeId>();
        s.to = sj.at("to").get<NodeId>();
        s.length_m = sj.at("length_m").get<double>();
        s.max_velocity_mps = sj.at("v_max_mps").get<double>();
        s.priority = sj.value("priority", 0);
        segments.push_back(s);
    }
    BuildResult r = build_network(std::move(nodes), std::move(segments));
    if (!r.ok()) {
        std::vector<std::string> msgs;
        for (const auto& v : r.violations) msgs.push_back(v.message);
        throw ScenarioError("network validation failed", std::move(msgs));
    }
    return std::move(*r.network);
}

json network_to_json(const Network& net) {
    json nodes = json::array();
    for (const auto& n : net.nodes()) {
        json nj{{"id", n.id}, {"type", node_type_name(n.type)}};
        if (n.type == NodeType::Station) {
            nj["layout"] = n.station.layout == StationLayout::InLine ? "in_line" : "stub";
            nj["berths"] = n.station.berths;
            nj["entry_buffer"] = n.station.entry_buffer;
            nj["exit_buffer"] = n.station.exit_buffer;
        }
        if (n.type == NodeType::Capacitor) nj["parking_places"] = n.parking_places;
        if (n.x) nj["x"] = *n.x;
        if (n.y) nj["y"] = *n.y;
        nodes.push_back(std::move(nj));
    }
    json segments = json::array();
    for (const auto& s : net.segments()) {
        segments.push_back(json{{"id", s.id},
                                {"from", s.from},
                                {"to", s.to},
                                {"length_m", s.length_m},
                                {"v_max_mps", s.max_velocity_mps},
                                {"priority", s.priority}});
    }
    return json{{"nodes", std::move(nodes)}, {"segments", std::move(segments)}};
}

DemandPeriod parse_period(const json& j, const Network& net, bool lenient,
                          std::vector<std::string>& issues, std::vector<std::string>& warnings) {
    check_keys(j, {"start_s", "end_s", "station_rates", "od"}, "demand.periods", lenient, issues,
               warnings);
    DemandPeriod p;
    p.start_s = j.at("start_s").get<double>();
    p.end_s = j.at("end_s").get<double>();

    auto stations = net.stations();
    const json& rates = j.at("station_rates");
    if (rates.contains("uniform")) {
        check_keys(rates, {"uniform"}, "station_rates", lenient, issues, warnings);
        double r = rates["uniform"].get<double>();
        for (NodeId st : stations) p.station_rates[st] = r;
    } else {
        for (const auto& [key, value] : rates.items())
            p.station_rates[static_cast<NodeId>(std::stoul(key))] = value.get<double>();
    }

    const json& od = j.at("od");
    if (od.is_string() && od.get<std::string>() == "uniform") {
        for (NodeId from : stations)
            for (NodeId to : stations)
                if (from != to)
                    p.od[from][to] = 1.0 / static_cast<double>(stations.size() - 1);
    } else if (od.is_object()) {
        for (const auto& [from_key, row] : od.items()) {
            NodeId from = static_cast<NodeId>(std::stoul(from_key));
            for (const auto& [to_key, prob] : row.items())
                p.od[from][static_cast<NodeId>(std::stoul(to_key))] = prob.get<double>();
        }
    } else {
        throw ScenarioError("od must be \"uniform\" or an object of rows");
    }
    return p;
}

}  // namespace

std::vector<std::string> validate_scenario(const Scenario& s) {
    std::vector<std::string> issues;
    if (s.fleet.count < 1) issues.push_back("fleet count must be at least 1");

    int places = 0;
    for (NodeId c : s.network.capacitors()) places += s.network.node(c).parking_places;
    if (s.fleet.count > places)
        issues.push_back("fleet of " + std::to_string(s.fleet.count) + " exceeds " +
                         std::to_string(places) + " capacitor parking places");

    int min_capacity = s.fleet.base.capacity;
    for (const auto& [id, t] : s.fleet.overrides) {
        if (id < 0 || id >= s.fleet.count)
            issues.push_back("trait override for vehicle " + std::to_string(id) +
                             " outside fleet range");
        min_capacity = std::min(min_capacity, t.capacity);
    }
    for (const auto& [size, w] : s.demand.group_size.weights) {
        if (w < 0.0) issues.push_back("group size weight below zero");
        if (w > 0.0 && size > min_capacity)
            issues.push_back("group size " + std::to_string(size) + " exceeds vehicle capacity " +
                             std::to_string(min_capacity));
    }

    if (!(s.run.duration_s > 0.0)) issues.push_back("run duration must be positive");
    if (s.run.warmup_s < 0.0 || s.run.warmup_s >= s.run.duration_s)
        issues.push_back("warmup must lie inside the run duration");
    if (s.demand.demand_scale < 0.0) issues.push_back("demand_scale must be non-negative");

    std::set<NodeId> station_set;
    for (NodeId st : s.network.stations()) station_set.insert(st);
    for (std::size_t i = 0; i < s.demand.periods.size(); ++i) {
        const DemandPeriod& p = s.demand.periods[i];
        std::string where = "demand period " + std::to_string(i);
        if (!(p.end_s > p.start_s)) issues.push_back(where + " has end <= start");
        for (const auto& [st, rate] : p.station_rates) {
            if (!station_set.count(st))
                issues.push_back(where + " rates mention non-station node " + std::to_string(st));
            if (rate < 0.0) issues.push_back(where + " has a negative rate");
            if (rate > 0.0) {
                auto row = p.od.find(st);
                if (row == p.od.end()) {
                    issues.push_back(where + " lacks an od row for station " + std::to_string(st));
                    continue;
                }
                double sum = 0.0;
                for (const auto& [to, prob] : row->second) {
                    if (!station_set.count(to))
                        issues.push_back(where + " od row targets non-station node " +
                                         std::to_string(to));
                    if (to == st && prob != 0.0)
                        issues.push_back(where + " od diagonal must be zero");
                    if (prob < 0.0) issues.push_back(where + " has a negative od entry");
                    sum += prob;
                }
                if (std::abs(sum - 1.0) > 1e-6)
                    issues.push_back(where + " od row for station " + std::to_string(st) +
                                     " sums to " + std::to_string(sum));
            }
        }
        for (std::size_t k = i + 1; k < s.demand.periods.size(); ++k) {
            const DemandPeriod& q = s.demand.periods[k];
            if (p.start_s < q.end_s && q.start_s < p.end_s)
                issues.push_back("demand periods " + std::to_string(i) + " and " +
                                 std::to_string(k) + " overlap");
        }
    }

    if (!(s.engine.sector_length_m > 0.0)) issues.push_back("sector length must be positive");
    if (!(s.engine.ca.cell_length_m > 0.0)) issues.push_back("cell length must be positive");
    if (s.engine.ca.p1 < 0.0 || s.engine.ca.p1 > 1.0) issues.push_back("p1 must be in [0,1]");
    if (s.engine.ca.p2 < 0.0 || s.engine.ca.p2 > 1.0) issues.push_back("p2 must be in [0,1]");
    if (s.evm.expel_lambda < 0.0 || s.evm.expel_lambda > 1.0)
        issues.push_back("expel_lambda must be in [0,1]");
    return issues;
}

static Scenario scenario_from_json_impl(const json& j, bool lenient, const std::string& base_dir);

Scenario scenario_from_json(const json& j, bool lenient, const std::string& base_dir) {
    try {
        return scenario_from_json_impl(j, lenient, base_dir);
    } catch (const json::exception& e) {
        throw ScenarioError(std::string("scenario field error: ") + e.what());
    }
}

static Scenario scenario_from_json_impl(const json& j, bool lenient, const std::string& base_dir) {
    std::vector<std::string> issues;
    Scenario s;
    check_keys(j, {"description", "network", "fleet", "traffic", "demand", "evm", "routing",
                   "engine", "run"},
               "scenario", lenient, issues, s.warnings);
    if (!j.contains("network")) throw ScenarioError("scenario lacks a network section");
    if (!j.contains("run")) throw ScenarioError("scenario lacks a run section");

    s.description = j.value("description", "");
    s.network = parse_network(j["network"], base_dir, lenient, issues, s.warnings);

    if (j.contains("fleet")) {
        const json& f = j["fleet"];
        check_keys(f, {"count", "traits", "overrides"}, "fleet", lenient, issues, s.warnings);
        s.fleet.count = f.value("count", 0);
        if (f.contains("traits"))
            s.fleet.base = parse_traits(f["traits"], VehicleTraits{}, "fleet.traits", lenient,
                                        issues, s.warnings);
        if (f.contains("overrides")) {
            for (const auto& oj : f["overrides"]) {
                int id = oj.at("id").get<int>();
                s.fleet.overrides[id] = parse_traits(oj, s.fleet.base, "fleet.overrides", lenient,
                                                     issues, s.warnings);
            }
        }
    }

    if (j.contains("traffic")) {
        const json& t = j["traffic"];
        check_keys(t, {"horizon_m", "static_separation_m", "board_time_s", "debark_time_s",
                       "model_v_max_mps", "strict_separation"},
                   "traffic", lenient, issues, s.warnings);
        s.traffic.horizon_m = get_num(t, "horizon_m", s.traffic.horizon_m);
        s.traffic.static_separation_m = get_num(t, "static_separation_m", s.traffic.static_separation_m);
        s.traffic.board_time_s = get_num(t, "board_time_s", s.traffic.board_time_s);
        s.traffic.debark_time_s = get_num(t, "debark_time_s", s.traffic.debark_time_s);
        s.traffic.model_v_max = get_num(t, "model_v_max_mps", s.traffic.model_v_max);
        s.traffic.strict_separation = get_bool(t, "strict_separation", s.traffic.strict_separation);
    }

    if (j.contains("demand")) {
        const json& d = j["demand"];
        check_keys(d, {"demand_scale", "group_size", "periods"}, "demand", lenient, issues,
                   s.warnings);
        s.demand.demand_scale = get_num(d, "demand_scale", 1.0);
        if (d.contains("group_size")) {
            for (const auto& [size, w] : d["group_size"].items())
                s.demand.group_size.weights[std::stoi(size)] = w.get<double>();
        } else {
            s.demand.group_size = paper_defaults().group_size;
        }
        if (d.contains("periods"))
            for (const auto& pj : d["periods"])
                s.demand.periods.push_back(parse_period(pj, s.network, lenient, issues, s.warnings));
    } else {
        s.demand.group_size = paper_defaults().group_size;
    }

    if (j.contains("evm")) {
        const json& e = j["evm"];
        check_keys(e, {"calling", "expelling", "withdrawing", "balancing", "withdraw_timeout_s",
                       "expel_lambda", "balance_surplus_threshold", "balance_check_interval_s"},
                   "evm", lenient, issues, s.warnings);
        s.evm.enable_calling = get_bool(e, "calling", s.evm.enable_calling);
        s.evm.enable_expelling = get_bool(e, "expelling", s.evm.enable_expelling);
        s.evm.enable_withdrawing = get_bool(e, "withdrawing", s.evm.enable_withdrawing);
        s.evm.enable_balancing = get_bool(e, "balancing", s.evm.enable_balancing);
        s.evm.withdraw_timeout_s = get_num(e, "withdraw_timeout_s", s.evm.withdraw_timeout_s);
        s.evm.expel_lambda = get_num(e, "expel_lambda", s.evm.expel_lambda);
        if (e.contains("balance_surplus_threshold"))
            s.evm.balance_surplus_threshold = e["balance_surplus_threshold"].get<int>();
        s.evm.balance_check_interval_s =
            get_num(e, "balance_check_interval_s", s.evm.balance_check_interval_s);
    }

    if (j.contains("routing")) {
        const json& r = j["routing"];
        check_keys(r, {"alpha_length", "beta_time", "gamma_congestion", "reroute_interval_s"},
                   "routing", lenient, issues, s.warnings);
        s.routing.weights.alpha_length = get_num(r, "alpha_length", s.routing.weights.alpha_length);
        s.routing.weights.beta_time = get_num(r, "beta_time", s.routing.weights.beta_time);
        s.routing.weights.gamma_congestion =
            get_num(r, "gamma_congestion", s.routing.weights.gamma_congestion);
        s.routing.reroute_interval_s = get_num(r, "reroute_interval_s", s.routing.reroute_interval_s);
    }

    if (j.contains("engine")) {
        const json& e = j["engine"];
        check_keys(e, {"sector_length_m", "ca"}, "engine", lenient, issues, s.warnings);
        s.engine.sector_length_m = get_num(e, "sector_length_m", s.engine.sector_length_m);
        if (e.contains("ca")) {
            const json& c = e["ca"];
            check_keys(c, {"cell_length_m", "separation_m", "p1", "p2", "breakdown_steps",
                           "weights"},
                       "engine.ca", lenient, issues, s.warnings);
            s.engine.ca.cell_length_m = get_num(c, "cell_length_m", s.engine.ca.cell_length_m);
            s.engine.ca.separation_m = get_num(c, "separation_m", s.engine.ca.separation_m);
            s.engine.ca.p1 = get_num(c, "p1", s.engine.ca.p1);
            s.engine.ca.p2 = get_num(c, "p2", s.engine.ca.p2);
            if (c.contains("breakdown_steps"))
                s.engine.ca.breakdown_steps = c["breakdown_steps"].get<int>();
            if (c.contains("weights")) {
                const json& w = c["weights"];
                check_keys(w, {"w_t", "w_d", "w_p", "w_pas"}, "engine.ca.weights", lenient, issues,
                           s.warnings);
                s.engine.ca.weights.w_t = get_num(w, "w_t", s.engine.ca.weights.w_t);
                s.engine.ca.weights.w_d = get_num(w, "w_d", s.engine.ca.weights.w_d);
                s.engine.ca.weights.w_p = get_num(w, "w_p", s.engine.ca.weights.w_p);
                s.engine.ca.weights.w_pas = get_num(w, "w_pas", s.engine.ca.weights.w_pas);
            }
        }
    }

    const json& run = j["run"];
    check_keys(run, {"duration_s", "warmup_s", "seed"}, "run", lenient, issues, s.warnings);
    s.run.duration_s = run.at("duration_s").get<double>();
    s.run.warmup_s = get_num(run, "warmup_s", 600.0);
    s.run.seed = run.value("seed", 0ull);

    for (const auto& msg : validate_scenario(s)) issues.push_back(msg);
    if (!issues.empty()) throw ScenarioError("scenario validation failed", std::move(issues));
    return s;
}

Scenario load_scenario(const std::string& path, bool lenient) {
    std::ifstream in(path);
    if (!in) throw ScenarioError("cannot open scenario file " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ScenarioError(std::string("scenario parse error: ") + e.what());
    }
    std::string base_dir = std::filesystem::path(path).parent_path().string();
    if (base_dir.empty()) base_dir = ".";
    return scenario_from_json(j, lenient, base_dir);
}

json scenario_to_json(const Scenario& s) {
    json j;
    if (!s.description.empty()) j["description"] = s.description;
    j["network"] = network_to_json(s.network);

    json overrides = json::array();
    for (const auto& [id, t] : s.fleet.overrides) {
        json oj = traits_to_json(t);
        oj["id"] = id;
        overrides.push_back(std::move(oj));
    }
    j["fleet"] = json{{"count", s.fleet.count}, {"traits", traits_to_json(s.fleet.base)}};
    if (!overrides.empty()) j["fleet"]["overrides"] = std::move(overrides);

    j["traffic"] = json{{"horizon_m", s.traffic.horizon_m},
                        {"static_separation_m", s.traffic.static_separation_m},
                        {"board_time_s", s.traffic.board_time_s},
                        {"debark_time_s", s.traffic.debark_time_s},
                        {"model_v_max_mps", s.traffic.model_v_max},
                        {"strict_separation", s.traffic.strict_separation}};

    json periods = json::array();
    for (const auto& p : s.demand.periods) {
        json rates;
        for (const auto& [st, r] : p.station_rates) rates[std::to_string(st)] = r;
        json od;
        for (const auto& [from, row] : p.od) {
            json row_j;
            for (const auto& [to, prob] : row) row_j[std::to_string(to)] = prob;
            od[std::to_string(from)] = std::move(row_j);
        }
        periods.push_back(json{{"start_s", p.start_s},
                               {"end_s", p.end_s},
                               {"station_rates", std::move(rates)},
                               {"od", std::move(od)}});
    }
    json sizes;
    for (const auto& [size, w] : s.demand.group_size.weights) sizes[std::to_string(size)] = w;
    j["demand"] = json{{"demand_scale", s.demand.demand_scale},
                       {"group_size", std::move(sizes)},
                       {"periods", std::move(periods)}};

    j["evm"] = json{{"calling", s.evm.enable_calling},
                    {"expelling", s.evm.enable_expelling},
                    {"withdrawing", s.evm.enable_withdrawing},
                    {"balancing", s.evm.enable_balancing},
                    {"withdraw_timeout_s", s.evm.withdraw_timeout_s},
                    {"expel_lambda", s.evm.expel_lambda},
                    {"balance_surplus_threshold", s.evm.balance_surplus_threshold},
                    {"balance_check_interval_s", s.evm.balance_check_interval_s}};

    j["routing"] = json{{"alpha_length", s.routing.weights.alpha_length},
                        {"beta_time", s.routing.weights.beta_time},
                        {"gamma_congestion", s.routing.weights.gamma_congestion},
                        {"reroute_interval_s", s.routing.reroute_interval_s}};

    j["engine"] = json{{"sector_length_m", s.engine.sector_length_m},
                       {"ca", json{{"cell_length_m", s.engine.ca.cell_length_m},
                                   {"separation_m", s.engine.ca.separation_m},
                                   {"p1", s.engine.ca.p1},
                                   {"p2", s.engine.ca.p2},
                                   {"breakdown_steps", s.engine.ca.breakdown_steps},
                                   {"weights", json{{"w_t", s.engine.ca.weights.w_t},
                                                    {"w_d", s.engine.ca.weights.w_d},
                                                    {"w_p", s.engine.ca.weights.w_p},
                                                    {"w_pas", s.engine.ca.weights.w_pas}}}}}};

    j["run"] = json{{"duration_s", s.run.duration_s},
                    {"warmup_s", s.run.warmup_s},
                    {"seed", s.run.seed}};
    return j;
}

void save_scenario(const Scenario& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ScenarioError("cannot write scenario file " + path);
    out << scenario_to_json(s).dump(2) << "\n";
}

}  // namespace prt
