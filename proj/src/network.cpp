#include "prtsim/network.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <set>
#include <sstream>
#include <stdexcept>

namespace prt {

const char* node_type_name(NodeType t) {
    switch (t) {
        case NodeType::Station: return "station";
        case NodeType::Capacitor: return "capacitor";
        case NodeType::Fork: return "fork";
        case NodeType::Join: return "join";
        case NodeType::Junction: return "junction";
    }
    return "?";
}

const Node& Network::node(NodeId id) const {
    auto it = m_node_index.find(id);
    if (it == m_node_index.end()) throw std::out_of_range("unknown node id " + std::to_string(id));
    return m_nodes[it->second];
}

const Segment& Network::segment(SegmentId id) const {
    auto it = m_segment_index.find(id);
    if (it == m_segment_index.end()) throw std::out_of_range("unknown segment id " + std::to_string(id));
    return m_segments[it->second];
}

static const std::vector<SegmentId> kNoSegments;

const std::vector<SegmentId>& Network::out_segments(NodeId id) const {
    auto it = m_out.find(id);
    return it == m_out.end() ? kNoSegments : it->second;
}

const std::vector<SegmentId>& Network::in_segments(NodeId id) const {
    auto it = m_in.find(id);
    return it == m_in.end() ? kNoSegments : it->second;
}

std::vector<NodeId> Network::stations() const {
    std::vector<NodeId> out;
    for (const auto& n : m_nodes)
        if (n.type == NodeType::Station) out.push_back(n.id);
    return out;
}

std::vector<NodeId> Network::capacitors() const {
    std::vector<NodeId> out;
    for (const auto& n : m_nodes)
        if (n.type == NodeType::Capacitor) out.push_back(n.id);
    return out;
}

double Network::total_length() const {
    double sum = 0.0;
    for (const auto& s : m_segments) sum += s.length_m;
    return sum;
}

namespace {

void expected_degrees(NodeType t, int& in, int& out) {
    switch (t) {
        case NodeType::Fork: in = 1; out = 2; break;
        case NodeType::Join: in = 2; out = 1; break;
        default: in = 1; out = 1; break;  // station, capacitor, junction
    }
}

/// BFS over the directed graph (or its reverse) from one start node.
std::set<NodeId> sweep(const std::vector<Segment>& segments, NodeId start, bool forward) {
    std::unordered_map<NodeId, std::vector<NodeId>> adj;
    for (const auto& s : segments) {
        if (forward)
            adj[s.from].push_back(s.to);
        else
            adj[s.to].push_back(s.from);
    }
    std::set<NodeId> seen{start};
    std::deque<NodeId> frontier{start};
    while (!frontier.empty()) {
        NodeId n = frontier.front();
        frontier.pop_front();
        for (NodeId next : adj[n])
            if (seen.insert(next).second) frontier.push_back(next);
    }
    return seen;
}

}  // namespace

std::vector<Violation> validate(const std::vector<Node>& nodes,
                                const std::vector<Segment>& segments) {
    std::vector<Violation> out;
    auto add = [&](ViolationKind k, std::string msg) { out.push_back({k, std::move(msg)}); };

    std::set<NodeId> node_ids;
    for (const auto& n : nodes) {
        if (!node_ids.insert(n.id).second)
            add(ViolationKind::DuplicateId, "duplicate node id " + std::to_string(n.id));
        if (n.type == NodeType::Station) {
            if (n.station.berths < 1)
                add(ViolationKind::BadValue, "station " + std::to_string(n.id) + " needs at least one berth");
            if (n.station.entry_buffer < 0 || n.station.exit_buffer < 0)
                add(ViolationKind::BadValue, "station " + std::to_string(n.id) + " has a negative buffer size");
        }
        if (n.type == NodeType::Capacitor && n.parking_places < 1)
            add(ViolationKind::BadValue, "capacitor " + std::to_string(n.id) + " needs at least one parking place");
    }

    std::set<SegmentId> seg_ids;
    std::unordered_map<NodeId, int> in_deg, out_deg;
    for (const auto& s : segments) {
        if (!seg_ids.insert(s.id).second)
            add(ViolationKind::DuplicateId, "duplicate segment id " + std::to_string(s.id));
        if (!node_ids.count(s.from))
            add(ViolationKind::DanglingEndpoint,
                "segment " + std::to_string(s.id) + " starts at unknown node " + std::to_string(s.from));
        if (!node_ids.count(s.to))
            add(ViolationKind::DanglingEndpoint,
                "segment " + std::to_string(s.id) + " ends at unknown node " + std::to_string(s.to));
        if (s.from == s.to)
            add(ViolationKind::SelfLoop, "segment " + std::to_string(s.id) + " is a self-loop");
        if (!(s.length_m > 0.0))
            add(ViolationKind::BadValue, "segment " + std::to_string(s.id) + " has non-positive length");
        if (!(s.max_velocity_mps > 0.0))
            add(ViolationKind::BadValue, "segment " + std::to_string(s.id) + " has non-positive max velocity");
        out_deg[s.from]++;
        in_deg[s.to]++;
    }
    if (!out.empty()) return out;  // degree/reachability checks assume sane ids

    for (const auto& n : nodes) {
        int want_in = 0, want_out = 0;
        expected_degrees(n.type, want_in, want_out);
        if (in_deg[n.id] != want_in || out_deg[n.id] != want_out) {
            std::ostringstream msg;
            msg << node_type_name(n.type) << " " << n.id << " has degree in=" << in_deg[n.id]
                << " out=" << out_deg[n.id] << ", expected in=" << want_in << " out=" << want_out;
            add(ViolationKind::DegreeViolation, msg.str());
        }
    }
    if (!out.empty()) return out;

    // Strong connectivity over stations and capacitors: every such node must
    // reach and be reachable from a representative one.
    std::vector<NodeId> hubs;
    for (const auto& n : nodes)
        if (n.type == NodeType::Station || n.type == NodeType::Capacitor) hubs.push_back(n.id);
    if (!hubs.empty()) {
        auto fwd = sweep(segments, hubs.front(), true);
        auto bwd = sweep(segments, hubs.front(), false);
        for (NodeId h : hubs) {
            if (!fwd.count(h) || !bwd.count(h))
                add(ViolationKind::UnreachableStation,
                    "node " + std::to_string(h) + " is not strongly connected to the other stations");
        }
    }
    return out;
}

std::vector<Violation> validate(const Network& net) {
    return validate(net.nodes(), net.segments());
}

struct NetworkBuilder {
    static Network assemble(std::vector<Node> nodes, std::vector<Segment> segments) {
        Network net;
        std::sort(nodes.begin(), nodes.end(),
                  [](const Node& a, const Node& b) { return a.id < b.id; });
        std::sort(segments.begin(), segments.end(),
                  [](const Segment& a, const Segment& b) { return a.id < b.id; });
        net.m_nodes = std::move(nodes);
        net.m_segments = std::move(segments);
        for (std::size_t i = 0; i < net.m_nodes.size(); ++i)
            net.m_node_index[net.m_nodes[i].id] = i;
        for (std::size_t i = 0; i < net.m_segments.size(); ++i) {
            const Segment& s = net.m_segments[i];
            net.m_segment_index[s.id] = i;
            net.m_out[s.from].push_back(s.id);
            net.m_in[s.to].push_back(s.id);
        }
        for (auto& [id, v] : net.m_out) std::sort(v.begin(), v.end());
        for (auto& [id, v] : net.m_in) std::sort(v.begin(), v.end());
        return net;
    }
};

BuildResult build_network(std::vector<Node> nodes, std::vector<Segment> segments) {
    BuildResult result;
    result.violations = validate(nodes, segments);
    if (!result.violations.empty()) return result;
    result.network = NetworkBuilder::assemble(std::move(nodes), std::move(segments));
    return result;
}

std::vector<double> sectorize(const Segment& seg, double sector_length_m) {
    if (!(sector_length_m > 0.0)) throw std::invalid_argument("sector length must be > 0");
    std::vector<double> bounds{0.0};
    constexpr double eps = 1e-9;
    double pos = sector_length_m;
    while (pos < seg.length_m - eps) {
        bounds.push_back(pos);
        pos += sector_length_m;
    }
    bounds.push_back(seg.length_m);
    return bounds;
}

int cellize(const Segment& seg, double cell_length_m) {
    if (!(cell_length_m > 0.0)) throw std::invalid_argument("cell length must be > 0");
    long long n = std::llround(seg.length_m / cell_length_m);
    return static_cast<int>(std::max(1LL, n));
}

bool reachable(const Network& net, NodeId from, NodeId to) {
    net.node(from);
    net.node(to);
    if (from == to) return true;
    std::set<NodeId> seen{from};
    std::deque<NodeId> frontier{from};
    while (!frontier.empty()) {
        NodeId n = frontier.front();
        frontier.pop_front();
        for (SegmentId sid : net.out_segments(n)) {
            NodeId next = net.segment(sid).to;
            if (next == to) return true;
            if (seen.insert(next).second) frontier.push_back(next);
        }
    }
    return false;
}

std::string to_dot(const Network& net) {
    std::ostringstream os;
    os << "digraph prt {\n  rankdir=LR;\n";
    for (const auto& n : net.nodes()) {
        os << "  n" << n.id << " [label=\"" << n.id << "\\n" << node_type_name(n.type) << "\"";
        switch (n.type) {
            case NodeType::Station: os << ", shape=box"; break;
            case NodeType::Capacitor: os << ", shape=house"; break;
            default: os << ", shape=circle"; break;
        }
        if (n.x && n.y) os << ", pos=\"" << *n.x << "," << *n.y << "!\"";
        os << "];\n";
    }
    for (const auto& s : net.segments()) {
        os << "  n" << s.from << " -> n" << s.to << " [label=\"" << s.id << " (" << s.length_m
           << "m)\"];\n";
    }
    os << "}\n";
    return os.str();
}

}  // namespace prt
