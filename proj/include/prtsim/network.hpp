#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "prtsim/types.hpp"

namespace prt {

enum class NodeType { Station, Capacitor, Fork, Join, Junction };

const char* node_type_name(NodeType t);

enum class StationLayout { InLine, StubBerths };

struct StationSpec {
    StationLayout layout = StationLayout::InLine;
    int berths = 4;
    int entry_buffer = 0;
    int exit_buffer = 0;

    bool operator==(const StationSpec&) const = default;
};

struct Node {
    NodeId id = 0;
    NodeType type = NodeType::Junction;
    StationSpec station;     // meaningful for Station nodes
    int parking_places = 0;  // meaningful for Capacitor nodes
    std::optional<double> x, y;  // drawing hint only, no simulation meaning

    bool operator==(const Node&) const = default;
};

struct Segment {
    SegmentId id = 0;
    NodeId from = 0;
    NodeId to = 0;
    double length_m = 0.0;
    double max_velocity_mps = 0.0;
    int priority = 0;  // junction-rule segment priority term

    bool operator==(const Segment&) const = default;
};

enum class ViolationKind {
    DuplicateId,
    DanglingEndpoint,
    SelfLoop,
    DegreeViolation,
    UnreachableStation,
    BadValue,
};

struct Violation {
    ViolationKind kind;
    std::string message;
};

/// Validated directed track graph. Instances are only produced by
/// build_network, so holding a Network implies the structural rules passed.
class Network {
public:
    const std::vector<Node>& nodes() const { return m_nodes; }
    const std::vector<Segment>& segments() const { return m_segments; }

    bool has_node(NodeId id) const { return m_node_index.count(id) > 0; }
    bool has_segment(SegmentId id) const { return m_segment_index.count(id) > 0; }
    const Node& node(NodeId id) const;
    const Segment& segment(SegmentId id) const;

    const std::vector<SegmentId>& out_segments(NodeId id) const;
    const std::vector<SegmentId>& in_segments(NodeId id) const;

    /// Station and capacitor ids in ascending order.
    std::vector<NodeId> stations() const;
    std::vector<NodeId> capacitors() const;

    double total_length() const;

private:
    friend struct NetworkBuilder;
    std::vector<Node> m_nodes;
    std::vector<Segment> m_segments;
    std::unordered_map<NodeId, std::size_t> m_node_index;
    std::unordered_map<SegmentId, std::size_t> m_segment_index;
    std::unordered_map<NodeId, std::vector<SegmentId>> m_out;
    std::unordered_map<NodeId, std::vector<SegmentId>> m_in;
};

struct BuildResult {
    std::optional<Network> network;
    std::vector<Violation> violations;

    bool ok() const { return network.has_value(); }
};

/// Checks ids, endpoints, degree rules per node type, positive lengths and
/// speeds, and strong connectivity over the station/capacitor set.
std::vector<Violation> validate(const std::vector<Node>& nodes,
                                const std::vector<Segment>& segments);
std::vector<Violation> validate(const Network& net);

BuildResult build_network(std::vector<Node> nodes, std::vector<Segment> segments);

/// Sector boundary offsets from the segment start: 0, L_s, 2*L_s, ...,
/// length. The final sector absorbs the remainder and may be shorter; a
/// segment shorter than one sector becomes a single sector.
std::vector<double> sectorize(const Segment& seg, double sector_length_m);

/// Cell count for the automaton: round(length / cell) with a minimum of 1.
int cellize(const Segment& seg, double cell_length_m);

/// Directed reachability. Throws std::out_of_range on unknown ids.
bool reachable(const Network& net, NodeId from, NodeId to);

/// Graphviz dot rendering of the graph (layout hints included when present).
std::string to_dot(const Network& net);

}  // namespace prt
