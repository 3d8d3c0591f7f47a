#pragma once

#include <limits>
#include <optional>
#include <unordered_map>
#include <vector>

#include "prtsim/network.hpp"
#include "prtsim/types.hpp"

namespace prt {

/// Occupancy estimate per segment in [0, ~1]; absent segments count as free.
struct CongestionSnapshot {
    std::unordered_map<SegmentId, double> occupancy;

    double at(SegmentId id) const {
        auto it = occupancy.find(id);
        return it == occupancy.end() ? 0.0 : it->second;
    }
};

/// Occupancy of one segment given a vehicle count: each vehicle claims its
/// separation gap plus a nominal 3 m of body length.
double segment_occupancy(const Segment& seg, int vehicles_on_segment, double separation_m);

struct Route {
    NodeId origin = 0;
    NodeId destination = 0;
    std::vector<SegmentId> segments;  // empty when origin == destination
    double total_weight = 0.0;
};

/// weight = alpha * length + beta * (length / v_max) + gamma * occupancy
double edge_weight(const Segment& seg, const EdgeWeightParams& p, const CongestionSnapshot& c);

/// Deterministic Dijkstra; equal-cost ties prefer the smaller arriving
/// segment id. Returns nullopt when no directed path exists.
std::optional<Route> shortest_route(const Network& net, NodeId from, NodeId to,
                                    const EdgeWeightParams& p, const CongestionSnapshot& c);

/// Dense matrix of static route weights between stations and capacitors.
class DistanceMatrix {
public:
    DistanceMatrix() = default;
    DistanceMatrix(std::vector<NodeId> ids, std::vector<double> weights);

    static constexpr double unreachable = std::numeric_limits<double>::infinity();

    /// Throws std::out_of_range for ids outside the station/capacitor set.
    double between(NodeId from, NodeId to) const;
    const std::vector<NodeId>& ids() const { return m_ids; }

private:
    std::vector<NodeId> m_ids;  // ascending
    std::unordered_map<NodeId, std::size_t> m_index;
    std::vector<double> m_weights;  // row-major
};

/// All-pairs static weights over the empty network (no congestion term input;
/// gamma still applies to zero occupancy).
DistanceMatrix all_pairs_static(const Network& net, const EdgeWeightParams& p);

/// Fresh route taking effect at the end of the segment the vehicle currently
/// occupies; vehicles never reverse. Empty route when that node is already
/// the destination.
std::optional<Route> reroute(const Network& net, SegmentId current, NodeId destination,
                             const EdgeWeightParams& p, const CongestionSnapshot& c);

}  // namespace prt
