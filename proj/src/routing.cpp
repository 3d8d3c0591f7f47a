#include "prtsim/routing.hpp"

#include <algorithm>
#include <queue>
#include <stdexcept>

namespace prt {

double segment_occupancy(const Segment& seg, int vehicles_on_segment, double separation_m) {
    constexpr double kVehicleLength = 3.0;
    return vehicles_on_segment * (separation_m + kVehicleLength) / seg.length_m;
}

double edge_weight(const Segment& seg, const EdgeWeightParams& p, const CongestionSnapshot& c) {
    return p.alpha_length * seg.length_m + p.beta_time * (seg.length_m / seg.max_velocity_mps) +
           p.gamma_congestion * c.at(seg.id);
}

namespace {

struct DijkstraEntry {
    double dist;
    NodeId node;
    SegmentId via;  // segment used to arrive, breaks cost ties

    bool operator>(const DijkstraEntry& o) const {
        if (dist != o.dist) return dist > o.dist;
        if (via != o.via) return via > o.via;
        return node > o.node;
    }
};

struct DijkstraResult {
    std::unordered_map<NodeId, double> dist;
    std::unordered_map<NodeId, SegmentId> via;
};

DijkstraResult dijkstra(const Network& net, NodeId from, const EdgeWeightParams& p,
                        const CongestionSnapshot& c) {
    DijkstraResult r;
    std::priority_queue<DijkstraEntry, std::vector<DijkstraEntry>, std::greater<>> open;
    r.dist[from] = 0.0;
    open.push({0.0, from, 0});
    while (!open.empty()) {
        auto [d, n, via] = open.top();
        open.pop();
        auto it = r.dist.find(n);
        if (it != r.dist.end() && d > it->second) continue;
        for (SegmentId sid : net.out_segments(n)) {
            const Segment& seg = net.segment(sid);
            double nd = d + edge_weight(seg, p, c);
            auto dit = r.dist.find(seg.to);
            bool better = dit == r.dist.end() || nd < dit->second;
            bool tie_wins = dit != r.dist.end() && nd == dit->second && sid < r.via[seg.to];
            if (better || tie_wins) {
                r.dist[seg.to] = nd;
                r.via[seg.to] = sid;
                open.push({nd, seg.to, sid});
            }
        }
    }
    return r;
}

std::optional<Route> extract_route(const Network& net, const DijkstraResult& r, NodeId from,
                                   NodeId to) {
    Route route;
    route.origin = from;
    route.destination = to;
    if (from == to) return route;
    auto dit = r.dist.find(to);
    if (dit == r.dist.end()) return std::nullopt;
    route.total_weight = dit->second;
    NodeId n = to;
    while (n != from) {
        SegmentId sid = r.via.at(n);
        route.segments.push_back(sid);
        n = net.segment(sid).from;
    }
    std::reverse(route.segments.begin(), route.segments.end());
    return route;
}

}  // namespace

std::optional<Route> shortest_route(const Network& net, NodeId from, NodeId to,
                                    const EdgeWeightParams& p, const CongestionSnapshot& c) {
    net.node(from);
    net.node(to);
    return extract_route(net, dijkstra(net, from, p, c), from, to);
}

DistanceMatrix::DistanceMatrix(std::vector<NodeId> ids, std::vector<double> weights)
    : m_ids(std::move(ids)), m_weights(std::move(weights)) {
    for (std::size_t i = 0; i < m_ids.size(); ++i) m_index[m_ids[i]] = i;
}

double DistanceMatrix::between(NodeId from, NodeId to) const {
    auto fi = m_index.find(from);
    auto ti = m_index.find(to);
    if (fi == m_index.end() || ti == m_index.end())
        throw std::out_of_range("node not part of the distance matrix");
    return m_weights[fi->second * m_ids.size() + ti->second];
}

DistanceMatrix all_pairs_static(const Network& net, const EdgeWeightParams& p) {
    std::vector<NodeId> ids = net.stations();
    for (NodeId c : net.capacitors()) ids.push_back(c);
    std::sort(ids.begin(), ids.end());

    CongestionSnapshot empty;
    std::vector<double> w(ids.size() * ids.size(), DistanceMatrix::unreachable);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto r = dijkstra(net, ids[i], p, empty);
        for (std::size_t j = 0; j < ids.size(); ++j) {
            if (i == j) {
                w[i * ids.size() + j] = 0.0;
            } else {
                auto it = r.dist.find(ids[j]);
                if (it != r.dist.end()) w[i * ids.size() + j] = it->second;
            }
        }
    }
    return DistanceMatrix(std::move(ids), std::move(w));
}

std::optional<Route> reroute(const Network& net, SegmentId current, NodeId destination,
                             const EdgeWeightParams& p, const CongestionSnapshot& c) {
    const Segment& seg = net.segment(current);
    return shortest_route(net, seg.to, destination, p, c);
}

}  // namespace prt
