#include "prtsim/demand.hpp"

#include <algorithm>
#include <stdexcept>

namespace prt {

double sample_interarrival(double rate_per_hour, Rng& rng) {
    if (!(rate_per_hour > 0.0)) throw std::invalid_argument("arrival rate must be > 0");
    return rng.exponential(3600.0 / rate_per_hour);
}

PassengerGroup sample_group(std::int64_t id, NodeId origin, double spawn_time_s,
                            const DemandPeriod& period, const GroupSizeDistribution& sizes,
                            Rng& rng) {
    auto row_it = period.od.find(origin);
    if (row_it == period.od.end())
        throw std::invalid_argument("od matrix has no row for station " + std::to_string(origin));

    std::vector<NodeId> dests;
    std::vector<double> weights;
    for (const auto& [dest, p] : row_it->second) {
        if (p < 0.0) throw std::invalid_argument("od probability below zero");
        if (dest == origin && p > 0.0)
            throw std::invalid_argument("od diagonal must be zero");
        if (p > 0.0) {
            dests.push_back(dest);
            weights.push_back(p);
        }
    }
    if (dests.empty())
        throw std::invalid_argument("od row for station " + std::to_string(origin) +
                                    " has no positive entries");

    PassengerGroup g;
    g.id = id;
    g.origin = origin;
    g.destination = dests[rng.weighted_index(weights)];
    g.spawn_time_s = spawn_time_s;

    std::vector<int> size_values;
    std::vector<double> size_weights;
    for (const auto& [size, w] : sizes.weights) {
        if (size < 1) throw std::invalid_argument("group size below one");
        if (w > 0.0) {
            size_values.push_back(size);
            size_weights.push_back(w);
        }
    }
    if (size_values.empty()) throw std::invalid_argument("group size distribution is empty");
    g.size = size_values[rng.weighted_index(size_weights)];
    return g;
}

std::vector<DemandEvent> generate_demand(const std::vector<DemandPeriod>& periods,
                                         const GroupSizeDistribution& sizes, double end_time_s,
                                         std::uint64_t seed, double demand_scale) {
    // Overlap check; periods may arrive in any order.
    std::vector<const DemandPeriod*> sorted;
    for (const auto& p : periods) {
        if (!(p.end_s > p.start_s)) throw std::invalid_argument("demand period must have end > start");
        sorted.push_back(&p);
    }
    std::sort(sorted.begin(), sorted.end(),
              [](const DemandPeriod* a, const DemandPeriod* b) { return a->start_s < b->start_s; });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        if (sorted[i]->start_s < sorted[i - 1]->end_s - 1e-9)
            throw std::invalid_argument("demand periods overlap");
    }

    // Each (period, station) pair owns an independent substream, so a change
    // to one station's rate cannot shuffle the draws of any other.
    struct Spawn {
        double time;
        NodeId origin;
        std::size_t period_index;
    };
    std::vector<Spawn> spawns;
    for (std::size_t pi = 0; pi < sorted.size(); ++pi) {
        const DemandPeriod& p = *sorted[pi];
        for (const auto& [station, base_rate] : p.station_rates) {
            double rate = base_rate * demand_scale;
            if (rate <= 0.0) continue;
            Rng rng = Rng::substream(seed, {stream::demand, pi, station});
            double t = p.start_s;
            while (true) {
                t += sample_interarrival(rate, rng);
                if (t >= p.end_s || t >= end_time_s) break;
                spawns.push_back({t, station, pi});
            }
        }
    }
    std::sort(spawns.begin(), spawns.end(), [](const Spawn& a, const Spawn& b) {
        if (a.time != b.time) return a.time < b.time;
        return a.origin < b.origin;
    });

    // Destinations and sizes are drawn in stream order from one shared
    // substream, keyed by the final group id.
    Rng mix = Rng::substream(seed, {stream::demand, 0x6f64ull});  // "od"
    std::vector<DemandEvent> events;
    events.reserve(spawns.size());
    for (std::size_t i = 0; i < spawns.size(); ++i) {
        const Spawn& s = spawns[i];
        DemandEvent ev;
        ev.time_s = s.time;
        ev.group = sample_group(static_cast<std::int64_t>(i), s.origin, s.time, *sorted[s.period_index],
                                sizes, mix);
        events.push_back(std::move(ev));
    }
    return events;
}

}  // namespace prt
