#pragma once

#include <cstdint>
#include <vector>

#include "prtsim/rng.hpp"
#include "prtsim/types.hpp"

namespace prt {

/// One exponential interarrival draw, in seconds, for a rate in groups/hour.
/// Throws std::invalid_argument for non-positive rates.
double sample_interarrival(double rate_per_hour, Rng& rng);

/// Destination and size for a group spawning at `origin` within `period`.
/// Throws std::invalid_argument when the od row or size table is degenerate.
PassengerGroup sample_group(std::int64_t id, NodeId origin, double spawn_time_s,
                            const DemandPeriod& period, const GroupSizeDistribution& sizes,
                            Rng& rng);

struct DemandEvent {
    double time_s = 0.0;
    PassengerGroup group;
};

/// Full arrival stream for the run, ordered by (time, group id). Group ids
/// are assigned in stream order starting at 0. demand_scale multiplies every
/// station rate. Periods must not overlap; events beyond end_time_s are cut.
std::vector<DemandEvent> generate_demand(const std::vector<DemandPeriod>& periods,
                                         const GroupSizeDistribution& sizes, double end_time_s,
                                         std::uint64_t seed, double demand_scale = 1.0);

}  // namespace prt
