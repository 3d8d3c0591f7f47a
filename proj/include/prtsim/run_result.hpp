#pragma once

#include "prtsim/analytics.hpp"

namespace prt {

/// Monitored invariant breaches. A clean run reports all zeros; the CLI
/// turns any nonzero counter into a failing exit code.
struct SafetyCounters {
    long separation_violations = 0;  // gap below static separation at a stop
    long envelope_violations = 0;    // planner handed an unreachable exit speed
    long join_conflicts = 0;         // join crossed without holding the allocation
    long cell_collisions = 0;        // two vehicles committed to one cell

    long total() const {
        return separation_violations + envelope_violations + join_conflicts + cell_collisions;
    }
};

/// End-of-run accounting used by the conservation checks.
struct RunTotals {
    int vehicles = 0;
    long groups_spawned = 0;
    long groups_arrived = 0;   // debarked at their destination
    long groups_riding = 0;    // coupled or aboard when the run ended
    long groups_waiting = 0;   // still queued when the run ended

    bool conserved() const {
        return groups_spawned == groups_arrived + groups_riding + groups_waiting;
    }
};

struct RunResult {
    EventLog log;
    SafetyCounters safety;
    RunTotals totals;
};

}  // namespace prt
