#pragma once

#include <cstddef>
#include <unordered_map>
#include <utility>
#include <vector>

#include "prtsim/demand.hpp"
#include "prtsim/network.hpp"
#include "prtsim/run_result.hpp"
#include "prtsim/scenario.hpp"
#include "prtsim/types.hpp"

namespace prt {

// Per-step update rules of the cellular model, one pure function each. All
// speeds are in cells per step. The engine composes them in this order from
// the frozen pre-step state: accelerate, keep distance, randomize, break
// down, arbitrate junctions, move.

/// Rule 1: speed up by one cell per step towards the local limit.
int ca_accelerate(int v, int v_max_cells);

/// Rule 2: never land on or beyond the nearest obstacle.
/// dist_to_obstacle_cells is the number of cells from the vehicle to the
/// obstacle (>= 1 when adjacent); the vehicle may advance at most dist - 1.
int ca_decelerate(int v, int dist_to_obstacle_cells);

/// Rule 3: random slowdown by one cell with probability p1 (u is a uniform
/// draw in [0,1)); stationary vehicles are unaffected.
int ca_randomize(int v, double p1, double u);

/// Rule 4: breakdown. A vehicle with steps_left > 0 stays at speed zero and
/// counts down; a healthy moving vehicle breaks down for breakdown_steps
/// when u < p2. Returns the pair (speed, steps_left) after the rule.
std::pair<int, int> ca_breakdown(int v, int steps_left, double p2, double u,
                                 int breakdown_steps);

/// Priority value deciding contested merges:
///   W = w_t * waiting + w_d * distance + w_p * priority + w_pas * passengers
double junction_weight(const JunctionWeights& w, double waiting_steps, double distance_m,
                       double priority, double passengers);

struct JunctionCandidate {
    int vehicle = 0;
    double waiting_steps = 0.0;
    double distance_m = 0.0;
    double priority = 0.0;
    double passengers = 0.0;
};

/// Index of the candidate with the highest priority value; exact ties go to
/// the lowest vehicle id. Candidates must be non-empty.
std::size_t resolve_junction(const std::vector<JunctionCandidate>& cands,
                             const JunctionWeights& w);

/// Cell discretisation of a network: every segment becomes a run of cells,
/// forks, joins and junctions get one cell of their own, stations and
/// capacitors are houses without any track cell.
class CellMap {
public:
    CellMap() = default;
    CellMap(const Network& net, double cell_length_m);

    int cells(SegmentId id) const { return m_cells.at(id); }
    bool node_has_cell(NodeId id) const { return m_node_cell.count(id) > 0; }
    int total_cells() const { return m_total; }

private:
    std::unordered_map<SegmentId, int> m_cells;
    std::unordered_map<NodeId, char> m_node_cell;
    int m_total = 0;
};

/// Run the cellular engine on an explicit pre-generated demand stream (the
/// same stream the event-driven engine accepts, for like-for-like runs).
RunResult run_cellular(const Scenario& sc, const std::vector<DemandEvent>& demand);

/// Convenience wrapper: generates the demand stream from the scenario.
RunResult run_cellular(const Scenario& sc);

}  // namespace prt
