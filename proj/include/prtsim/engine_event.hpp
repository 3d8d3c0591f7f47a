#pragma once

#include <vector>

#include "prtsim/demand.hpp"
#include "prtsim/network.hpp"
#include "prtsim/run_result.hpp"
#include "prtsim/scenario.hpp"
#include "prtsim/types.hpp"

namespace prt {

/// Speed cap for open track: minimum of the model-wide, segment, and vehicle
/// maxima. Sectors inherit their segment's limit.
double allowed_velocity(const VehicleTraits& v, const TrafficParams& p, const Segment& seg);

/// Service-braking distance v^2 / (2d).
double stopping_distance(double v_mps, double decel_mps2);

/// "Hold at most v_mps when you have travelled at_m from here." A stop
/// requirement is v_mps = 0. Planning reduces every obstacle to this form.
struct SpeedConstraint {
    double at_m = 0.0;
    double v_mps = 0.0;
};

/// Constraint imposed by the nearest vehicle ahead: we must be able to stop
/// behind the point where the leader would halt if it started braking right
/// now at leader_decel, keeping the static separation.
SpeedConstraint leader_constraint(double gap_m, double leader_v_mps, double leader_decel_mps2,
                                  double separation_m);

/// True when some stop requirement lands strictly inside the sector, i.e.
/// the vehicle may not leave its current connection at all.
bool sector_blocked(double sector_len_m, const std::vector<SpeedConstraint>& ahead);

/// Largest exit speed at sector_len_m such that every constraint beyond the
/// sector stays reachable with service braking. Never exceeds cruise_cap.
double exit_speed_cap(double sector_len_m, double cruise_cap, double decel_mps2,
                      const std::vector<SpeedConstraint>& ahead);

struct PlanPhase {
    double duration_s = 0.0;
    double accel_mps2 = 0.0;
    double v0_mps = 0.0;  // speed entering the phase
};

/// Analytic accelerate/cruise/decelerate profile across one sector. Exact;
/// the engine advances vehicles by evaluating it, never by integration.
struct PlanProfile {
    double length_m = 0.0;
    double entry_v = 0.0;
    double exit_v = 0.0;
    double duration_s = 0.0;
    std::vector<PlanPhase> phases;

    double position_at(double dt_s) const;  // clamped to [0, length]
    double velocity_at(double dt_s) const;
    double time_to_reach(double dist_m) const;  // inverse of position_at
};

/// Plan a run of length_m from entry_v, accelerating at accel towards
/// cruise_cap and leaving at most exit_cap, braking at decel. entry_v must
/// satisfy entry_v^2 <= exit_cap^2 + 2 * decel * length_m (the planner's own
/// exit caps guarantee this from one sector to the next).
PlanProfile plan_profile(double length_m, double entry_v, double cruise_cap, double exit_cap,
                         double accel_mps2, double decel_mps2);

/// Free-run time over dist_m from speed v0, accelerating at accel towards
/// cruise, ignoring every obstacle. Used for join-arrival projections.
double free_run_time(double dist_m, double v0, double cruise, double accel);

/// Run the event-driven engine on an explicit pre-generated demand stream.
RunResult run_event_driven(const Scenario& sc, const std::vector<DemandEvent>& demand);

/// Convenience wrapper: generates the demand stream from the scenario.
RunResult run_event_driven(const Scenario& sc);

}  // namespace prt
