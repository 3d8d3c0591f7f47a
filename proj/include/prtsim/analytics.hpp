#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "prtsim/types.hpp"

namespace prt {

enum class EventKind {
    SimulationStarted,
    SimulationEnded,
    GroupSpawned,
    GroupCoupled,
    BoardingStarted,
    BoardingDone,
    DebarkStarted,
    DebarkDone,
    TripStarted,
    TripCompleted,
    SectorCrossed,
    CellMoved,
    JoinAllocated,
    EvmOrderIssued,
    VehicleIdle,
    VehicleWithdrawn,
    QueueSampled,
};

const char* event_kind_name(EventKind k);

/// One state transition. Ids are -1 when not applicable; detail carries
/// kind-specific key=value pairs separated by ';'.
struct EventRecord {
    double time_s = 0.0;
    EventKind kind = EventKind::SimulationStarted;
    std::int64_t vehicle_id = -1;
    std::int64_t group_id = -1;
    std::int64_t node_id = -1;
    std::int64_t segment_id = -1;
    std::string detail;
};

/// Append-only, time-ordered record of a run.
class EventLog {
public:
    explicit EventLog(EngineKind engine = EngineKind::EventDriven) : m_engine(engine) {}

    void append(EventRecord rec);
    const std::vector<EventRecord>& records() const { return m_records; }
    EngineKind engine() const { return m_engine; }

    std::size_t count(EventKind k) const;

private:
    EngineKind m_engine;
    std::vector<EventRecord> m_records;
};

/// Fetch one key from a detail string; empty when absent.
std::string detail_value(const std::string& detail, const std::string& key);

/// Number formatting used for every CSV column: up to six significant
/// digits, locale independent.
std::string fmt_num(double x);

struct MetricsReport {
    double trips_full_per_h = 0.0;
    double trips_empty_per_h = 0.0;
    double empty_call_per_h = 0.0;
    double empty_expel_per_h = 0.0;
    double empty_withdraw_per_h = 0.0;
    double empty_balance_per_h = 0.0;
    double wait_mean_s = 0.0;
    double wait_p95_s = 0.0;
    double queue_mean = 0.0;  // waiting groups averaged over time and stations
    double vkm_full = 0.0;
    double vkm_empty = 0.0;
    bool saturated = false;
};

/// Aggregates over [warmup_s, warmup_s + window_s]. Throws
/// std::invalid_argument when the window is empty.
MetricsReport compute_metrics(const EventLog& log, double warmup_s, double window_s,
                              int station_count);

/// Piecewise-constant total queue length over time, reconstructed from
/// QueueSampled records. Returns (time, total length) change points.
std::vector<std::pair<double, double>> queue_trajectory(const EventLog& log);

/// Time-weighted mean of the trajectory over [t0, t1].
double queue_mean_over(const std::vector<std::pair<double, double>>& traj, double t0, double t1);

struct ScaleObservation {
    double demand_scale = 0.0;
    double throughput_per_h = 0.0;   // passenger trips per hour
    double backlog_fraction = 0.0;   // groups still waiting at the end / spawned
    long long groups_spawned = 0;
    std::vector<std::pair<double, double>> queue_traj;
    double window_start_s = 0.0;
    double window_end_s = 0.0;
};

/// Smallest scale whose queue blows up (final-quarter mean >= k * second-
/// quarter mean) while throughput gains less than min_gain over the previous
/// point. nullopt when no tested scale saturates.
std::optional<double> detect_saturation(const std::vector<ScaleObservation>& obs, double k = 2.0,
                                        double min_gain = 0.02);

/// Whether one run's own queue trajectory shows the blow-up signature.
bool run_saturated(const std::vector<std::pair<double, double>>& traj, double t0, double t1,
                   double k = 2.0);

struct SweepPoint {
    double demand_scale = 0.0;
    MetricsReport metrics;  // aggregated over replications
};

struct EmptyTripCurve {
    std::vector<std::pair<double, double>> points;  // (scale, empty trips/h)
    std::size_t argmax = 0;
    bool interior_max = false;
};

/// Requires at least four points; points are sorted by scale first.
EmptyTripCurve empty_trip_curve(const std::vector<SweepPoint>& points);

/// events.csv: time_s,kind,vehicle_id,group_id,node_id,segment_id,detail
std::string export_events_csv(const EventLog& log);

/// metrics.csv rows in sweep order, one per (scale, report).
std::string export_metrics_csv(const std::vector<std::pair<double, MetricsReport>>& rows);

}  // namespace prt
