#include "prtsim/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace prt {

const char* event_kind_name(EventKind k) {
    switch (k) {
        case EventKind::SimulationStarted: return "SimulationStarted";
        case EventKind::SimulationEnded: return "SimulationEnded";
        case EventKind::GroupSpawned: return "GroupSpawned";
        case EventKind::GroupCoupled: return "GroupCoupled";
        case EventKind::BoardingStarted: return "BoardingStarted";
        case EventKind::BoardingDone: return "BoardingDone";
        case EventKind::DebarkStarted: return "DebarkStarted";
        case EventKind::DebarkDone: return "DebarkDone";
        case EventKind::TripStarted: return "TripStarted";
        case EventKind::TripCompleted: return "TripCompleted";
        case EventKind::SectorCrossed: return "SectorCrossed";
        case EventKind::CellMoved: return "CellMoved";
        case EventKind::JoinAllocated: return "JoinAllocated";
        case EventKind::EvmOrderIssued: return "EvmOrderIssued";
        case EventKind::VehicleIdle: return "VehicleIdle";
        case EventKind::VehicleWithdrawn: return "VehicleWithdrawn";
        case EventKind::QueueSampled: return "QueueSampled";
    }
    return "?";
}

void EventLog::append(EventRecord rec) {
    if (!m_records.empty() && rec.time_s < m_records.back().time_s - 1e-9)
        throw std::logic_error("event log must be appended in time order");
    m_records.push_back(std::move(rec));
}

std::size_t EventLog::count(EventKind k) const {
    std::size_t n = 0;
    for (const auto& r : m_records)
        if (r.kind == k) ++n;
    return n;
}

std::string detail_value(const std::string& detail, const std::string& key) {
    std::size_t pos = 0;
    while (pos < detail.size()) {
        std::size_t end = detail.find(';', pos);
        if (end == std::string::npos) end = detail.size();
        std::size_t eq = detail.find('=', pos);
        if (eq != std::string::npos && eq < end && detail.compare(pos, eq - pos, key) == 0)
            return detail.substr(eq + 1, end - eq - 1);
        pos = end + 1;
    }
    return "";
}

std::string fmt_num(double x) {
    if (x == 0.0) return "0";  // avoid "-0"
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.6g", x);
    return buf;
}

namespace {

bool in_window(double t, double t0, double t1) { return t >= t0 && t <= t1; }

}  // namespace

MetricsReport compute_metrics(const EventLog& log, double warmup_s, double window_s,
                              int station_count) {
    if (!(window_s > 0.0)) throw std::invalid_argument("metrics window must be > 0");
    double t0 = warmup_s;
    double t1 = warmup_s + window_s;
    double hours = window_s / 3600.0;

    MetricsReport m;
    std::map<std::int64_t, double> spawn_time;
    std::vector<double> waits;

    for (const auto& r : log.records()) {
        switch (r.kind) {
            case EventKind::GroupSpawned:
                spawn_time[r.group_id] = r.time_s;
                break;
            case EventKind::GroupCoupled:
                if (in_window(r.time_s, t0, t1)) {
                    auto it = spawn_time.find(r.group_id);
                    if (it != spawn_time.end()) waits.push_back(r.time_s - it->second);
                }
                break;
            case EventKind::TripCompleted: {
                if (!in_window(r.time_s, t0, t1)) break;
                double km = 0.0;
                std::string dist = detail_value(r.detail, "dist_m");
                if (!dist.empty()) km = std::strtod(dist.c_str(), nullptr) / 1000.0;
                if (detail_value(r.detail, "empty") == "1") {
                    m.trips_empty_per_h += 1.0;
                    m.vkm_empty += km;
                    std::string cause = detail_value(r.detail, "cause");
                    if (cause == "call") m.empty_call_per_h += 1.0;
                    else if (cause == "expel") m.empty_expel_per_h += 1.0;
                    else if (cause == "withdraw") m.empty_withdraw_per_h += 1.0;
                    else if (cause == "balance") m.empty_balance_per_h += 1.0;
                } else {
                    m.trips_full_per_h += 1.0;
                    m.vkm_full += km;
                }
                break;
            }
            default:
                break;
        }
    }

    m.trips_full_per_h /= hours;
    m.trips_empty_per_h /= hours;
    m.empty_call_per_h /= hours;
    m.empty_expel_per_h /= hours;
    m.empty_withdraw_per_h /= hours;
    m.empty_balance_per_h /= hours;

    if (!waits.empty()) {
        double sum = 0.0;
        for (double w : waits) sum += w;
        m.wait_mean_s = sum / static_cast<double>(waits.size());
        std::sort(waits.begin(), waits.end());
        std::size_t idx = static_cast<std::size_t>(
            std::ceil(0.95 * static_cast<double>(waits.size())));
        if (idx > 0) --idx;
        m.wait_p95_s = waits[idx];
    }

    auto traj = queue_trajectory(log);
    double mean_total = queue_mean_over(traj, t0, t1);
    m.queue_mean = station_count > 0 ? mean_total / station_count : 0.0;
    m.saturated = run_saturated(traj, t0, t1);
    return m;
}

std::vector<std::pair<double, double>> queue_trajectory(const EventLog& log) {
    // QueueSampled records carry per-station lengths; track the total.
    std::map<std::int64_t, double> per_station;
    std::vector<std::pair<double, double>> traj;
    double total = 0.0;
    traj.emplace_back(0.0, 0.0);
    for (const auto& r : log.records()) {
        if (r.kind != EventKind::QueueSampled) continue;
        double len = std::strtod(detail_value(r.detail, "len").c_str(), nullptr);
        auto it = per_station.find(r.node_id);
        double prev = it == per_station.end() ? 0.0 : it->second;
        per_station[r.node_id] = len;
        total += len - prev;
        traj.emplace_back(r.time_s, total);
    }
    return traj;
}

double queue_mean_over(const std::vector<std::pair<double, double>>& traj, double t0, double t1) {
    if (!(t1 > t0)) return 0.0;
    double integral = 0.0;
    double level = 0.0;
    double prev_t = t0;
    for (const auto& [t, v] : traj) {
        if (t <= t0) {
            level = v;
            continue;
        }
        double upto = std::min(t, t1);
        if (upto > prev_t) integral += level * (upto - prev_t);
        prev_t = upto;
        level = v;
        if (t >= t1) break;
    }
    if (prev_t < t1) integral += level * (t1 - prev_t);
    return integral / (t1 - t0);
}

bool run_saturated(const std::vector<std::pair<double, double>>& traj, double t0, double t1,
                   double k) {
    double quarter = (t1 - t0) / 4.0;
    double mid = queue_mean_over(traj, t0 + quarter, t0 + 2.0 * quarter);
    double end = queue_mean_over(traj, t1 - quarter, t1);
    if (mid <= 0.0) return end > 0.0 && end >= k;  // from empty to persistent backlog
    return end >= k * mid;
}

std::optional<double> detect_saturation(const std::vector<ScaleObservation>& obs, double k,
                                        double min_gain) {
    std::vector<const ScaleObservation*> sorted;
    for (const auto& o : obs) sorted.push_back(&o);
    std::sort(sorted.begin(), sorted.end(),
              [](const ScaleObservation* a, const ScaleObservation* b) {
                  return a->demand_scale < b->demand_scale;
              });
    for (std::size_t i = 1; i < sorted.size(); ++i) {
        const auto& cur = *sorted[i];
        const auto& prev = *sorted[i - 1];
        bool blows_up = run_saturated(cur.queue_traj, cur.window_start_s, cur.window_end_s, k);
        bool stalls = prev.throughput_per_h > 0.0 &&
                      cur.throughput_per_h < prev.throughput_per_h * (1.0 + min_gain);
        if (blows_up && stalls) return cur.demand_scale;
    }
    return std::nullopt;
}

EmptyTripCurve empty_trip_curve(const std::vector<SweepPoint>& points) {
    if (points.size() < 4) throw std::invalid_argument("empty-trip curve needs at least 4 points");
    EmptyTripCurve curve;
    for (const auto& p : points)
        curve.points.emplace_back(p.demand_scale, p.metrics.trips_empty_per_h);
    std::sort(curve.points.begin(), curve.points.end());
    for (std::size_t i = 1; i < curve.points.size(); ++i)
        if (curve.points[i].second > curve.points[curve.argmax].second) curve.argmax = i;
    curve.interior_max = curve.argmax > 0 && curve.argmax + 1 < curve.points.size();
    return curve;
}

std::string export_events_csv(const EventLog& log) {
    std::string out = "time_s,kind,vehicle_id,group_id,node_id,segment_id,detail\n";
    auto id_col = [](std::int64_t v) { return v < 0 ? std::string() : std::to_string(v); };
    for (const auto& r : log.records()) {
        out += fmt_num(r.time_s);
        out += ',';
        out += event_kind_name(r.kind);
        out += ',';
        out += id_col(r.vehicle_id);
        out += ',';
        out += id_col(r.group_id);
        out += ',';
        out += id_col(r.node_id);
        out += ',';
        out += id_col(r.segment_id);
        out += ',';
        out += r.detail;
        out += '\n';
    }
    return out;
}

std::string export_metrics_csv(const std::vector<std::pair<double, MetricsReport>>& rows) {
    std::string out =
        "demand_scale,trips_full_per_h,trips_empty_per_h,empty_call,empty_expel,empty_withdraw,"
        "empty_balance,wait_mean_s,wait_p95_s,queue_mean,vkm_full,vkm_empty,saturated\n";
    for (const auto& [scale, m] : rows) {
        out += fmt_num(scale);
        out += ',' + fmt_num(m.trips_full_per_h);
        out += ',' + fmt_num(m.trips_empty_per_h);
        out += ',' + fmt_num(m.empty_call_per_h);
        out += ',' + fmt_num(m.empty_expel_per_h);
        out += ',' + fmt_num(m.empty_withdraw_per_h);
        out += ',' + fmt_num(m.empty_balance_per_h);
        out += ',' + fmt_num(m.wait_mean_s);
        out += ',' + fmt_num(m.wait_p95_s);
        out += ',' + fmt_num(m.queue_mean);
        out += ',' + fmt_num(m.vkm_full);
        out += ',' + fmt_num(m.vkm_empty);
        out += ',';
        out += m.saturated ? "1" : "0";
        out += '\n';
    }
    return out;
}

}  // namespace prt
