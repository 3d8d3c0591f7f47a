#include "prtsim/station.hpp"

#include <algorithm>
#include <stdexcept>

namespace prt {

int StationHouse::free_berths() const {
    if (m_spec.layout == StationLayout::InLine)
        return m_spec.berths - static_cast<int>(m_line.size());
    int n = 0;
    for (int v : m_stub)
        if (v < 0) ++n;
    return n;
}

int StationHouse::free_entry_slots() const {
    return m_spec.entry_buffer - static_cast<int>(m_entry.size());
}

int StationHouse::free_exit_slots() const {
    return m_spec.exit_buffer - static_cast<int>(m_exit.size());
}

int StationHouse::admittable_slots() const {
    return free_berths() + free_entry_slots() - m_reserved;
}

void StationHouse::release_reservation() {
    if (m_reserved <= 0) throw std::logic_error("no station reservation to release");
    --m_reserved;
}

Placement StationHouse::admit(int vehicle, bool reserved) {
    // The reservation is spent only on success; a refused vehicle keeps its
    // claim and tries again once something physically frees up.
    if (free_berths() > 0) {
        if (reserved) release_reservation();
        if (m_spec.layout == StationLayout::InLine) {
            m_line.push_back(vehicle);
        } else {
            for (auto& slot : m_stub) {
                if (slot < 0) {
                    slot = vehicle;
                    break;
                }
            }
        }
        return Placement::Berth;
    }
    if (free_entry_slots() > 0) {
        if (reserved) release_reservation();
        m_entry.push_back(vehicle);
        return Placement::EntryBuffer;
    }
    return Placement::Refused;
}

std::optional<int> StationHouse::next_berth_index() const {
    if (free_berths() <= 0) return std::nullopt;
    if (m_spec.layout == StationLayout::InLine) {
        // Occupied berths pack towards the exit; the next arrival stops just
        // behind them.
        return m_spec.berths - 1 - static_cast<int>(m_line.size());
    }
    for (int i = 0; i < m_spec.berths; ++i)
        if (m_stub[static_cast<std::size_t>(i)] < 0) return i;
    return std::nullopt;
}

std::optional<int> StationHouse::advance_entry() {
    if (m_entry.empty() || free_berths() <= 0) return std::nullopt;
    int vehicle = m_entry.front();
    m_entry.pop_front();
    if (m_spec.layout == StationLayout::InLine) {
        m_line.push_back(vehicle);
    } else {
        for (auto& slot : m_stub) {
            if (slot < 0) {
                slot = vehicle;
                break;
            }
        }
    }
    return vehicle;
}

std::vector<int> StationHouse::departure_eligible() const {
    std::vector<int> out;
    if (m_spec.layout == StationLayout::InLine) {
        if (!m_line.empty()) out.push_back(m_line.front());
    } else {
        for (int v : m_stub)
            if (v >= 0) out.push_back(v);
    }
    return out;
}

void StationHouse::move_to_exit(int vehicle) {
    if (m_spec.layout == StationLayout::InLine) {
        if (m_line.empty() || m_line.front() != vehicle)
            throw std::logic_error("vehicle is not at the head of the berth line");
        m_line.pop_front();
    } else {
        auto it = std::find(m_stub.begin(), m_stub.end(), vehicle);
        if (it == m_stub.end()) throw std::logic_error("vehicle is not berthed here");
        *it = -1;
    }
    m_exit.push_back(vehicle);
}

void StationHouse::remove(int vehicle) {
    auto drop = [&](std::deque<int>& q) {
        auto it = std::find(q.begin(), q.end(), vehicle);
        if (it == q.end()) return false;
        q.erase(it);
        return true;
    };
    if (drop(m_exit) || drop(m_entry)) return;
    if (m_spec.layout == StationLayout::InLine) {
        if (drop(m_line)) return;
    } else {
        auto it = std::find(m_stub.begin(), m_stub.end(), vehicle);
        if (it != m_stub.end()) {
            *it = -1;
            return;
        }
    }
    throw std::logic_error("vehicle is not inside this station");
}

bool StationHouse::in_exit_buffer(int vehicle) const {
    return std::find(m_exit.begin(), m_exit.end(), vehicle) != m_exit.end();
}

std::optional<int> StationHouse::exit_buffer_head() const {
    if (m_exit.empty()) return std::nullopt;
    return m_exit.front();
}

bool StationHouse::berthed(int vehicle) const {
    if (m_spec.layout == StationLayout::InLine)
        return std::find(m_line.begin(), m_line.end(), vehicle) != m_line.end();
    return std::find(m_stub.begin(), m_stub.end(), vehicle) != m_stub.end();
}

bool StationHouse::in_entry_buffer(int vehicle) const {
    return std::find(m_entry.begin(), m_entry.end(), vehicle) != m_entry.end();
}

std::vector<int> StationHouse::occupants() const {
    std::vector<int> out(m_entry.begin(), m_entry.end());
    if (m_spec.layout == StationLayout::InLine) {
        out.insert(out.end(), m_line.begin(), m_line.end());
    } else {
        for (int v : m_stub)
            if (v >= 0) out.push_back(v);
    }
    out.insert(out.end(), m_exit.begin(), m_exit.end());
    return out;
}

void CapacitorPark::release_reservation() {
    if (m_reserved <= 0) throw std::logic_error("no capacitor reservation to release");
    --m_reserved;
}

bool CapacitorPark::park(int vehicle, bool reserved) {
    if (static_cast<int>(m_parked.size()) >= m_places) return false;
    if (reserved) release_reservation();
    m_parked.push_back(vehicle);
    return true;
}

void CapacitorPark::remove(int vehicle) {
    auto it = std::find(m_parked.begin(), m_parked.end(), vehicle);
    if (it == m_parked.end()) throw std::logic_error("vehicle is not parked here");
    m_parked.erase(it);
}

bool CapacitorPark::parked(int vehicle) const {
    return std::find(m_parked.begin(), m_parked.end(), vehicle) != m_parked.end();
}

}  // namespace prt
