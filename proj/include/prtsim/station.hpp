#pragma once

#include <deque>
#include <optional>
#include <vector>

#include "prtsim/network.hpp"
#include "prtsim/types.hpp"

namespace prt {

/// Where an admitted vehicle ended up.
enum class Placement { Berth, EntryBuffer, Refused };

/// Off-track interior of one station: entry buffer, berth row, exit buffer,
/// and the waiting-group queue. Both engines drive the same structure; only
/// the clocks differ. InLine berths form a strict FIFO (a vehicle can leave
/// only once every earlier arrival has left); stub berths are independent
/// slots that pay an extra exit delay instead.
class StationHouse {
public:
    StationHouse() = default;
    explicit StationHouse(StationSpec spec) : m_spec(spec) {
        if (m_spec.layout == StationLayout::StubBerths)
            m_stub.assign(static_cast<std::size_t>(m_spec.berths), -1);
    }

    const StationSpec& spec() const { return m_spec; }

    int free_berths() const;
    int free_entry_slots() const;
    int free_exit_slots() const;
    /// Track capacity still open for approaching vehicles (berths + entry
    /// buffer, net of reservations).
    int admittable_slots() const;

    int reservations() const { return m_reserved; }
    void reserve() { ++m_reserved; }
    void release_reservation();

    /// Admission at the node point. A reservation made during approach is
    /// consumed here. Returns where the vehicle was placed.
    Placement admit(int vehicle, bool reserved);

    /// Berth index an entering vehicle would take right now, or nullopt when
    /// only buffer/refusal is possible. InLine counts the deepest free
    /// position; stub layout the lowest free index.
    std::optional<int> next_berth_index() const;

    /// Head of the entry buffer moves into a freed berth. Returns the
    /// vehicle id, or nullopt when nothing can advance.
    std::optional<int> advance_entry();

    /// Vehicles currently allowed to begin departing (FIFO head for InLine,
    /// every berthed vehicle for stub layout), in departure order.
    std::vector<int> departure_eligible() const;

    /// Take `vehicle` out of its berth towards the exit buffer. Caller must
    /// have checked eligibility and exit-buffer space.
    void move_to_exit(int vehicle);
    /// Remove `vehicle` from the house entirely (it entered the track).
    void remove(int vehicle);

    bool in_exit_buffer(int vehicle) const;
    std::optional<int> exit_buffer_head() const;
    bool berthed(int vehicle) const;
    bool in_entry_buffer(int vehicle) const;
    /// Every vehicle inside, entry buffer first, then berths, then exit.
    std::vector<int> occupants() const;

    std::deque<PassengerGroup>& queue() { return m_queue; }
    const std::deque<PassengerGroup>& queue() const { return m_queue; }

private:
    StationSpec m_spec;
    std::deque<int> m_entry;        // FIFO towards the berths
    std::deque<int> m_line;         // InLine berth row, front departs first
    std::vector<int> m_stub;        // StubBerths slots, -1 when free
    std::deque<int> m_exit;         // FIFO towards the track
    std::deque<PassengerGroup> m_queue;
    int m_reserved = 0;
};

/// Capacitor interior: anonymous parking places, no passengers.
class CapacitorPark {
public:
    CapacitorPark() = default;
    explicit CapacitorPark(int places) : m_places(places) {}

    int places() const { return m_places; }
    int free_places() const { return m_places - static_cast<int>(m_parked.size()) - m_reserved; }
    int parked_count() const { return static_cast<int>(m_parked.size()); }

    void reserve() { ++m_reserved; }
    void release_reservation();

    bool park(int vehicle, bool reserved);  // false when genuinely full
    void remove(int vehicle);
    bool parked(int vehicle) const;
    const std::vector<int>& occupants() const { return m_parked; }

private:
    int m_places = 0;
    int m_reserved = 0;
    std::vector<int> m_parked;  // arrival order
};

}  // namespace prt
