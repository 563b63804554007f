#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <utility>
#include <vector>

namespace tsdfslam {

// Multiply-XOR hash of an integer 3D coordinate. Constants are the classic
// large primes used for spatial hashing; the table index is the hash masked
// to the (power-of-two) capacity.
inline std::uint64_t HashCoord(const Eigen::Vector3i& c) {
    const std::uint64_t hx = static_cast<std::uint32_t>(c.x()) * std::uint64_t{73856093u};
    const std::uint64_t hy = static_cast<std::uint32_t>(c.y()) * std::uint64_t{19349669u};
    const std::uint64_t hz = static_cast<std::uint32_t>(c.z()) * std::uint64_t{83492791u};
    return hx ^ hy ^ hz;
}

// Open-addressed hash map from integer 3D coordinates to 32-bit handles.
// Linear probing; the table grows when the load factor passes 0.75.
// Entries cannot be removed (allocated blocks persist).
class CoordHashMap {
  public:
    explicit CoordHashMap(std::size_t initial_capacity = 1024) {
        std::size_t cap = 16;
        while (cap < initial_capacity) cap <<= 1;
        slots_.resize(cap);
    }

    std::size_t size() const { return size_; }
    std::size_t capacity() const { return slots_.size(); }

    // Returns the slot index the coordinate probes to (occupied or not).
    std::size_t ProbeSlot(const Eigen::Vector3i& coord) const {
        std::size_t idx = HashCoord(coord) & (slots_.size() - 1);
        while (slots_[idx].used && slots_[idx].coord != coord) {
            idx = (idx + 1) & (slots_.size() - 1);
        }
        return idx;
    }

    const std::uint32_t* Find(const Eigen::Vector3i& coord) const {
        const std::size_t idx = ProbeSlot(coord);
        return slots_[idx].used ? &slots_[idx].value : nullptr;
    }

    // Inserts coord -> value; returns {stored value, true} on insertion or
    // {existing value, false} if the coordinate was already present.
    std::pair<std::uint32_t, bool> Insert(const Eigen::Vector3i& coord, std::uint32_t value) {
        if ((size_ + 1) * 4 > slots_.size() * 3) Grow();
        const std::size_t idx = ProbeSlot(coord);
        if (slots_[idx].used) return {slots_[idx].value, false};
        slots_[idx] = Slot{coord, value, true};
        ++size_;
        return {value, true};
    }

    template <typename Fn>
    void ForEach(Fn&& fn) const {
        for (const Slot& s : slots_) {
            if (s.used) fn(s.coord, s.value);
        }
    }

  private:
    struct Slot {
        Eigen::Vector3i coord = Eigen::Vector3i::Zero();
        std::uint32_t value = 0;
        bool used = false;
    };

    void Grow() {
        std::vector<Slot> old = std::move(slots_);
        slots_.assign(old.size() * 2, Slot{});
        for (const Slot& s : old) {
            if (!s.used) continue;
            std::size_t idx = HashCoord(s.coord) & (slots_.size() - 1);
            while (slots_[idx].used) idx = (idx + 1) & (slots_.size() - 1);
            slots_[idx] = s;
        }
    }

    std::vector<Slot> slots_;
    std::size_t size_ = 0;
};

}  // namespace tsdfslam
