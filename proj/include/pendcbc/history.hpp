#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace pendcbc {

/// One stored sample of the running experiment. Time is implicit: sample i
/// lives at start_time + i*dt. Derivative channels exist so every lookup can
/// interpolate with a matching Hermite pair.
///
/// When the feedback law or its inputs switch at a node (control turning on,
/// a parameter stepped between runs), the acceleration and the filter trace
/// jump there. The *_in fields hold the arrival (left) limits for such nodes;
/// interpolation over the cell ending at a node reads the arrival values,
/// the cell starting there reads the departure ones. Leaving an *_in field
/// NaN means "no jump": append() copies the departure value over.
struct HistoryRecord {
    double phi = 0.0;
    double phi_dot = 0.0;
    double phi_ddot = 0.0;
    double ref = 0.0;      // filtered reference produced by the delay block
    double ref_dot = 0.0;
    double u = 0.0;
    double torque = 0.0;
    double phi_ddot_in = std::numeric_limits<double>::quiet_NaN();
    double ref_in = std::numeric_limits<double>::quiet_NaN();
    double ref_dot_in = std::numeric_limits<double>::quiet_NaN();
};

/// Which one-sided limit an exact-node lookup should serve. Integration
/// stages that close a step at a node want the left limit; everything else
/// wants the value the experiment serves going forward.
enum class Side { left, right };

/// Fixed-capacity ring over a uniform time grid. Appends must arrive in
/// order; lookups anywhere between the oldest retained node and the newest
/// one interpolate with cubic Hermite polynomials (exact at the nodes).
/// Asking outside that window throws: a delay block that underruns its
/// history is a logic error, not a recoverable condition.
class HistorySegment {
  public:
    HistorySegment(double start_time, double dt, std::size_t capacity);

    void append(const HistoryRecord& rec);

    double dt() const { return dt_; }
    std::size_t size() const { return count_; }
    std::int64_t newest_index() const;
    double newest_time() const;
    double oldest_time() const;
    /// Time span currently covered by retained samples.
    double span() const;

    const HistoryRecord& node(std::int64_t index) const;
    const HistoryRecord& newest() const { return node(newest_index()); }
    /// Writable access for refreshing the newest node's departure values
    /// after an input switch.
    HistoryRecord& mutable_newest();

    double phi(double t) const;
    double phi_dot(double t) const;
    double ref(double t, Side side = Side::right) const;
    double ref_dot(double t, Side side = Side::right) const;

    /// Nearest node index at or below time t.
    std::int64_t floor_index(double t) const;
    double time_of(std::int64_t index) const { return start_time_ + dt_ * static_cast<double>(index); }

  private:
    struct Cell {
        const HistoryRecord* a;
        const HistoryRecord* b;
        double s;      // position in [0,1); negative means exact hit on a
    };
    Cell locate(double t) const;

    double start_time_;
    double dt_;
    std::vector<HistoryRecord> ring_;
    std::int64_t next_index_ = 0;  // absolute index of the next append
    std::size_t count_ = 0;
};

/// Cubic Hermite on [0,1] with end values y0,y1 and end slopes m0,m1 given
/// per unit of s (already scaled by the cell width).
double hermite(double s, double y0, double m0, double y1, double m1);

}  // namespace pendcbc
