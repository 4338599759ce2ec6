#include "pendcbc/history.hpp"

#include <cmath>

namespace pendcbc {

HistorySegment::HistorySegment(double start_time, double dt,
                               std::size_t capacity)
    : start_time_(start_time), dt_(dt), ring_(capacity) {
    if (!(dt > 0.0) || capacity < 4)
        throw std::invalid_argument("HistorySegment: bad grid");
}

void HistorySegment::append(const HistoryRecord& rec) {
    HistoryRecord& slot = ring_[static_cast<std::size_t>(
        next_index_ % static_cast<std::int64_t>(ring_.size()))];
    slot = rec;
    if (std::isnan(slot.phi_ddot_in)) slot.phi_ddot_in = slot.phi_ddot;
    if (std::isnan(slot.ref_in)) slot.ref_in = slot.ref;
    if (std::isnan(slot.ref_dot_in)) slot.ref_dot_in = slot.ref_dot;
    ++next_index_;
    if (count_ < ring_.size()) ++count_;
}

std::int64_t HistorySegment::newest_index() const {
    if (count_ == 0) throw std::out_of_range("HistorySegment: empty");
    return next_index_ - 1;
}

double HistorySegment::newest_time() const { return time_of(newest_index()); }

double HistorySegment::oldest_time() const {
    return time_of(newest_index() - static_cast<std::int64_t>(count_) + 1);
}

double HistorySegment::span() const {
    return dt_ * static_cast<double>(count_ - 1);
}

const HistoryRecord& HistorySegment::node(std::int64_t index) const {
    const std::int64_t newest = newest_index();
    if (index > newest || index <= newest - static_cast<std::int64_t>(count_))
        throw std::out_of_range("HistorySegment: node outside retained window");
    return ring_[static_cast<std::size_t>(index %
                                          static_cast<std::int64_t>(ring_.size()))];
}

HistoryRecord& HistorySegment::mutable_newest() {
    return ring_[static_cast<std::size_t>(newest_index() %
                                          static_cast<std::int64_t>(ring_.size()))];
}

std::int64_t HistorySegment::floor_index(double t) const {
    return static_cast<std::int64_t>(std::floor((t - start_time_) / dt_));
}

HistorySegment::Cell HistorySegment::locate(double t) const {
    const std::int64_t newest = newest_index();
    const std::int64_t oldest = newest - static_cast<std::int64_t>(count_) + 1;
    // Tolerate a half-ulp of drift at the window edges.
    const double eps = 1e-9 * dt_;
    if (t < time_of(oldest) - eps || t > time_of(newest) + eps)
        throw std::out_of_range("HistorySegment: lookup outside history span");
    std::int64_t i = floor_index(t);
    if (i < oldest) i = oldest;
    if (i >= newest) i = newest - 1;
    double s = (t - time_of(i)) / dt_;
    if (s < 1e-12) return {&node(i), &node(i + 1), -1.0};
    if (s > 1.0 - 1e-12) {
        const HistoryRecord& hit = node(i + 1);
        return {&hit, &hit, -1.0};
    }
    return {&node(i), &node(i + 1), s};
}

double hermite(double s, double y0, double m0, double y1, double m1) {
    const double s2 = s * s, s3 = s2 * s;
    return (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * m0 +
           (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * m1;
}

double HistorySegment::phi(double t) const {
    const Cell c = locate(t);
    if (c.s < 0.0) return c.a->phi;
    return hermite(c.s, c.a->phi, dt_ * c.a->phi_dot, c.b->phi,
                   dt_ * c.b->phi_dot);
}

double HistorySegment::phi_dot(double t) const {
    const Cell c = locate(t);
    if (c.s < 0.0) return c.a->phi_dot;
    // Slope channels: cell content arrived at b, so b contributes its
    // arrival acceleration; a contributes the departure one.
    return hermite(c.s, c.a->phi_dot, dt_ * c.a->phi_ddot, c.b->phi_dot,
                   dt_ * c.b->phi_ddot_in);
}

double HistorySegment::ref(double t, Side side) const {
    const Cell c = locate(t);
    if (c.s < 0.0) return side == Side::left ? c.a->ref_in : c.a->ref;
    return hermite(c.s, c.a->ref, dt_ * c.a->ref_dot, c.b->ref_in,
                   dt_ * c.b->ref_dot_in);
}

double HistorySegment::ref_dot(double t, Side side) const {
    const Cell c = locate(t);
    if (c.s < 0.0) return side == Side::left ? c.a->ref_dot_in : c.a->ref_dot;
    // No stored second derivative for the filtered reference; fall back to
    // the cubic slope of the ref channel itself.
    const double s = c.s, s2 = s * s;
    const double d = (6.0 * s2 - 6.0 * s) * c.a->ref +
                     (3.0 * s2 - 4.0 * s + 1.0) * dt_ * c.a->ref_dot +
                     (-6.0 * s2 + 6.0 * s) * c.b->ref_in +
                     (3.0 * s2 - 2.0 * s) * dt_ * c.b->ref_dot_in;
    return d / dt_;
}

}  // namespace pendcbc
