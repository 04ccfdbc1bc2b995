#include "smpc/collision.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace smpc {

std::array<Eigen::Vector2d, 4> OrientedBox::corners() const {
    const Eigen::Vector2d f(std::cos(heading), std::sin(heading));
    const Eigen::Vector2d l(-f.y(), f.x());
    const Eigen::Vector2d hf = 0.5 * length * f;
    const Eigen::Vector2d hl = 0.5 * width * l;
    return {center + hf + hl, center - hf + hl, center - hf - hl, center + hf - hl};
}

OrientedBox zone_box(const ConflictZone& zone) {
    const Eigen::Vector2d size = zone.max_corner - zone.min_corner;
    return {0.5 * (zone.min_corner + zone.max_corner), 0.0, size.x(), size.y()};
}

namespace {

bool separated_along(const std::array<Eigen::Vector2d, 4>& a, const std::array<Eigen::Vector2d, 4>& b,
                     const Eigen::Vector2d& axis) {
    double amin = std::numeric_limits<double>::infinity(), amax = -amin;
    double bmin = amin, bmax = -amin;
    for (const auto& p : a) {
        const double t = axis.dot(p);
        amin = std::min(amin, t);
        amax = std::max(amax, t);
    }
    for (const auto& p : b) {
        const double t = axis.dot(p);
        bmin = std::min(bmin, t);
        bmax = std::max(bmax, t);
    }
    return amax < bmin || bmax < amin;
}

double point_segment_distance(const Eigen::Vector2d& p, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    const Eigen::Vector2d ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0.0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return (a + t * ab - p).norm();
}

}  // namespace

bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) {
    const auto ca = a.corners();
    const auto cb = b.corners();
    for (double h : {a.heading, b.heading}) {
        const Eigen::Vector2d f(std::cos(h), std::sin(h));
        const Eigen::Vector2d l(-f.y(), f.x());
        if (separated_along(ca, cb, f) || separated_along(ca, cb, l)) return false;
    }
    return true;
}

double box_distance(const OrientedBox& a, const OrientedBox& b) {
    if (boxes_overlap(a, b)) return 0.0;
    const auto ca = a.corners();
    const auto cb = b.corners();
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 4; ++i) {
        for (const auto& p : cb) best = std::min(best, point_segment_distance(p, ca[i], ca[(i + 1) % 4]));
        for (const auto& p : ca) best = std::min(best, point_segment_distance(p, cb[i], cb[(i + 1) % 4]));
    }
    return best;
}

}  // namespace smpc
