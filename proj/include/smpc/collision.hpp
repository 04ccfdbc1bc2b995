#pragma once

#include "smpc/path_geometry.hpp"

#include <Eigen/Core>

#include <array>

namespace smpc {

/// Rectangle of given length (along heading) and width centered at `center`.
struct OrientedBox {
    Eigen::Vector2d center = Eigen::Vector2d::Zero();
    double heading = 0.0;
    double length = 0.0;
    double width = 0.0;

    std::array<Eigen::Vector2d, 4> corners() const;
};

OrientedBox zone_box(const ConflictZone& zone);

/// Separating-axis test; touching boxes count as overlapping.
bool boxes_overlap(const OrientedBox& a, const OrientedBox& b);

/// Euclidean distance between two boxes, 0 when they overlap.
double box_distance(const OrientedBox& a, const OrientedBox& b);

}  // namespace smpc
