#pragma once

#include <Eigen/Core>

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace smpc {

/// Straight piece of the reference path.
struct LineSegment {
    Eigen::Vector2d start;
    double heading = 0.0;  ///< [rad], world frame
    double length = 0.0;   ///< [m]
};

/// Cubic Bézier piece of the reference path, four control points in world coordinates.
struct BezierSegment {
    std::array<Eigen::Vector2d, 4> ctrl;
};

using PathSegment = std::variant<LineSegment, BezierSegment>;

/// Road-aligned pose of a world point relative to the reference path.
struct CurvilinearPose {
    double s = 0.0;               ///< arc length along the path [m]
    double d = 0.0;               ///< lateral offset, left positive [m]
    double heading_of_path = 0.0; ///< path tangent angle at s [rad]
};

/// Thrown when a world point lies outside the projection corridor of the path.
class NoProjection : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Axis-aligned rectangle in world coordinates, used for the intersection conflict zone.
struct ConflictZone {
    Eigen::Vector2d min_corner{-3.0, -3.0};
    Eigen::Vector2d max_corner{3.0, 3.0};

    bool contains(const Eigen::Vector2d& p) const {
        return p.x() >= min_corner.x() && p.x() <= max_corner.x() && p.y() >= min_corner.y() &&
               p.y() <= max_corner.y();
    }
};

/**
 * @brief Fixed reference path of the ego vehicle: an ordered chain of line and
 * cubic Bézier segments, parameterized by arc length.
 *
 * Bézier arc length is tabulated on a 0.1 m grid at construction; queries
 * invert the table and refine with Newton iterations on the exact arc length,
 * so curvature_at() and point_at() are O(1) per call. Immutable after
 * construction and safe for concurrent reads.
 */
class ReferencePath {
public:
    ReferencePath(std::vector<PathSegment> segments, double intersection_entry_s,
                  double intersection_exit_s, double projection_corridor = 20.0);

    double total_length() const { return total_length_; }
    double intersection_entry_s() const { return entry_s_; }
    double intersection_exit_s() const { return exit_s_; }
    double projection_corridor() const { return corridor_; }
    std::size_t segment_count() const { return segments_.size(); }
    const PathSegment& segment(std::size_t i) const { return segments_[i].shape; }
    double segment_start_s(std::size_t i) const { return segments_[i].s_begin; }
    double segment_end_s(std::size_t i) const { return segments_[i].s_begin + segments_[i].length; }

    /// Signed curvature at s. Throws std::domain_error outside [0, total_length].
    double curvature_at(double s) const;
    Eigen::Vector2d point_at(double s) const;
    Eigen::Vector2d tangent_at(double s) const;
    double heading_at(double s) const;
    double max_abs_curvature() const { return max_abs_kappa_; }

    /// Closest-point projection; smallest s wins ties. Throws NoProjection if |d| exceeds the corridor.
    CurvilinearPose world_to_curvilinear(const Eigen::Vector2d& p) const;
    std::optional<CurvilinearPose> try_project(const Eigen::Vector2d& p) const;

    Eigen::Vector2d curvilinear_to_world(double s, double d) const;
    Eigen::Vector2d curvilinear_to_world(const CurvilinearPose& pose) const {
        return curvilinear_to_world(pose.s, pose.d);
    }

    /// Arc-length range over which the centerline lies inside the zone (entry, exit).
    std::optional<std::pair<double, double>> zone_span(const ConflictZone& zone) const;

private:
    struct Evaluated {
        Eigen::Vector2d point;
        Eigen::Vector2d tangent;
        double curvature;
    };

    struct Piece {
        PathSegment shape;
        double s_begin = 0.0;
        double length = 0.0;
        // Bézier only: cumulative arc length at uniform parameter samples and
        // a 0.1 m grid mapping arc length to a parameter guess.
        std::vector<double> cum_length;
        std::vector<double> grid_param;
    };

    std::size_t piece_index(double s) const;
    Evaluated evaluate(double s) const;
    double bezier_param(const Piece& piece, double local_s) const;
    double bezier_length_to(const Piece& piece, double t) const;
    void check_range(double s) const;

    std::vector<Piece> segments_;
    double total_length_ = 0.0;
    double entry_s_ = 0.0;
    double exit_s_ = 0.0;
    double corridor_ = 20.0;
    double max_abs_kappa_ = 0.0;
    std::vector<double> coarse_s_;
    std::vector<Eigen::Vector2d> coarse_points_;
};

/// Handle length that makes a cubic Bézier approximate a circular arc of the given radius and sweep.
double arc_handle_length(double radius, double sweep);

/**
 * Builds line → Bézier left/right turn → line. The Bézier ends lie on the
 * incoming and outgoing lane centers and its inner control points sit on the
 * lane tangents at the circular-arc handle length.
 */
struct TurnPathSpec {
    Eigen::Vector2d start{-150.0, -1.5};
    double start_heading = 0.0;
    double approach_length = 142.5;
    double turn_radius = 9.0;
    double turn_angle = 1.5707963267948966;  ///< positive = left turn
    double exit_length = 100.0;
    ConflictZone zone;
};

ReferencePath make_turn_path(const TurnPathSpec& spec);

}  // namespace smpc
