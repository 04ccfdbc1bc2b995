#include "smpc/path_geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace smpc {

namespace {

constexpr int kBezierIntervals = 1024;
constexpr double kGridStep = 0.1;
constexpr double kInversionTol = 1e-9;
constexpr double kProjectionGradTol = 1e-9;

// 5-point Gauss-Legendre nodes and weights on [-1, 1].
constexpr std::array<double, 5> kGlNodes = {0.0, -0.5384693101056831, 0.5384693101056831,
                                            -0.9061798459386640, 0.9061798459386640};
constexpr std::array<double, 5> kGlWeights = {0.5688888888888889, 0.4786286704993665,
                                              0.4786286704993665, 0.2369268850561891,
                                              0.2369268850561891};

Eigen::Vector2d bezier_point(const BezierSegment& b, double t) {
    const double u = 1.0 - t;
    return u * u * u * b.ctrl[0] + 3.0 * u * u * t * b.ctrl[1] + 3.0 * u * t * t * b.ctrl[2] +
           t * t * t * b.ctrl[3];
}

Eigen::Vector2d bezier_d1(const BezierSegment& b, double t) {
    const double u = 1.0 - t;
    return 3.0 * u * u * (b.ctrl[1] - b.ctrl[0]) + 6.0 * u * t * (b.ctrl[2] - b.ctrl[1]) +
           3.0 * t * t * (b.ctrl[3] - b.ctrl[2]);
}

Eigen::Vector2d bezier_d2(const BezierSegment& b, double t) {
    return 6.0 * (1.0 - t) * (b.ctrl[2] - 2.0 * b.ctrl[1] + b.ctrl[0]) +
           6.0 * t * (b.ctrl[3] - 2.0 * b.ctrl[2] + b.ctrl[1]);
}

double cross2(const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return a.x() * b.y() - a.y() * b.x();
}

double speed_integral(const BezierSegment& b, double t0, double t1) {
    const double half = 0.5 * (t1 - t0);
    const double mid = 0.5 * (t1 + t0);
    double acc = 0.0;
    for (std::size_t i = 0; i < kGlNodes.size(); ++i) {
        acc += kGlWeights[i] * bezier_d1(b, mid + half * kGlNodes[i]).norm();
    }
    return acc * half;
}

Eigen::Vector2d unit(double angle) { return {std::cos(angle), std::sin(angle)}; }

Eigen::Vector2d left_normal(const Eigen::Vector2d& t) { return {-t.y(), t.x()}; }

Eigen::Vector2d segment_start_point(const PathSegment& seg) {
    if (const auto* line = std::get_if<LineSegment>(&seg)) return line->start;
    return std::get<BezierSegment>(seg).ctrl[0];
}

Eigen::Vector2d segment_end_point(const PathSegment& seg) {
    if (const auto* line = std::get_if<LineSegment>(&seg)) {
        return line->start + line->length * unit(line->heading);
    }
    return std::get<BezierSegment>(seg).ctrl[3];
}

Eigen::Vector2d segment_tangent(const PathSegment& seg, double t) {
    if (const auto* line = std::get_if<LineSegment>(&seg)) return unit(line->heading);
    return bezier_d1(std::get<BezierSegment>(seg), t).normalized();
}

}  // namespace

ReferencePath::ReferencePath(std::vector<PathSegment> segments, double intersection_entry_s,
                             double intersection_exit_s, double projection_corridor)
    : entry_s_(intersection_entry_s), exit_s_(intersection_exit_s), corridor_(projection_corridor) {
    if (segments.empty()) throw std::invalid_argument("reference path needs at least one segment");

    double s = 0.0;
    for (auto& shape : segments) {
        Piece piece;
        piece.shape = shape;
        piece.s_begin = s;
        if (const auto* line = std::get_if<LineSegment>(&shape)) {
            if (!(line->length > 0.0)) throw std::invalid_argument("line segment length must be > 0");
            piece.length = line->length;
        } else {
            const auto& bez = std::get<BezierSegment>(shape);
            piece.cum_length.resize(kBezierIntervals + 1, 0.0);
            for (int i = 0; i < kBezierIntervals; ++i) {
                const double t0 = static_cast<double>(i) / kBezierIntervals;
                const double t1 = static_cast<double>(i + 1) / kBezierIntervals;
                piece.cum_length[i + 1] = piece.cum_length[i] + speed_integral(bez, t0, t1);
            }
            piece.length = piece.cum_length.back();
            if (!(piece.length > 0.0)) throw std::invalid_argument("degenerate Bezier segment");
            const auto n_grid = static_cast<std::size_t>(std::ceil(piece.length / kGridStep)) + 1;
            piece.grid_param.resize(n_grid);
            for (std::size_t j = 0; j < n_grid; ++j) {
                const double target = std::min(piece.length, j * kGridStep);
                const auto it =
                    std::lower_bound(piece.cum_length.begin(), piece.cum_length.end(), target);
                const auto hi = static_cast<std::size_t>(
                    std::clamp<std::ptrdiff_t>(it - piece.cum_length.begin(), 1, kBezierIntervals));
                const double l0 = piece.cum_length[hi - 1];
                const double l1 = piece.cum_length[hi];
                const double frac = (l1 > l0) ? (target - l0) / (l1 - l0) : 0.0;
                piece.grid_param[j] = (static_cast<double>(hi - 1) + frac) / kBezierIntervals;
            }
            const auto abs_kappa = [&](double t) {
                const Eigen::Vector2d d1 = bezier_d1(bez, t);
                return std::abs(cross2(d1, bezier_d2(bez, t))) / std::pow(d1.norm(), 3);
            };
            int best_i = 0;
            for (int i = 0; i <= 200; ++i) {
                if (abs_kappa(i / 200.0) > abs_kappa(best_i / 200.0)) best_i = i;
            }
            // Golden-section refinement around the best sample.
            double lo = std::max(0.0, (best_i - 1) / 200.0);
            double hi = std::min(1.0, (best_i + 1) / 200.0);
            for (int iter = 0; iter < 60; ++iter) {
                const double m1 = hi - 0.6180339887498949 * (hi - lo);
                const double m2 = lo + 0.6180339887498949 * (hi - lo);
                if (abs_kappa(m1) < abs_kappa(m2)) lo = m1; else hi = m2;
            }
            max_abs_kappa_ = std::max({max_abs_kappa_, abs_kappa(best_i / 200.0), abs_kappa(0.5 * (lo + hi))});
        }
        s += piece.length;
        segments_.push_back(std::move(piece));
    }
    total_length_ = s;
    for (double cs = 0.0; cs < total_length_; cs += 1.0) coarse_s_.push_back(cs);
    coarse_s_.push_back(total_length_);
    for (double cs : coarse_s_) coarse_points_.push_back(evaluate(cs).point);

    for (std::size_t i = 0; i + 1 < segments_.size(); ++i) {
        const auto& cur = segments_[i].shape;
        const auto& next = segments_[i + 1].shape;
        if ((segment_end_point(cur) - segment_start_point(next)).norm() > 1e-9) {
            throw std::invalid_argument("path segments are not C0-continuous at segment " +
                                        std::to_string(i));
        }
        const Eigen::Vector2d t_end = segment_tangent(cur, 1.0);
        const Eigen::Vector2d t_start = segment_tangent(next, 0.0);
        const double mismatch =
            std::abs(std::atan2(cross2(t_end, t_start), t_end.dot(t_start)));
        if (mismatch > 1e-6) {
            throw std::invalid_argument("path segments are not C1-continuous at segment " +
                                        std::to_string(i));
        }
    }
    if (!(0.0 <= entry_s_ && entry_s_ < exit_s_ && exit_s_ <= total_length_)) {
        throw std::invalid_argument("intersection span must satisfy 0 <= entry < exit <= length");
    }
}

void ReferencePath::check_range(double s) const {
    if (!(s >= 0.0 && s <= total_length_)) {
        throw std::domain_error("arc length " + std::to_string(s) + " outside [0, " +
                                std::to_string(total_length_) + "]");
    }
}

std::size_t ReferencePath::piece_index(double s) const {
    auto it = std::upper_bound(segments_.begin(), segments_.end(), s,
                               [](double value, const Piece& p) { return value < p.s_begin; });
    if (it == segments_.begin()) return 0;
    return static_cast<std::size_t>(std::distance(segments_.begin(), it) - 1);
}

double ReferencePath::bezier_length_to(const Piece& piece, double t) const {
    const auto& bez = std::get<BezierSegment>(piece.shape);
    t = std::clamp(t, 0.0, 1.0);
    const int i = std::min(kBezierIntervals - 1, static_cast<int>(t * kBezierIntervals));
    const double t0 = static_cast<double>(i) / kBezierIntervals;
    return piece.cum_length[i] + speed_integral(bez, t0, t);
}

double ReferencePath::bezier_param(const Piece& piece, double local_s) const {
    const auto& bez = std::get<BezierSegment>(piece.shape);
    local_s = std::clamp(local_s, 0.0, piece.length);
    const double pos = local_s / kGridStep;
    const auto j = std::min(piece.grid_param.size() - 2, static_cast<std::size_t>(pos));
    const double frac = pos - static_cast<double>(j);
    double t = piece.grid_param[j] + frac * (piece.grid_param[j + 1] - piece.grid_param[j]);
    for (int iter = 0; iter < 30; ++iter) {
        const double err = bezier_length_to(piece, t) - local_s;
        if (std::abs(err) < kInversionTol) break;
        t = std::clamp(t - err / bezier_d1(bez, t).norm(), 0.0, 1.0);
    }
    return t;
}

ReferencePath::Evaluated ReferencePath::evaluate(double s) const {
    const Piece& piece = segments_[piece_index(s)];
    const double local = std::clamp(s - piece.s_begin, 0.0, piece.length);
    if (const auto* line = std::get_if<LineSegment>(&piece.shape)) {
        const Eigen::Vector2d dir = unit(line->heading);
        return {line->start + local * dir, dir, 0.0};
    }
    const auto& bez = std::get<BezierSegment>(piece.shape);
    const double t = bezier_param(piece, local);
    const Eigen::Vector2d d1 = bezier_d1(bez, t);
    const double speed = d1.norm();
    return {bezier_point(bez, t), d1 / speed, cross2(d1, bezier_d2(bez, t)) / (speed * speed * speed)};
}

double ReferencePath::curvature_at(double s) const {
    check_range(s);
    return evaluate(s).curvature;
}

Eigen::Vector2d ReferencePath::point_at(double s) const {
    check_range(s);
    return evaluate(s).point;
}

Eigen::Vector2d ReferencePath::tangent_at(double s) const {
    check_range(s);
    return evaluate(s).tangent;
}

double ReferencePath::heading_at(double s) const {
    const Eigen::Vector2d t = tangent_at(s);
    return std::atan2(t.y(), t.x());
}

Eigen::Vector2d ReferencePath::curvilinear_to_world(double s, double d) const {
    check_range(s);
    const Evaluated e = evaluate(s);
    return e.point + d * left_normal(e.tangent);
}

std::optional<CurvilinearPose> ReferencePath::try_project(const Eigen::Vector2d& p) const {
    // Coarse pass on a 1 m grid (segment boundaries included).
    const std::vector<double>& grid = coarse_s_;
    std::vector<double> dist(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) dist[i] = (coarse_points_[i] - p).norm();

    const auto gradient = [&](double s, Evaluated& e) {
        e = evaluate(s);
        return -(p - e.point).dot(e.tangent);
    };

    double best_s = 0.0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const bool left_ok = (i == 0) || dist[i] <= dist[i - 1];
        const bool right_ok = (i + 1 == grid.size()) || dist[i] <= dist[i + 1];
        if (!(left_ok && right_ok)) continue;

        double lo = (i == 0) ? grid[0] : grid[i - 1];
        double hi = (i + 1 == grid.size()) ? grid[i] : grid[i + 1];
        Evaluated e_lo, e_hi, e_mid;
        double g_lo = gradient(lo, e_lo);
        double g_hi = gradient(hi, e_hi);
        double s_star;
        if (g_lo >= 0.0) {
            s_star = lo;
        } else if (g_hi <= 0.0) {
            s_star = hi;
        } else {
            // Safeguarded Newton on the distance gradient.
            double s = grid[i];
            for (int iter = 0; iter < 100; ++iter) {
                const double g = gradient(s, e_mid);
                if (std::abs(g) < kProjectionGradTol) break;
                if (g < 0.0) lo = s; else hi = s;
                const double curv_term = 1.0 - e_mid.curvature * (p - e_mid.point).dot(left_normal(e_mid.tangent));
                double next = (curv_term > 0.0) ? s - g / curv_term : 0.5 * (lo + hi);
                if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
                if (hi - lo < 1e-14) break;
                s = next;
            }
            s_star = s;
        }
        const double dd = (evaluate(s_star).point - p).norm();
        if (dd < best_dist - 1e-9 || (std::abs(dd - best_dist) <= 1e-9 && s_star < best_s)) {
            best_dist = dd;
            best_s = s_star;
        }
    }

    if (best_dist > corridor_) return std::nullopt;
    const Evaluated e = evaluate(best_s);
    return CurvilinearPose{best_s, (p - e.point).dot(left_normal(e.tangent)),
                           std::atan2(e.tangent.y(), e.tangent.x())};
}

CurvilinearPose ReferencePath::world_to_curvilinear(const Eigen::Vector2d& p) const {
    auto pose = try_project(p);
    if (!pose) {
        throw NoProjection("point (" + std::to_string(p.x()) + ", " + std::to_string(p.y()) +
                           ") is outside the projection corridor");
    }
    return *pose;
}

std::optional<std::pair<double, double>> ReferencePath::zone_span(const ConflictZone& zone) const {
    constexpr double step = 0.05;
    std::optional<double> first, last;
    double prev = 0.0;
    bool prev_inside = zone.contains(evaluate(0.0).point);
    if (prev_inside) first = 0.0;
    const auto refine = [&](double a, double b, bool a_inside) {
        for (int i = 0; i < 60; ++i) {
            const double m = 0.5 * (a + b);
            if (zone.contains(evaluate(m).point) == a_inside) a = m; else b = m;
        }
        return 0.5 * (a + b);
    };
    for (double s = step; prev < total_length_; s += step) {
        s = std::min(s, total_length_);
        const bool inside = zone.contains(evaluate(s).point);
        if (inside && !prev_inside && !first) first = refine(prev, s, false);
        if (!inside && prev_inside) last = refine(prev, s, true);
        prev = s;
        prev_inside = inside;
    }
    if (!first) return std::nullopt;
    if (!last) last = total_length_;
    return std::make_pair(*first, *last);
}

double arc_handle_length(double radius, double sweep) {
    return 4.0 / 3.0 * std::tan(std::abs(sweep) / 4.0) * radius;
}

ReferencePath make_turn_path(const TurnPathSpec& spec) {
    const Eigen::Vector2d dir_in = unit(spec.start_heading);
    const double exit_heading = spec.start_heading + spec.turn_angle;
    const Eigen::Vector2d dir_out = unit(exit_heading);
    const double side = spec.turn_angle >= 0.0 ? 1.0 : -1.0;

    const Eigen::Vector2d p0 = spec.start + spec.approach_length * dir_in;
    const Eigen::Vector2d center = p0 + side * spec.turn_radius * left_normal(dir_in);
    const Eigen::Vector2d p3 = center - side * spec.turn_radius * left_normal(dir_out);
    const double handle = arc_handle_length(spec.turn_radius, spec.turn_angle);

    BezierSegment turn;
    turn.ctrl = {p0, p0 + handle * dir_in, p3 - handle * dir_out, p3};

    std::vector<PathSegment> segs{LineSegment{spec.start, spec.start_heading, spec.approach_length},
                                  turn,
                                  LineSegment{p3, exit_heading, spec.exit_length}};
    // Build once without a zone to locate the zone span on the centerline.
    ReferencePath probe(segs, 0.0, 1e-9);
    const auto span = probe.zone_span(spec.zone);
    if (!span) throw std::invalid_argument("reference path never enters the conflict zone");
    return ReferencePath(std::move(segs), span->first, span->second);
}

}  // namespace smpc
