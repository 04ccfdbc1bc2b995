#include "doctest.h"

#include "smpc/path_geometry.hpp"

#include <cmath>
#include <limits>
#include <random>

using namespace smpc;

namespace {

constexpr double kPi = 3.14159265358979323846;

ReferencePath straight_path(double length = 100.0) {
    return ReferencePath({LineSegment{{0.0, 0.0}, 0.0, length}}, 10.0, 20.0);
}

TurnPathSpec small_turn() {
    TurnPathSpec spec;
    spec.start = {-60.0, -1.5};
    spec.turn_radius = 4.5;
    spec.approach_length = 60.0 - 3.0;  // turn starts at x = -3
    spec.exit_length = 50.0;
    return spec;
}

// Curvature of the circle through three nearby points (signed, left positive).
double three_point_curvature(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c) {
    const Eigen::Vector2d ab = b - a;
    const Eigen::Vector2d bc = c - b;
    const Eigen::Vector2d ac = c - a;
    const double cross = ab.x() * bc.y() - ab.y() * bc.x();
    return 2.0 * cross / (ab.norm() * bc.norm() * ac.norm());
}

}  // namespace

TEST_CASE("straight segments have zero curvature, including the far end") {
    const ReferencePath path = straight_path();
    CHECK(path.curvature_at(0.0) == 0.0);
    CHECK(path.curvature_at(37.3) == 0.0);
    CHECK(path.curvature_at(path.total_length()) == 0.0);
    CHECK_THROWS_AS(path.curvature_at(-0.1), std::domain_error);
    CHECK_THROWS_AS(path.curvature_at(100.1), std::domain_error);
}

TEST_CASE("arc-approximating Bezier has curvature near 1/R at its midpoint") {
    const ReferencePath path = make_turn_path(small_turn());
    REQUIRE(path.segment_count() == 3);
    const double mid = 0.5 * (path.segment_start_s(1) + path.segment_end_s(1));
    const double kappa = path.curvature_at(mid);
    CHECK(kappa == doctest::Approx(1.0 / 4.5).epsilon(0.15));

    // Independent check: circle through densely sampled neighbours.
    const double h = 1e-3;
    const double fd = three_point_curvature(path.point_at(mid - h), path.point_at(mid), path.point_at(mid + h));
    CHECK(kappa == doctest::Approx(fd).epsilon(1e-4));
}

TEST_CASE("curvature is bounded and continuous inside each segment") {
    const ReferencePath path = make_turn_path(small_turn());
    for (std::size_t i = 0; i < path.segment_count(); ++i) {
        double prev = path.curvature_at(path.segment_start_s(i) + 1e-6);
        for (double s = path.segment_start_s(i) + 0.01; s < path.segment_end_s(i) - 1e-6; s += 0.01) {
            const double k = path.curvature_at(s);
            CHECK(std::abs(k) <= path.max_abs_curvature() + 1e-9);
            CHECK(std::abs(k - prev) < 0.01);
            prev = k;
        }
    }
}

TEST_CASE("segment chain invariants") {
    const ReferencePath path = make_turn_path(small_turn());
    double sum = 0.0;
    for (std::size_t i = 0; i < path.segment_count(); ++i) {
        CHECK(path.segment_end_s(i) > path.segment_start_s(i));
        sum += path.segment_end_s(i) - path.segment_start_s(i);
    }
    CHECK(sum == doctest::Approx(path.total_length()).epsilon(1e-12));
    CHECK(0.0 <= path.intersection_entry_s());
    CHECK(path.intersection_entry_s() < path.intersection_exit_s());
    CHECK(path.intersection_exit_s() <= path.total_length());
    // The zone [-3,3]^2 is entered where the approach line crosses x = -3.
    CHECK(path.intersection_entry_s() == doctest::Approx(57.0).epsilon(1e-6));

    // Gap between segments is rejected.
    CHECK_THROWS_AS(ReferencePath({LineSegment{{0, 0}, 0.0, 10.0}, LineSegment{{10.1, 0}, 0.0, 10.0}}, 0.0, 1.0),
                    std::invalid_argument);
    // Kink is rejected.
    CHECK_THROWS_AS(ReferencePath({LineSegment{{0, 0}, 0.0, 10.0}, LineSegment{{10, 0}, 0.1, 10.0}}, 0.0, 1.0),
                    std::invalid_argument);
}

TEST_CASE("projection onto a straight segment") {
    const ReferencePath path = straight_path();
    const auto on = path.world_to_curvilinear({10.0, 0.0});
    CHECK(on.s == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(std::abs(on.d) < 1e-12);
    const auto left = path.world_to_curvilinear({30.0, 1.5});
    CHECK(left.s == doctest::Approx(30.0).epsilon(1e-12));
    CHECK(left.d == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(path.world_to_curvilinear({30.0, -2.0}).d == doctest::Approx(-2.0));
    CHECK_THROWS_AS(path.world_to_curvilinear({30.0, 25.0}), NoProjection);
    CHECK_FALSE(path.try_project({30.0, -25.0}).has_value());
}

TEST_CASE("curvilinear_to_world on a straight segment") {
    const ReferencePath path = straight_path();
    CHECK((path.curvilinear_to_world(0.0, 0.0) - Eigen::Vector2d(0, 0)).norm() < 1e-12);
    CHECK((path.curvilinear_to_world(42.0, 1.0) - Eigen::Vector2d(42.0, 1.0)).norm() < 1e-12);
}

TEST_CASE("equidistant point resolves to the smaller arc length") {
    // U-turn: two parallel straights 2R apart. A point midway between them,
    // well before the turn, is equally close to both.
    TurnPathSpec spec;
    spec.start = {0.0, 0.0};
    spec.approach_length = 50.0;
    spec.turn_radius = 6.0;
    spec.turn_angle = kPi;
    spec.exit_length = 50.0;
    spec.zone.min_corner = {49.0, -1.0};
    spec.zone.max_corner = {51.0, 1.0};
    const ReferencePath path = make_turn_path(spec);
    const Eigen::Vector2d p(20.0, 6.0);

    // Dense-sampling argmin with first-index tie-break.
    double best_s = 0.0;
    double best_d = std::numeric_limits<double>::infinity();
    for (double s = 0.0; s <= path.total_length(); s += 0.001) {
        const double d = (path.point_at(s) - p).norm();
        if (d < best_d - 1e-9) {
            best_d = d;
            best_s = s;
        }
    }
    const auto pose = path.world_to_curvilinear(p);
    CHECK(pose.s == doctest::Approx(best_s).epsilon(1e-5));
    CHECK(pose.s == doctest::Approx(20.0).epsilon(1e-9));
    CHECK(pose.d == doctest::Approx(6.0).epsilon(1e-9));
}

TEST_CASE("round trip over random poses near the turn") {
    const ReferencePath path = make_turn_path(TurnPathSpec{});
    const double d_max = 0.5 / path.max_abs_curvature();
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> us(0.5, path.total_length() - 0.5);
    std::uniform_real_distribution<double> ud(-0.99 * d_max, 0.99 * d_max);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const double s = us(rng);
        const double d = ud(rng);
        const auto q = path.world_to_curvilinear(path.curvilinear_to_world(s, d));
        worst = std::max({worst, std::abs(q.s - s), std::abs(q.d - d)});
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("projection idempotence and monotone consistency") {
    const ReferencePath path = make_turn_path(TurnPathSpec{});
    for (double s = 0.0; s <= path.total_length(); s += 0.37) {
        CHECK(std::abs(path.world_to_curvilinear(path.point_at(s)).d) < 1e-9);
    }
    double prev = -1.0;
    for (double s = 0.0; s <= path.total_length(); s += 0.25) {
        const double q = path.world_to_curvilinear(path.curvilinear_to_world(s, 0.4)).s;
        CHECK(q >= prev);
        prev = q;
    }
}

TEST_CASE("shipped turn geometry") {
    const ReferencePath path = make_turn_path(TurnPathSpec{});
    // Turn from the eastbound lane y = -1.5 into the northbound lane x = 1.5.
    CHECK((path.point_at(path.segment_end_s(1)) - Eigen::Vector2d(1.5, 7.5)).norm() < 1e-9);
    CHECK(path.world_to_curvilinear({-70.0, -1.5}).s == doctest::Approx(80.0));
    CHECK(path.heading_at(path.total_length()) == doctest::Approx(kPi / 2));
    CHECK(path.max_abs_curvature() < 1.0 / 7.27);
}

TEST_CASE("arc handle length") {
    CHECK(arc_handle_length(1.0, kPi / 2) == doctest::Approx(0.5522847498));
}
