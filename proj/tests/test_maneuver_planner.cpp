#include "doctest.h"

#include "oracles.hpp"
#include "smpc/maneuver_planner.hpp"
#include "smpc/scenario.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

using namespace smpc;

namespace {

constexpr double kPi = 3.14159265358979323846;

ReferencePath straight_road() { return ReferencePath({LineSegment{{0.0, 0.0}, 0.0, 600.0}}, 500.0, 510.0); }

Agent crossing_ped() {
    Agent a;
    a.id = "p";
    a.kind = AgentKind::Pedestrian;
    a.ped.noise_cov = Eigen::Vector2d(0.05, 0.2).asDiagonal();
    return a;
}

Agent lane_tv(const std::string& id, double heading, double lateral_ref, double speed) {
    Agent a;
    a.id = id;
    a.tv.lane_heading = heading;
    a.tv.lateral_ref = lateral_ref;
    a.tv.speed_ref = speed;
    a.tv.K << 0, -0.55, 0, 0, 0, 0, -0.63, -1.15;
    a.tv.K_H << 0, -0.34, 0, 0, 0, 0, -0.21, -0.67;
    a.tv.noise_cov = Eigen::Vector2d(0.15, 0.03).asDiagonal();
    return a;
}

}  // namespace

TEST_CASE("no agents at the reference speed hold the reference speed") {
    const HighLevelConfig cfg;
    const ManeuverPlan plan = enumerate_and_solve(0.0, cfg.v_ref, {}, cfg);
    REQUIRE(plan.nu.size() == static_cast<std::size_t>(cfg.N_H));
    for (double v : plan.nu) CHECK(v == doctest::Approx(cfg.v_ref).epsilon(1e-9));
    CHECK(plan.objective == doctest::Approx(0.0).scale(1.0).epsilon(1e-9));
    CHECK(!plan.degraded);
    CHECK(plan.branch.empty());
}

TEST_CASE("no agents: profile solves the tridiagonal normal equations") {
    HighLevelConfig cfg;
    for (double v0 : {0.0, 4.0, 12.5}) {
        const ManeuverPlan plan = enumerate_and_solve(10.0, v0, {}, cfg);
        const int n = cfg.N_H;
        Eigen::MatrixXd D = Eigen::MatrixXd::Identity(n, n);
        for (int h = 1; h < n; ++h) D(h, h - 1) = -1.0;
        const Eigen::MatrixXd M = D.transpose() * D + cfg.r_H * Eigen::MatrixXd::Identity(n, n);
        Eigen::VectorXd rhs = Eigen::VectorXd::Constant(n, cfg.r_H * cfg.v_ref);
        rhs(0) += v0;
        const Eigen::VectorXd nu = M.ldlt().solve(rhs);
        for (int h = 0; h < n; ++h) CHECK(plan.nu[static_cast<std::size_t>(h)] == doctest::Approx(nu(h)).epsilon(1e-9));
        CHECK(plan.objective == doctest::Approx(speed_profile_cost(plan.nu, v0, cfg)).epsilon(1e-9));
        REQUIRE(plan.s.size() == static_cast<std::size_t>(n) + 1);
        CHECK(plan.s[0] == 10.0);
        for (int h = 0; h < n; ++h)
            CHECK(plan.s[static_cast<std::size_t>(h) + 1] ==
                  doctest::Approx(plan.s[static_cast<std::size_t>(h)] + cfg.T_H * plan.nu[static_cast<std::size_t>(h)]));
    }
}

TEST_CASE("averaging factor and configuration checks") {
    HighLevelConfig cfg;
    CHECK(cfg.averaging_factor(0.2) == 10);
    CHECK(cfg.averaging_factor(0.5) == 4);
    CHECK_THROWS_AS(cfg.averaging_factor(0.3), std::invalid_argument);
    CHECK_NOTHROW(cfg.validate(0.2, 10));
    cfg.N_H = 1;
    cfg.T_H = 1.0;
    CHECK_THROWS_AS(cfg.validate(0.2, 10), std::invalid_argument);
    cfg = {};
    cfg.beta_ped = 0.0;
    CHECK_THROWS_AS(cfg.validate(0.2, 10), std::invalid_argument);
    cfg = {};
    cfg.limits.push_back({20.0, 10.0, 7.0});
    CHECK_THROWS_AS(cfg.validate(0.2, 10), std::invalid_argument);
}

TEST_CASE("speed-limit map") {
    HighLevelConfig cfg;
    cfg.limits = {{100.0, 120.0, 7.0}, {110.0, 130.0, 5.0}};
    CHECK(cfg.speed_limit(50.0) == cfg.v_max);
    CHECK(cfg.speed_limit(105.0) == 7.0);
    CHECK(cfg.speed_limit(115.0) == 5.0);
    CHECK(cfg.speed_limit(125.0) == 5.0);
}

TEST_CASE("crossing spec at h = 0 holds only length and margin terms") {
    const ReferencePath path = straight_road();
    const EgoParams params;
    const HighLevelConfig cfg;
    // Ego at rest: no stopping distance either.
    const EgoState ego{100.0, 0.0, 0.0, 0.0};
    const auto specs = project_agents_high_level(ego, {crossing_ped()}, {{160.0, 0.0, -8.0, 1.2}}, path, params, cfg, 0.2);
    REQUIRE(specs.size() == 1);
    const auto& spec = specs[0];
    CHECK(spec.type == SpecType::Crossing);
    CHECK(spec.s_agent[0] == doctest::Approx(160.0).epsilon(1e-6));
    CHECK(spec.rho[0] == doctest::Approx(0.5 + cfg.eps_ped).epsilon(1e-12));
    CHECK(spec.delta1[0] == doctest::Approx(0.5 * params.l_veh + spec.rho[0]));
    for (std::size_t h = 1; h < spec.rho.size(); ++h) {
        CHECK(spec.rho[h] > spec.rho[h - 1]);
        CHECK(spec.delta1[h] > 0.0);
        CHECK(spec.delta2[h] > 0.0);
    }
    // Occupancy: from entering the carriageway to leaving it, at 1.2 m/s over about 7.5 m plus margins.
    CHECK(spec.window_begin > 2.0);
    CHECK(spec.window_end > spec.window_begin + 4.0);
}

TEST_CASE("agents moving parallel to the path give no crossing spec") {
    const ReferencePath path = straight_road();
    const EgoParams params;
    const HighLevelConfig cfg;
    const EgoState ego{100.0, 0.0, 0.0, 10.0};
    const Agent oncoming = lane_tv("oncoming", kPi, 3.0, 10.0);
    const Agent strolling = crossing_ped();
    const auto specs = project_agents_high_level(ego, {oncoming, strolling},
                                                 {{200.0, -10.0, 3.0, 0.0}, {150.0, 1.2, 6.0, 0.0}}, path, params, cfg,
                                                 0.2);
    CHECK(specs.empty());
}

TEST_CASE("same-lane TV ahead becomes an in-front spec the plan respects") {
    const ReferencePath path = straight_road();
    const EgoParams params;
    const HighLevelConfig cfg;
    const EgoState ego{100.0, 0.0, 0.0, 10.0};
    const auto specs =
        project_agents_high_level(ego, {lane_tv("slow", 0.0, 0.0, 5.0)}, {{150.0, 5.0, 0.0, 0.0}}, path, params, cfg, 0.2);
    REQUIRE(specs.size() == 1);
    CHECK(specs[0].type == SpecType::InFront);
    const ManeuverPlan plan = enumerate_and_solve(ego.s, ego.v, specs, cfg);
    for (int h = 1; h <= cfg.N_H; ++h)
        CHECK(plan.s[static_cast<std::size_t>(h)] <=
              specs[0].s_agent[static_cast<std::size_t>(h)] - specs[0].delta1[static_cast<std::size_t>(h)] + 1e-3);
    CHECK(plan.nu.front() < ego.v);
}

TEST_CASE("late crossing agent: the plan passes ahead; early one: it waits") {
    HighLevelConfig cfg;
    std::mt19937_64 rng(3);
    CrossingConstraintSpec spec = oracle::random_crossing_spec(rng, cfg);
    spec.s_agent.assign(spec.s_agent.size(), 40.0);
    spec.delta1.assign(spec.delta1.size(), 6.0);
    spec.delta2.assign(spec.delta2.size(), 6.0);
    spec.delta1_at_end = spec.delta2_at_begin = 6.0;

    // Occupied from 8 s: at 10 m/s the ego is 34 m past the point by then.
    spec.window_begin = 8.0;
    spec.window_end = 11.0;
    for (int h = 0; h <= cfg.N_H; ++h) spec.active[static_cast<std::size_t>(h)] = h * cfg.T_H >= 8.0 && h * cfg.T_H <= 11.0;
    const ManeuverPlan late = enumerate_and_solve(0.0, 10.0, {spec}, cfg);
    REQUIRE(late.branch.size() == 1);
    CHECK(late.branch[0] == Branch::Ahead);
    CHECK(late.switching[0] <= cfg.N_H);
    CHECK(!late.degraded);

    // Occupied right away: passing first is impossible, the ego waits behind.
    spec.window_begin = 0.5;
    spec.window_end = 5.0;
    for (int h = 0; h <= cfg.N_H; ++h) spec.active[static_cast<std::size_t>(h)] = h * cfg.T_H >= 0.5 && h * cfg.T_H <= 5.0;
    const ManeuverPlan early = enumerate_and_solve(0.0, 10.0, {spec}, cfg);
    CHECK(early.branch[0] == Branch::Behind);
    CHECK(early.switching[0] == cfg.N_H + 1);
    CHECK(oracle::crossing_satisfied(0.0, early.nu, spec, cfg.T_H, 1e-6));
    CHECK(early.branches_tried == 2);
    CHECK(early.branches_feasible == 1);
}

TEST_CASE("enumeration is no worse than a 0.25 m/s grid for short horizons") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u_v0(0.0, 13.0);
    int checked = 0;
    for (int N_H : {2, 3, 4}) {
        HighLevelConfig cfg;
        cfg.N_H = N_H;
        for (int trial = 0; trial < 6; ++trial) {
            const CrossingConstraintSpec spec = oracle::random_crossing_spec(rng, cfg);
            const double v0 = u_v0(rng);
            const ManeuverPlan plan = enumerate_and_solve(0.0, v0, {spec}, cfg);
            const double grid = oracle::hl_grid_best(0.0, v0, spec, cfg, 0.25);
            if (!std::isfinite(grid)) continue;
            CHECK(!plan.degraded);
            CHECK(plan.objective <= grid + 0.5);
            CHECK(oracle::crossing_satisfied(0.0, plan.nu, spec, cfg.T_H, 1e-6));
            ++checked;
        }
    }
    CHECK(checked >= 12);
}

TEST_CASE("returned plans: monotone positions, bounded speeds, disjunction holds") {
    std::mt19937_64 rng(5);
    HighLevelConfig cfg;
    cfg.limits = {{60.0, 75.0, 7.0}};
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<CrossingConstraintSpec> specs{oracle::random_crossing_spec(rng, cfg),
                                                  oracle::random_crossing_spec(rng, cfg)};
        specs[1].agent_id = "y";
        const ManeuverPlan plan = enumerate_and_solve(0.0, 9.0, specs, cfg);
        CHECK(plan.branches_tried >= 4);
        for (std::size_t h = 0; h < plan.nu.size(); ++h) {
            CHECK(plan.nu[h] >= -1e-9);
            CHECK(plan.nu[h] <= cfg.v_max + 1e-9);
            CHECK(plan.s[h + 1] >= plan.s[h] - 1e-9);
        }
        if (!plan.degraded) {
            CHECK(crossing_residual(plan, specs) <= 1e-6);
            for (const auto& spec : specs) CHECK(oracle::crossing_satisfied(0.0, plan.nu, spec, cfg.T_H, 1e-6));
        }
    }
}

TEST_CASE("no feasible pattern: degraded plan with softened rows") {
    HighLevelConfig cfg;
    std::mt19937_64 rng(9);
    CrossingConstraintSpec spec = oracle::random_crossing_spec(rng, cfg);
    // The ego already sits inside the keep-out region while the agent occupies it for the whole horizon.
    spec.s_agent.assign(spec.s_agent.size(), 2.0);
    spec.window_begin = 0.0;
    spec.window_end = cfg.N_H * cfg.T_H;
    spec.active.assign(spec.active.size(), true);
    spec.delta1_at_end = spec.delta1.back();
    spec.delta2_at_begin = spec.delta2.front();
    const ManeuverPlan plan = enumerate_and_solve(0.0, 3.0, {spec}, cfg);
    CHECK(plan.degraded);
    CHECK(plan.branches_feasible == 0);
    REQUIRE(plan.nu.size() == static_cast<std::size_t>(cfg.N_H));
    for (double v : plan.nu) {
        CHECK(v >= -1e-9);
        CHECK(v <= cfg.v_max + 1e-9);
    }
}

TEST_CASE("reference handoff") {
    HighLevelConfig cfg;
    ManeuverPlan plan;
    plan.plan_time = 4.0;
    plan.nu = {12.0, 12.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0};

    const auto ref = reference_for_low_level(plan, cfg, 4.0, 0.2, 10, 50.0, 13.0);
    REQUIRE(ref.xi.size() == 11);
    CHECK(ref.source == ReferenceSource::ManeuverPlanner);
    CHECK(!ref.stale);
    for (int k = 0; k < 10; ++k) CHECK(ref.xi[static_cast<std::size_t>(k)](3) == 12.0);
    CHECK(ref.xi[1](0) == doctest::Approx(52.4));

    // Halfway through the second interval the reference crosses into nu_2.
    const auto mid = reference_for_low_level(plan, cfg, 7.0, 0.2, 10, 80.0, 13.0);
    for (int k = 0; k < 5; ++k) CHECK(mid.xi[static_cast<std::size_t>(k)](3) == 12.0);
    for (int k = 5; k < 10; ++k) CHECK(mid.xi[static_cast<std::size_t>(k)](3) == 10.0);

    plan.nu.assign(8, 10.0);
    for (const auto& x : reference_for_low_level(plan, cfg, 4.0, 0.2, 10, 0.0, 13.0).xi) CHECK(x(3) == 10.0);

    CHECK(reference_for_low_level(plan, cfg, 6.2 + 1e-6, 0.2, 10, 0.0, 13.0).stale);
    CHECK(!reference_for_low_level(plan, cfg, 6.0, 0.2, 10, 0.0, 13.0).stale);
    plan.nu.clear();
    CHECK_THROWS_AS(reference_for_low_level(plan, cfg, 4.0, 0.2, 10, 0.0, 13.0), std::invalid_argument);
}

TEST_CASE("position helpers") {
    const std::vector<double> nu{10.0, 5.0, 0.0};
    const auto s = positions(1.0, nu, 2.0);
    CHECK(s == std::vector<double>{1.0, 21.0, 31.0, 31.0});
    CHECK(position_at(1.0, nu, 2.0, 0.0) == 1.0);
    CHECK(position_at(1.0, nu, 2.0, 1.0) == 11.0);
    CHECK(position_at(1.0, nu, 2.0, 3.0) == 26.0);
    CHECK(position_at(1.0, nu, 2.0, 9.0) == 31.0);
    const HighLevelConfig cfg;
    CHECK(speed_profile_cost({10.0}, 8.0, cfg) == doctest::Approx(4.0));
    CHECK(speed_profile_cost({8.0}, 8.0, cfg) == doctest::Approx(cfg.r_H * 4.0));
}

TEST_CASE("shipped intersection scenario: the first plan passes before the oncoming TV") {
    const Scenario scn = load_scenario(std::string(SMPC_SOURCE_DIR) + "/scenarios/scenario1_anticipating_tv.json");
    const ReferencePath path = scn.build_path();
    const HighLevelConfig high = scn.high_level_for(path);
    const auto specs =
        project_agents_high_level(scn.ego_initial, scn.agents, scn.agent_initial, path, scn.ego_params, high, scn.low.T);
    int crossing = 0;
    for (const auto& s : specs) crossing += s.type == SpecType::Crossing ? 1 : 0;
    REQUIRE(crossing >= 1);
    const ManeuverPlan plan = enumerate_and_solve(scn.ego_initial.s, scn.ego_initial.v, specs, high);
    CHECK(!plan.degraded);
    std::size_t ci = 0;
    for (const auto& s : specs) {
        if (s.type != SpecType::Crossing) continue;
        if (s.agent_id == "TV1") CHECK(plan.branch[ci] == Branch::Ahead);
        ++ci;
    }
    CHECK(*std::max_element(plan.nu.begin(), plan.nu.end()) > scn.ego_initial.v);
}
