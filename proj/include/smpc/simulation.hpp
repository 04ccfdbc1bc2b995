/**
 * @file simulation.hpp
 * @brief Closed-loop episodes, J_sim scoring and seeded Monte Carlo sweeps.
 */
#pragma once

#include "smpc/collision.hpp"
#include "smpc/maneuver_planner.hpp"
#include "smpc/scenario.hpp"
#include "smpc/trajectory_planner.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace smpc {

struct ActiveConstraintRecord {
    std::string agent_id;
    ConstraintSource source = ConstraintSource::TvSameLane;
    int k = 1;
    double slack = 0.0;
};

/// State at the start of step tau and the input applied over [t, t + T).
struct StepRecord {
    int step = 0;  ///< tau, 1-based
    double time = 0.0;
    EgoState ego;
    Eigen::Vector2d ego_xy = Eigen::Vector2d::Zero();
    double ego_heading = 0.0;
    EgoInput u;
    double v_ref = 0.0;  ///< reference speed of the first prediction step
    ReferenceSource ref_source = ReferenceSource::StaticCruise;
    bool ref_stale = false;
    std::vector<AgentState> agents;
    std::vector<ActiveConstraintRecord> active;
    int constraint_count = 0;
    QpStatus status = QpStatus::Optimal;
    bool fallback = false;
    bool lane_softened = false;
    int iterations = 0;
    double kkt_residual = 0.0;
    double objective = 0.0;
    std::vector<double> gaps;  ///< footprint distance to each agent after the step
};

struct PlanRecord {
    int step = 0;
    ManeuverPlan plan;
    std::vector<CrossingConstraintSpec> specs;
};

struct EpisodeLog {
    std::string scenario;
    std::uint64_t seed = 0;
    bool maneuver_planner = false;
    bool noise = false;
    int steps_planned = 0;
    double T = 0.0;
    std::vector<std::string> agent_ids;
    std::vector<StepRecord> steps;
    std::vector<PlanRecord> plans;

    std::vector<double> min_gap;  ///< per agent
    double J_sim = 0.0;
    bool collision = false;
    int collision_step = -1;
    std::string collision_agent;
    bool failed = false;
    std::string failure;
    int fallback_count = 0;
    double max_kkt_residual = 0.0;
    double max_abs_d = 0.0;
    double min_speed = 0.0;
    EgoState final_ego;
};

/// Ego footprint at curvilinear pose (s, d) with heading path + phi.
OrientedBox ego_box(const EgoState& ego, const ReferencePath& path, const EgoParams& params);
OrientedBox agent_box(const AgentState& state, const Agent& agent);

/// |xi - [., 0, 0, v_ref]|_Q^2 + |u|_R^2 + |u - u_prev|_S^2.
double stage_cost(const EgoState& ego, const EgoInput& u, const EgoInput& u_prev, const LowLevelConfig& cfg,
                  double v_ref);

/// J_sim of a log against the fixed cruise reference, u_{-1} = 0.
double score(const EpisodeLog& log, const LowLevelConfig& cfg, double v_ref_fixed = 10.0);

/**
 * Runs the receding-horizon loop for scn.steps steps. Numerical failures end
 * the log early with `failed` set. When `qp_dump` is given every low-level QP
 * is written to it in text form.
 */
EpisodeLog run_episode(const Scenario& scn, std::ostream* qp_dump = nullptr);

struct SweepVariation {
    std::optional<double> beta_tv;
    std::optional<double> beta_ped;

    Scenario apply(Scenario scn) const;
};

struct AgentGapStats {
    std::string agent_id;
    double mean = 0.0;
    double min = 0.0;
    double max = 0.0;
};

struct SweepSummary {
    int episodes = 0;
    int collisions = 0;
    int failures = 0;
    std::vector<AgentGapStats> gaps;
    double J_mean = 0.0;
    double J_std = 0.0;
    double J_min = 0.0;
    double J_max = 0.0;
    double min_speed_mean = 0.0;
    int fallbacks = 0;
    double max_kkt_residual = 0.0;
    /// Per agent: smallest per-step containment frequency of its low-level envelope.
    std::vector<double> containment;
};

/// Episodes for seeds first_seed .. first_seed + count - 1 run on `threads` workers.
SweepSummary sweep(const Scenario& scn, std::uint64_t first_seed, int count, const SweepVariation& variation,
                   int threads = 1, int containment_trials = 2000);

}  // namespace smpc
