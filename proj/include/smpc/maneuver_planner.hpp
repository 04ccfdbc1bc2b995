/**
 * @file maneuver_planner.hpp
 * @brief High-level stochastic MPC over a piecewise-constant speed profile.
 *
 *   s_{h+1} = s_h + T_H nu_h,   cost  sum_h (nu_h - nu_{h-1})^2 + r_H (nu_h - v_ref)^2,  nu_{-1} = v0
 *
 * Same-lane TVs ahead give linear rows. Crossing agents give a disjunction
 * (stay behind or be ahead), enumerated branch by branch with one convex QP per
 * branch combination.
 */
#pragma once

#include "smpc/agent_models.hpp"
#include "smpc/ego_dynamics.hpp"
#include "smpc/path_geometry.hpp"
#include "smpc/qp_solver.hpp"
#include "smpc/trajectory_planner.hpp"

#include <string>
#include <vector>

namespace smpc {

struct SpeedLimitZone {
    double s_begin = 0.0;
    double s_end = 0.0;
    double limit = 0.0;
};

struct HighLevelConfig {
    int N_H = 8;
    double T_H = 2.0;
    double r_H = 0.5;
    double v_ref = 10.0;
    double beta_tv = 0.4;
    double beta_ped = 0.5;
    double eps_tv = 4.0;
    double eps_ped = 1.0;
    double extra_safety = 0.0;
    double v_max = 13.0;
    double sensing_radius = 150.0;
    std::vector<SpeedLimitZone> limits;  ///< default: 7 m/s on the curved segment (set by the scenario)
    double rho_slack = 1e5;
    double linear_slack = 1e3;

    /// nu_max(s): v_max lowered by every zone containing s.
    double speed_limit(double s) const;
    /// k_bar = T_H / T, required to be an integer.
    int averaging_factor(double T) const;
    /// Throws std::invalid_argument; checks N_H T_H >= N T and the integer ratio.
    void validate(double T, int N) const;
};

enum class SpecType { InFront, Crossing };

std::string to_string(SpecType t);

/**
 * Constraint data for one agent. Per-step vectors run over h = 0..N_H.
 * For a crossing agent `s_agent` is the crossing point on the ego path and
 * [window_begin, window_end] the time span (relative to the plan start) in
 * which the agent occupies the ego lane around it.
 */
struct CrossingConstraintSpec {
    std::string agent_id;
    SpecType type = SpecType::InFront;
    std::vector<double> s_agent;
    std::vector<double> rho;
    std::vector<double> delta1;  ///< margin behind the agent
    std::vector<double> delta2;  ///< margin ahead of the agent
    std::vector<bool> active;
    double window_begin = 0.0;
    double window_end = 0.0;
    double delta2_at_begin = 0.0;
    double delta1_at_end = 0.0;
};

enum class Branch { Behind, Ahead };

struct ManeuverPlan {
    double plan_time = 0.0;
    double s0 = 0.0;
    double v0 = 0.0;
    std::vector<double> nu;  ///< h = 0..N_H-1
    std::vector<double> s;   ///< h = 0..N_H
    std::vector<Branch> branch;  ///< per crossing spec, in spec order
    std::vector<int> switching;  ///< per crossing spec: first step with the ego ahead, N_H + 1 = never
    double objective = 0.0;
    bool degraded = false;
    int branches_tried = 0;
    int branches_feasible = 0;
    double kkt_residual = 0.0;
};

/// Mean rollout at T_H with averaged noise, projection and classification of every agent in range.
std::vector<CrossingConstraintSpec> project_agents_high_level(const EgoState& ego, const std::vector<Agent>& agents,
                                                              const std::vector<AgentState>& states,
                                                              const ReferencePath& path, const EgoParams& params,
                                                              const HighLevelConfig& cfg, double T_low);

/// Branch enumeration; if no pattern is feasible, every pattern is re-solved with soft crossing rows and the cheapest kept.
ManeuverPlan enumerate_and_solve(double s0, double v0, const std::vector<CrossingConstraintSpec>& specs,
                                 const HighLevelConfig& cfg, double plan_time = 0.0);

/// Speed cost of a profile: sum (nu_h - nu_{h-1})^2 + r_H (nu_h - v_ref)^2 with nu_{-1} = v0.
double speed_profile_cost(const std::vector<double>& nu, double v0, const HighLevelConfig& cfg);

/// Positions s_h for h = 0..N_H, and the piecewise-linear position at time t.
std::vector<double> positions(double s0, const std::vector<double>& nu, double T_H);
double position_at(double s0, const std::vector<double>& nu, double T_H, double t);

/// Largest (s_h - s_a + d1)(-s_h + s_a + d2) over active crossing steps; <= 0 when every disjunction holds.
double crossing_residual(const ManeuverPlan& plan, const std::vector<CrossingConstraintSpec>& specs);

/// Zero-order hold of the plan speeds over the low-level steps starting at `now`.
ReferenceTrajectory reference_for_low_level(const ManeuverPlan& plan, const HighLevelConfig& cfg, double now,
                                            double T, int N, double ego_s, double v_max);

}  // namespace smpc
