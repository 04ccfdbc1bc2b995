/**
 * @file trajectory_planner.hpp
 * @brief Low-level stochastic MPC: one condensed QP per control period T.
 *
 * Stage cost  sum_k |xi_k - xi_ref,k|_Q^2 + |u_k|_R^2 + |u_k - u_{k-1}|_S^2  plus terminal |.|_P^2,
 * linear dynamics from one linearization at the current state, hard input,
 * rate, lane and speed bounds, and soft positional rows
 * q_s s_k + q_d d_k + q_t <= 0 built from agent predictions before the solve.
 */
#pragma once

#include "smpc/agent_models.hpp"
#include "smpc/ego_dynamics.hpp"
#include "smpc/path_geometry.hpp"
#include "smpc/qp_solver.hpp"
#include "smpc/uncertainty.hpp"

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

namespace smpc {

struct LowLevelConfig {
    int N = 10;
    double T = 0.2;
    Matrix4 Q = Vector4(0.0, 1.0, 1.0, 1.0).asDiagonal();
    Matrix4 P = Vector4(0.0, 1.0, 1.0, 1.0).asDiagonal();
    Eigen::Matrix2d R = Eigen::Vector2d(0.33, 5.0).asDiagonal();
    Eigen::Matrix2d S = Eigen::Vector2d(0.33, 15.0).asDiagonal();
    double beta_tv = 0.8;
    double beta_ped = 0.9;
    double eps_tv = 4.0;
    double eps_ped = 1.0;
    double sensing_radius = 150.0;
    ConflictZone zone;
    double rho_slack = 1e5;
    double linear_slack = 1e3;
    /// Jacobians are taken at max(v, this) so steering keeps authority near standstill.
    double linearization_min_speed = 1.0;
    /// Adds the path curvature along the nominal rollout to the affine term instead of freezing kappa(s0).
    bool curvature_preview = true;
    /// Back-off of the predicted lane rows against linearization error.
    double lane_margin = 0.05;

    /// Throws std::invalid_argument when N < 1, T <= 0, a weight is not PSD or a risk level is outside (0, 1).
    void validate() const;
};

enum class ConstraintSource { TvSameLane, TvIntersection, Pedestrian };

std::string to_string(ConstraintSource s);

/// q_s s_k + q_d d_k + q_t <= 0 at prediction step k (1..N).
struct PositionalConstraint {
    int k = 1;
    double q_s = 0.0;
    double q_d = 0.0;
    double q_t = 0.0;
    ConstraintSource source = ConstraintSource::TvSameLane;
    std::string agent_id;
    bool soft = true;

    double evaluate(double s, double d) const { return q_s * s + q_d * d + q_t; }
};

enum class ReferenceSource { StaticCruise, ManeuverPlanner };

struct ReferenceTrajectory {
    std::vector<Vector4> xi;  ///< k = 0..N, [s_ref, 0, 0, v_ref]
    ReferenceSource source = ReferenceSource::StaticCruise;
    bool stale = false;

    /// s_ref integrated from s0 with the per-step speeds v[0..N-1]; v clamped to [0, v_max].
    static ReferenceTrajectory from_speeds(double s0, const std::vector<double>& v, double T, double v_max,
                                           ReferenceSource source);
    static ReferenceTrajectory cruise(double s0, double v_ref, int N, double T, double v_max);
};

/// Mean prediction of one agent over k = 0..N plus its projection on the path.
struct AgentPrediction {
    int index = -1;  ///< position in the agent list
    std::vector<AgentState> mean;
    CovarianceTrajectory cov;
    std::vector<std::optional<CurvilinearPose>> pose;
};

/// Predicts every agent within the sensing radius of the ego vehicle.
std::vector<AgentPrediction> predict_agents(const EgoState& ego, const std::vector<Agent>& agents,
                                            const std::vector<AgentState>& states, const ReferencePath& path,
                                            const LowLevelConfig& cfg);

/// Time for the ego front to cover `distance` starting at speed v, accelerating at a_max up to v_max.
double earliest_arrival_time(double distance, double v, double a_max, double v_max);

/**
 * Positional rows for the three interaction cases: same-lane TV ahead,
 * TV occupying the conflict zone before the ego can clear it, pedestrian
 * about to cross. Depends only on the snapshot and the predictions.
 */
std::vector<PositionalConstraint> generate_constraints(const EgoState& ego, const std::vector<Agent>& agents,
                                                       const std::vector<AgentPrediction>& predictions,
                                                       const ReferencePath& path, const EgoParams& params,
                                                       const LowLevelConfig& cfg);

/// Condensed OCP and the affine map from inputs to predicted states, X = free + Gamma U (k = 1..N).
struct CondensedOcp {
    QuadraticProgram qp;
    Eigen::MatrixXd Gamma;
    Eigen::VectorXd free_response;
    double cost_constant = 0.0;   ///< objective offset so qp objective + constant = stage cost sum
    int positional_row_begin = 0; ///< first QP row that carries a positional constraint
    int lane_row_begin = 0;
};

/// `drift`, when not empty, holds one additive term per step: xi_k = offset + A xi_{k-1} + B u_{k-1} + drift[k-1].
CondensedOcp build_ocp(const EgoState& ego, const EgoInput& u_prev, const LinearDiscreteModel& model,
                       const ReferenceTrajectory& ref, const std::vector<PositionalConstraint>& constraints,
                       const EgoParams& params, const LowLevelConfig& cfg, bool soften_lane = false,
                       const std::vector<Vector4>& drift = {});

/**
 * Change of the drift over step k (1..N) when kappa(s0) is replaced by the curvature at the nominal
 * positions s_nom[k-1], with speeds v_nom[k-1] and the current d and phi.
 */
std::vector<Vector4> curvature_drift(const EgoState& ego, const ReferencePath& path, const std::vector<double>& s_nom,
                                     const std::vector<double>& v_nom, double T);

struct ControlDiagnostics {
    QpStatus status = QpStatus::Optimal;
    bool fallback = false;       ///< full-braking input applied
    bool lane_softened = false;  ///< lane rows had to be relaxed to regain feasibility
    int iterations = 0;
    double objective = 0.0;
    double kkt_residual = 0.0;
    std::vector<PositionalConstraint> constraints;
    std::vector<int> active;     ///< indices into `constraints` that bind or use slack
    std::vector<double> slack;   ///< one per constraint
    std::vector<Vector4> predicted;  ///< k = 0..N
};

struct ControlOutput {
    EgoInput u;
    ControlDiagnostics diag;
    std::optional<QuadraticProgram> qp;  ///< filled when requested
};

/**
 * One receding-horizon step: linearize, predict agents, build rows, solve and
 * return the first input. Infeasible hard rows are retried with the lane rows
 * softened; a failed retry or the iteration cap yields [a_min, 0].
 */
ControlOutput control_step(const EgoState& ego, const EgoInput& u_prev, const std::vector<Agent>& agents,
                           const std::vector<AgentState>& states, const ReferencePath& path,
                           const EgoParams& params, const LowLevelConfig& cfg, const ReferenceTrajectory& ref,
                           bool keep_qp = false);

}  // namespace smpc
