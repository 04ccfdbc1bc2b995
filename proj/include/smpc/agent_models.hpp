/**
 * @file agent_models.hpp
 * @brief Stochastic point-mass models for target vehicles and pedestrians.
 *
 * Both agent kinds share the double-integrator matrices
 *
 *     A = [1 T 0 0; 0 1 0 0; 0 0 1 T; 0 0 0 1],  B = [T^2/2 0; T 0; 0 T^2/2; 0 T]
 *
 * over the world-frame state [x, vx, y, vy]. A target vehicle adds a
 * saturated LQ feedback towards its lane (gain K acting on the lane-frame
 * error); a pedestrian is driven by noise alone.
 */
#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

namespace smpc {

using Matrix24 = Eigen::Matrix<double, 2, 4>;

struct AgentState {
    double x = 0.0;
    double vx = 0.0;
    double y = 0.0;
    double vy = 0.0;

    Eigen::Vector4d vec() const { return {x, vx, y, vy}; }
    static AgentState from(const Eigen::Vector4d& v) { return {v(0), v(1), v(2), v(3)}; }
    Eigen::Vector2d position() const { return {x, y}; }
    Eigen::Vector2d velocity() const { return {vx, vy}; }
};

struct Footprint {
    double length = 5.0;
    double width = 2.0;
};

struct PointMassModel {
    Eigen::Matrix4d A = Eigen::Matrix4d::Identity();
    Eigen::Matrix<double, 4, 2> B = Eigen::Matrix<double, 4, 2>::Zero();
    double T = 0.0;
};

PointMassModel point_mass_matrices(double T);

/**
 * Target-vehicle behavior. The lane frame has its first axis along
 * `lane_heading`; `lateral_ref` is the lane center offset along the lane's
 * left normal and `speed_ref` the longitudinal reference speed. K, K_H and
 * the noise covariance are expressed in the lane frame.
 */
struct TVConfig {
    double lane_heading = 0.0;
    double lateral_ref = 0.0;
    double speed_ref = 0.0;
    Matrix24 K = Matrix24::Zero();
    Matrix24 K_H = Matrix24::Zero();
    Eigen::Matrix2d noise_cov = Eigen::Matrix2d::Zero();
    Eigen::Vector2d u_min{-9.0, -0.4};
    Eigen::Vector2d u_max{5.0, 0.4};
    Footprint footprint{5.0, 2.0};
};

struct PedConfig {
    Eigen::Matrix2d noise_cov = Eigen::Matrix2d::Zero();  ///< world frame
    Footprint footprint{1.0, 1.0};
};

enum class AgentKind { TargetVehicle, Pedestrian };

/// One traffic participant: kind, behavior and world-frame noise helpers.
struct Agent {
    std::string id;
    AgentKind kind = AgentKind::TargetVehicle;
    TVConfig tv;
    PedConfig ped;

    const Footprint& footprint() const { return kind == AgentKind::TargetVehicle ? tv.footprint : ped.footprint; }
    /// Noise covariance of the acceleration input in world axes.
    Eigen::Matrix2d world_noise_cov() const;
    /// Feedback gain acting on the world-frame state (zero for pedestrians).
    Matrix24 world_gain(bool high_level) const;
    /// Heading used to orient the footprint.
    double heading(const AgentState& s) const;
};

/// 4x4 map from lane-frame state [long, vlong, lat, vlat] to world [x, vx, y, vy].
Eigen::Matrix4d lane_to_world(double lane_heading);

/// Saturated feedback K (xi - xi_ref) in lane-frame accelerations, longitudinal position error ignored.
Eigen::Vector2d tv_feedback(const AgentState& state, const TVConfig& cfg, bool high_level = false);

/// One stochastic step. `noise` is a lane-frame (TV) or world-frame (pedestrian) acceleration sample.
AgentState agent_sim_step(const AgentState& state, const Agent& agent, const Eigen::Vector2d& noise,
                          const PointMassModel& model, bool high_level = false);

/// Noise-free rollout, N+1 states including the current one.
std::vector<AgentState> predict_mean(const AgentState& state, const Agent& agent, int N,
                                     const PointMassModel& model, bool high_level = false);

/// Spectral radius of the closed loop with the uncontrolled longitudinal position mode removed.
double tracking_spectral_radius(const Matrix24& K, double T);

/**
 * Validates a TV configuration: PSD noise, ordered bounds, the documented K
 * sparsity, stable tracking modes at T and T_H, and eig(A_H + B_H K_H)
 * matching eig(A + B K)^(T_H/T) within `tolerance` per mode.
 * Throws std::invalid_argument describing the first failure.
 */
void validate_tv_config(const TVConfig& cfg, double T, double T_H, double tolerance = 0.1);

void validate_ped_config(const PedConfig& cfg);

bool is_psd(const Eigen::MatrixXd& M, double tol = 1e-12);

}  // namespace smpc
