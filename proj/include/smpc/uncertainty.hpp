/**
 * @file uncertainty.hpp
 * @brief Prediction-error covariance and the tightened longitudinal safety distance.
 *
 *   Sigma_{k+1} = B Sigma_w B^T + (A + B K) Sigma_k (A + B K)^T,  Sigma_0 = 0
 *   gamma       = -2 ln(1 - beta)
 *   e_k         = sigma_k sqrt(gamma)
 *   a_k         = l/2 + ds_stop + e_k + eps_safe
 */
#pragma once

#include "smpc/agent_models.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace smpc {

struct CovarianceTrajectory {
    std::vector<Eigen::Matrix4d> sigma;  ///< k = 0..N

    int horizon() const { return static_cast<int>(sigma.size()) - 1; }
};

/// Error dynamics of one agent: e+ = closed_loop e + B w, w ~ N(0, noise_cov).
struct ErrorModel {
    Eigen::Matrix4d closed_loop = Eigen::Matrix4d::Identity();
    Eigen::Matrix<double, 4, 2> B = Eigen::Matrix<double, 4, 2>::Zero();
    Eigen::Matrix2d noise_cov = Eigen::Matrix2d::Zero();
};

/**
 * World-frame error model for an agent at sampling time `model.T`. With
 * `noise_average` = k the input noise covariance is divided by k, which is the
 * variance of the mean of k independent low-level samples.
 */
ErrorModel error_model(const Agent& agent, const PointMassModel& model, bool high_level, int noise_average = 1);

/// Pass K = zero for the open-loop (pedestrian) recursion. Throws std::invalid_argument on a non-PSD Sigma_w.
CovarianceTrajectory propagate_covariance(const Eigen::Matrix4d& A, const Eigen::Matrix<double, 4, 2>& B,
                                          const Matrix24& K, const Eigen::Matrix2d& sigma_w, int N);
CovarianceTrajectory propagate_covariance(const ErrorModel& m, int N);

/// gamma = -2 ln(1 - beta). Throws std::invalid_argument unless 0 < beta < 1.
double risk_inflation(double beta);

/// Standard deviation of the position error along the unit vector `direction`.
double directional_sigma(const Eigen::Matrix4d& sigma, const Eigen::Vector2d& direction);

/// max(0, (v_ego^2 - v_agent^2) / (2 decel)); negative agent speeds count as zero.
double stopping_distance(double v_ego, double v_agent, double decel);

struct SafetyEnvelope {
    double half_length = 0.0;
    double stop_distance = 0.0;
    double eps_safe = 0.0;
    std::vector<double> e;  ///< uncertainty term per step
    std::vector<double> a;  ///< total keep-out distance per step

    int horizon() const { return static_cast<int>(a.size()) - 1; }
};

/**
 * Builds a_k for k = 0..N. `direction` selects which position component is
 * "longitudinal"; the default is the world x axis, i.e. Sigma_k[0][0].
 */
SafetyEnvelope safety_envelope(const CovarianceTrajectory& cov, double agent_length, double beta, double eps_safe,
                               double ego_v, double agent_v, double decel,
                               const Eigen::Vector2d& direction = Eigen::Vector2d::UnitX());

/**
 * Fraction of sampled linear (unsaturated) error rollouts whose position error
 * along `direction` stays within e_k = sigma_k sqrt(gamma), for k = 0..N.
 */
std::vector<double> empirical_containment(const ErrorModel& m, double beta, int N, int trials, std::uint64_t seed,
                                          const Eigen::Vector2d& direction = Eigen::Vector2d::UnitX());

/// Sample variance of the position error along `direction` per step, from `trials` linear rollouts.
std::vector<double> sampled_variance(const ErrorModel& m, int N, int trials, std::uint64_t seed,
                                     const Eigen::Vector2d& direction = Eigen::Vector2d::UnitX());

}  // namespace smpc
