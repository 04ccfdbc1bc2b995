/**
 * @file ego_dynamics.hpp
 * @brief Kinematic bicycle model in road-aligned coordinates.
 *
 * State  xi = [s, d, phi, v]  (arc length, lateral offset, heading relative to path, speed)
 * Input  u  = [a, delta]      (acceleration, front steering angle)
 *
 *   s'   = v cos(alpha + phi) / (1 - kappa(s) d)
 *   d'   = v sin(alpha + phi)
 *   phi' = v (sin(alpha) / l_r - kappa(s) cos(alpha + phi) / (1 - kappa(s) d))
 *   v'   = a
 *
 * with slip angle alpha = atan(l_r / (l_f + l_r) tan(delta)).
 */
#pragma once

#include "smpc/path_geometry.hpp"

#include <Eigen/Core>

namespace smpc {

using Vector4 = Eigen::Matrix<double, 4, 1>;
using Matrix4 = Eigen::Matrix<double, 4, 4>;
using Matrix42 = Eigen::Matrix<double, 4, 2>;

struct EgoState {
    double s = 0.0;
    double d = 0.0;
    double phi = 0.0;
    double v = 0.0;

    Vector4 vec() const { return {s, d, phi, v}; }
    static EgoState from(const Vector4& x) { return {x(0), x(1), x(2), x(3)}; }
};

struct EgoInput {
    double a = 0.0;
    double delta = 0.0;

    Eigen::Vector2d vec() const { return {a, delta}; }
    static EgoInput from(const Eigen::Vector2d& u) { return {u(0), u(1)}; }
};

struct EgoParams {
    double l_f = 2.0;
    double l_r = 2.0;
    double w_veh = 2.0;
    double l_veh = 5.0;
    double v_max = 13.0;
    double w_lane = 3.0;
    Eigen::Vector2d u_min{-9.0, -0.52};
    Eigen::Vector2d u_max{5.0, 0.52};
    Eigen::Vector2d du_min{-9.0, -0.4};
    Eigen::Vector2d du_max{9.0, 0.4};

    /// Largest |d| that keeps the vehicle body inside its lane.
    double lateral_limit() const { return 0.5 * w_lane - 0.5 * w_veh; }
    /// Throws std::invalid_argument on non-positive lengths or misordered bounds.
    void validate() const;
};

/// Affine discrete model next = offset + A xi + B u, anchored at the linearization point.
struct LinearDiscreteModel {
    Matrix4 A = Matrix4::Identity();
    Matrix42 B = Matrix42::Zero();
    Vector4 offset = Vector4::Zero();
    double T = 0.0;

    Vector4 predict(const Vector4& xi, const Eigen::Vector2d& u) const { return offset + A * xi + B * u; }
};

struct Jacobians {
    Matrix4 A = Matrix4::Zero();
    Matrix42 B = Matrix42::Zero();
};

/// Throws std::domain_error when |1 - kappa d| <= 1e-6.
Vector4 continuous_dynamics(const EgoState& xi, const EgoInput& u, double kappa, const EgoParams& params);

/// Analytic Jacobians at (xi0, u = 0), treating dkappa/ds as zero.
Jacobians linearize(const EgoState& xi0, double kappa, const EgoParams& params);

/// Exact zero-order-hold discretization (augmented matrix exponential).
LinearDiscreteModel discretize(const Matrix4& A_l, const Matrix42& B_l, const Vector4& f0,
                               const Vector4& xi0, double T);

/// Convenience: linearize at xi0 with kappa(s0) and discretize.
LinearDiscreteModel linear_model_at(const EgoState& xi0, const ReferencePath& path,
                                    const EgoParams& params, double T);

/// exp(M) by scaling and squaring with a Taylor series truncated at 1e-12.
Eigen::MatrixXd matrix_exponential(const Eigen::MatrixXd& M);

/**
 * True plant: RK4 on the nonlinear model, 10 substeps per period, kappa(s)
 * re-queried at every stage. Speed is clamped at zero after each substep.
 * Arc lengths beyond the path ends use the curvature of the nearest end.
 */
EgoState plant_step(const EgoState& xi, const EgoInput& u, const ReferencePath& path, double T,
                    const EgoParams& params, int substeps = 10);

}  // namespace smpc
