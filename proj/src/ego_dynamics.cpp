#include "smpc/ego_dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace smpc {

namespace {

constexpr double kSingularityGuard = 1e-6;

double guarded_denominator(double kappa, double d) {
    const double den = 1.0 - kappa * d;
    if (!(std::abs(den) > kSingularityGuard)) {
        throw std::domain_error("bicycle model singular: |1 - kappa*d| = " + std::to_string(std::abs(den)));
    }
    return den;
}

double clamped_curvature(const ReferencePath& path, double s) {
    return path.curvature_at(std::clamp(s, 0.0, path.total_length()));
}

}  // namespace

void EgoParams::validate() const {
    if (!(l_f > 0 && l_r > 0 && w_veh > 0 && l_veh > 0 && v_max > 0 && w_lane > 0)) {
        throw std::invalid_argument("ego lengths and speed limit must be positive");
    }
    if (!(w_lane > w_veh)) throw std::invalid_argument("lane must be wider than the vehicle");
    for (int i = 0; i < 2; ++i) {
        if (!(u_min(i) <= u_max(i)) || !(du_min(i) <= du_max(i))) {
            throw std::invalid_argument("ego input bounds are not ordered");
        }
    }
}

Vector4 continuous_dynamics(const EgoState& xi, const EgoInput& u, double kappa, const EgoParams& params) {
    const double den = guarded_denominator(kappa, xi.d);
    const double alpha = std::atan(params.l_r / (params.l_f + params.l_r) * std::tan(u.delta));
    const double c = std::cos(alpha + xi.phi);
    return {xi.v * c / den,
            xi.v * std::sin(alpha + xi.phi),
            xi.v * (std::sin(alpha) / params.l_r - kappa * c / den),
            u.a};
}

Jacobians linearize(const EgoState& xi0, double kappa, const EgoParams& params) {
    const double den = guarded_denominator(kappa, xi0.d);
    const double v = xi0.v;
    const double c = std::cos(xi0.phi);
    const double s = std::sin(xi0.phi);
    // d alpha / d delta at delta = 0
    const double ratio = params.l_r / (params.l_f + params.l_r);

    Jacobians J;
    // row s'
    J.A(0, 1) = v * c * kappa / (den * den);
    J.A(0, 2) = -v * s / den;
    J.A(0, 3) = c / den;
    // row d'
    J.A(1, 2) = v * c;
    J.A(1, 3) = s;
    // row phi'
    J.A(2, 1) = -v * kappa * kappa * c / (den * den);
    J.A(2, 2) = v * kappa * s / den;
    J.A(2, 3) = -kappa * c / den;

    J.B(0, 1) = -v * s / den * ratio;
    J.B(1, 1) = v * c * ratio;
    J.B(2, 1) = v * (1.0 / params.l_r + kappa * s / den) * ratio;
    J.B(3, 0) = 1.0;
    return J;
}

Eigen::MatrixXd matrix_exponential(const Eigen::MatrixXd& M) {
    const auto n = M.rows();
    const double norm = M.cwiseAbs().rowwise().sum().maxCoeff();
    int squarings = 0;
    if (norm > 0.5) squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
    const Eigen::MatrixXd X = M / std::ldexp(1.0, squarings);

    Eigen::MatrixXd result = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd term = Eigen::MatrixXd::Identity(n, n);
    for (int k = 1; k < 60; ++k) {
        term = term * X / static_cast<double>(k);
        result += term;
        if (term.cwiseAbs().maxCoeff() < 1e-12 * std::max(1.0, result.cwiseAbs().maxCoeff())) break;
    }
    for (int i = 0; i < squarings; ++i) result = result * result;
    return result;
}

LinearDiscreteModel discretize(const Matrix4& A_l, const Matrix42& B_l, const Vector4& f0,
                               const Vector4& xi0, double T) {
    if (!(T > 0.0)) throw std::invalid_argument("sampling time must be positive");
    // [A B f0; 0 0 0] so the drift is integrated through exp(A t) like the input.
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(7, 7);
    aug.topLeftCorner(4, 4) = A_l * T;
    aug.block(0, 4, 4, 2) = B_l * T;
    aug.block(0, 6, 4, 1) = f0 * T;
    const Eigen::MatrixXd E = matrix_exponential(aug);

    LinearDiscreteModel m;
    m.T = T;
    m.A = E.topLeftCorner(4, 4);
    m.B = E.block(0, 4, 4, 2);
    m.offset = xi0 + E.block(0, 6, 4, 1) - m.A * xi0;
    return m;
}

LinearDiscreteModel linear_model_at(const EgoState& xi0, const ReferencePath& path,
                                    const EgoParams& params, double T) {
    const double kappa = clamped_curvature(path, xi0.s);
    const Jacobians J = linearize(xi0, kappa, params);
    const Vector4 f0 = continuous_dynamics(xi0, EgoInput{}, kappa, params);
    return discretize(J.A, J.B, f0, xi0.vec(), T);
}

EgoState plant_step(const EgoState& xi, const EgoInput& u, const ReferencePath& path, double T,
                    const EgoParams& params, int substeps) {
    const double h = T / substeps;
    const auto f = [&](const Vector4& x) {
        EgoState st = EgoState::from(x);
        st.v = std::max(0.0, st.v);
        Vector4 dx = continuous_dynamics(st, u, clamped_curvature(path, st.s), params);
        if (st.v <= 0.0 && dx(3) < 0.0) dx(3) = 0.0;
        return dx;
    };
    Vector4 x = xi.vec();
    for (int i = 0; i < substeps; ++i) {
        const Vector4 k1 = f(x);
        const Vector4 k2 = f(x + 0.5 * h * k1);
        const Vector4 k3 = f(x + 0.5 * h * k2);
        const Vector4 k4 = f(x + h * k3);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        x(3) = std::max(0.0, x(3));
    }
    return EgoState::from(x);
}

}  // namespace smpc
