#include "smpc/agent_models.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <stdexcept>

namespace smpc {

namespace {

Eigen::Matrix2d rotation(double theta) {
    Eigen::Matrix2d R;
    R << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
    return R;
}

Eigen::Vector2d raw_feedback(const AgentState& state, const TVConfig& cfg, bool high_level) {
    const Eigen::Vector4d local = lane_to_world(cfg.lane_heading).transpose() * state.vec();
    Eigen::Vector4d err = local - Eigen::Vector4d(local(0), cfg.speed_ref, cfg.lateral_ref, 0.0);
    err(0) = 0.0;
    return (high_level ? cfg.K_H : cfg.K) * err;
}

Eigen::Vector2d saturate(const Eigen::Vector2d& u, const TVConfig& cfg) {
    return u.cwiseMax(cfg.u_min).cwiseMin(cfg.u_max);
}

Eigen::Matrix3d tracking_block(const Matrix24& K, double T) {
    const PointMassModel m = point_mass_matrices(T);
    const Eigen::Matrix4d closed = m.A + m.B * K;
    return closed.bottomRightCorner<3, 3>();
}

}  // namespace

PointMassModel point_mass_matrices(double T) {
    if (!(T > 0.0)) throw std::invalid_argument("sampling time must be positive");
    PointMassModel m;
    m.T = T;
    m.A(0, 1) = T;
    m.A(2, 3) = T;
    m.B(0, 0) = 0.5 * T * T;
    m.B(1, 0) = T;
    m.B(2, 1) = 0.5 * T * T;
    m.B(3, 1) = T;
    return m;
}

Eigen::Matrix4d lane_to_world(double lane_heading) {
    const double c = std::cos(lane_heading);
    const double s = std::sin(lane_heading);
    Eigen::Matrix4d M;
    M << c, 0, -s, 0,
         0, c, 0, -s,
         s, 0, c, 0,
         0, s, 0, c;
    return M;
}

Eigen::Matrix2d Agent::world_noise_cov() const {
    if (kind == AgentKind::Pedestrian) return ped.noise_cov;
    const Eigen::Matrix2d R = rotation(tv.lane_heading);
    return R * tv.noise_cov * R.transpose();
}

Matrix24 Agent::world_gain(bool high_level) const {
    if (kind == AgentKind::Pedestrian) return Matrix24::Zero();
    const Matrix24& K = high_level ? tv.K_H : tv.K;
    return rotation(tv.lane_heading) * K * lane_to_world(tv.lane_heading).transpose();
}

double Agent::heading(const AgentState& s) const {
    if (kind == AgentKind::Pedestrian) return 0.0;
    if (std::hypot(s.vx, s.vy) > 0.5) return std::atan2(s.vy, s.vx);
    return tv.lane_heading;
}

Eigen::Vector2d tv_feedback(const AgentState& state, const TVConfig& cfg, bool high_level) {
    return saturate(raw_feedback(state, cfg, high_level), cfg);
}

AgentState agent_sim_step(const AgentState& state, const Agent& agent, const Eigen::Vector2d& noise,
                          const PointMassModel& model, bool high_level) {
    Eigen::Vector2d u_world;
    if (agent.kind == AgentKind::TargetVehicle) {
        const Eigen::Vector2d u_lane = saturate(raw_feedback(state, agent.tv, high_level) + noise, agent.tv);
        u_world = rotation(agent.tv.lane_heading) * u_lane;
    } else {
        u_world = noise;
    }
    return AgentState::from(model.A * state.vec() + model.B * u_world);
}

std::vector<AgentState> predict_mean(const AgentState& state, const Agent& agent, int N,
                                     const PointMassModel& model, bool high_level) {
    if (N < 1) throw std::invalid_argument("prediction horizon must be >= 1");
    std::vector<AgentState> out;
    out.reserve(static_cast<std::size_t>(N) + 1);
    out.push_back(state);
    for (int k = 0; k < N; ++k) {
        out.push_back(agent_sim_step(out.back(), agent, Eigen::Vector2d::Zero(), model, high_level));
    }
    return out;
}

double tracking_spectral_radius(const Matrix24& K, double T) {
    const Eigen::Matrix3d M = tracking_block(K, T);
    return M.eigenvalues().cwiseAbs().maxCoeff();
}

bool is_psd(const Eigen::MatrixXd& M, double tol) {
    if (M.rows() != M.cols()) return false;
    if (!M.isApprox(M.transpose(), 1e-12) && (M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12) return false;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    return es.eigenvalues().minCoeff() >= -tol;
}

void validate_ped_config(const PedConfig& cfg) {
    if (!is_psd(cfg.noise_cov)) throw std::invalid_argument("pedestrian noise covariance is not PSD");
    if (!(cfg.footprint.length > 0 && cfg.footprint.width > 0)) {
        throw std::invalid_argument("pedestrian footprint must be positive");
    }
}

void validate_tv_config(const TVConfig& cfg, double T, double T_H, double tolerance) {
    if (!is_psd(cfg.noise_cov)) throw std::invalid_argument("target vehicle noise covariance is not PSD");
    if (!(cfg.u_min.array() <= cfg.u_max.array()).all()) {
        throw std::invalid_argument("target vehicle input bounds are not ordered");
    }
    if (!(cfg.footprint.length > 0 && cfg.footprint.width > 0)) {
        throw std::invalid_argument("target vehicle footprint must be positive");
    }
    for (const Matrix24* K : {&cfg.K, &cfg.K_H}) {
        if ((*K)(0, 0) != 0 || (*K)(0, 2) != 0 || (*K)(0, 3) != 0 || (*K)(1, 0) != 0 || (*K)(1, 1) != 0) {
            throw std::invalid_argument("feedback gain must have the [[0,k12,0,0],[0,0,k21,k22]] structure");
        }
    }
    if (!(tracking_spectral_radius(cfg.K, T) < 1.0)) {
        throw std::invalid_argument("low-level TV closed loop is not stable");
    }
    if (!(tracking_spectral_radius(cfg.K_H, T_H) < 1.0)) {
        throw std::invalid_argument("high-level TV closed loop is not stable");
    }

    const double ratio = T_H / T;
    const Eigen::Vector3cd low = tracking_block(cfg.K, T).eigenvalues();
    const Eigen::Vector3cd high = tracking_block(cfg.K_H, T_H).eigenvalues();
    std::vector<bool> used(3, false);
    for (int i = 0; i < 3; ++i) {
        const std::complex<double> target = std::pow(low(i), ratio);
        int best = -1;
        double best_err = 0.0;
        for (int j = 0; j < 3; ++j) {
            if (used[j]) continue;
            const double err = std::abs(high(j) - target);
            if (best < 0 || err < best_err) {
                best = j;
                best_err = err;
            }
        }
        used[best] = true;
        if (best_err > tolerance * std::max(std::abs(target), 1e-3)) {
            throw std::invalid_argument("K_H closed loop does not match the low-level loop over T_H");
        }
    }
}

}  // namespace smpc
