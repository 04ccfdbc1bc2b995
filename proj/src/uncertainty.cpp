#include "smpc/uncertainty.hpp"

#include "smpc/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace smpc {

Eigen::Matrix2d covariance_sqrt(const Eigen::Matrix2d& cov) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
    const Eigen::Vector2d root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

ErrorModel error_model(const Agent& agent, const PointMassModel& model, bool high_level, int noise_average) {
    if (noise_average < 1) throw std::invalid_argument("noise averaging count must be >= 1");
    ErrorModel m;
    m.B = model.B;
    m.closed_loop = model.A + model.B * agent.world_gain(high_level);
    m.noise_cov = agent.world_noise_cov() / static_cast<double>(noise_average);
    return m;
}

CovarianceTrajectory propagate_covariance(const Eigen::Matrix4d& A, const Eigen::Matrix<double, 4, 2>& B,
                                          const Matrix24& K, const Eigen::Matrix2d& sigma_w, int N) {
    if (N < 0) throw std::invalid_argument("horizon must be non-negative");
    if (!is_psd(sigma_w)) throw std::invalid_argument("noise covariance is not symmetric PSD");
    const Eigen::Matrix4d Acl = A + B * K;
    const Eigen::Matrix4d noise = B * sigma_w * B.transpose();
    CovarianceTrajectory out;
    out.sigma.reserve(static_cast<std::size_t>(N) + 1);
    out.sigma.push_back(Eigen::Matrix4d::Zero());
    for (int k = 0; k < N; ++k) {
        Eigen::Matrix4d next = noise + Acl * out.sigma.back() * Acl.transpose();
        out.sigma.push_back(0.5 * (next + next.transpose()));
    }
    return out;
}

CovarianceTrajectory propagate_covariance(const ErrorModel& m, int N) {
    return propagate_covariance(m.closed_loop, m.B, Matrix24::Zero(), m.noise_cov, N);
}

double risk_inflation(double beta) {
    if (!(beta > 0.0 && beta < 1.0)) throw std::invalid_argument("risk parameter must lie in (0, 1)");
    return -2.0 * std::log1p(-beta);
}

double directional_sigma(const Eigen::Matrix4d& sigma, const Eigen::Vector2d& direction) {
    Eigen::Matrix2d pos;
    pos << sigma(0, 0), sigma(0, 2), sigma(2, 0), sigma(2, 2);
    return std::sqrt(std::max(0.0, direction.dot(pos * direction)));
}

double stopping_distance(double v_ego, double v_agent, double decel) {
    if (!(decel > 0.0)) throw std::invalid_argument("deceleration magnitude must be positive");
    const double va = std::max(0.0, v_agent);
    return std::max(0.0, (v_ego * v_ego - va * va) / (2.0 * decel));
}

SafetyEnvelope safety_envelope(const CovarianceTrajectory& cov, double agent_length, double beta, double eps_safe,
                               double ego_v, double agent_v, double decel, const Eigen::Vector2d& direction) {
    const double root_gamma = std::sqrt(risk_inflation(beta));
    SafetyEnvelope env;
    env.half_length = 0.5 * agent_length;
    env.stop_distance = stopping_distance(ego_v, agent_v, decel);
    env.eps_safe = eps_safe;
    env.e.reserve(cov.sigma.size());
    env.a.reserve(cov.sigma.size());
    for (const auto& S : cov.sigma) {
        const double e = directional_sigma(S, direction) * root_gamma;
        env.e.push_back(e);
        env.a.push_back(env.half_length + env.stop_distance + e + eps_safe);
    }
    return env;
}

namespace {

template <typename Visit>
void sample_rollouts(const ErrorModel& m, int N, int trials, std::uint64_t seed, const Eigen::Vector2d& direction,
                     Visit&& visit) {
    if (N < 0 || trials < 1) throw std::invalid_argument("need N >= 0 and at least one trial");
    const Eigen::Matrix2d L = covariance_sqrt(m.noise_cov);
    const NoiseStream stream(seed, 0);
    for (int t = 0; t < trials; ++t) {
        Eigen::Vector4d e = Eigen::Vector4d::Zero();
        visit(0, 0.0);
        for (int k = 0; k < N; ++k) {
            const auto counter = static_cast<std::uint64_t>(t) * static_cast<std::uint64_t>(N) + k;
            e = m.closed_loop * e + m.B * stream.gaussian(counter, L);
            visit(k + 1, direction.x() * e(0) + direction.y() * e(2));
        }
    }
}

}  // namespace

std::vector<double> empirical_containment(const ErrorModel& m, double beta, int N, int trials, std::uint64_t seed,
                                          const Eigen::Vector2d& direction) {
    const double root_gamma = std::sqrt(risk_inflation(beta));
    const CovarianceTrajectory cov = propagate_covariance(m, N);
    std::vector<double> bound(static_cast<std::size_t>(N) + 1);
    for (int k = 0; k <= N; ++k) bound[k] = directional_sigma(cov.sigma[k], direction) * root_gamma;

    std::vector<long> inside(static_cast<std::size_t>(N) + 1, 0);
    sample_rollouts(m, N, trials, seed, direction, [&](int k, double dev) {
        if (std::abs(dev) <= bound[k]) ++inside[k];
    });
    std::vector<double> out(inside.size());
    for (std::size_t k = 0; k < inside.size(); ++k) out[k] = static_cast<double>(inside[k]) / trials;
    return out;
}

std::vector<double> sampled_variance(const ErrorModel& m, int N, int trials, std::uint64_t seed,
                                     const Eigen::Vector2d& direction) {
    std::vector<double> sum(static_cast<std::size_t>(N) + 1, 0.0);
    std::vector<double> sum_sq(sum.size(), 0.0);
    sample_rollouts(m, N, trials, seed, direction, [&](int k, double dev) {
        sum[k] += dev;
        sum_sq[k] += dev * dev;
    });
    std::vector<double> out(sum.size(), 0.0);
    if (trials < 2) return out;
    for (std::size_t k = 0; k < sum.size(); ++k) {
        const double mean = sum[k] / trials;
        out[k] = (sum_sq[k] - trials * mean * mean) / (trials - 1);
    }
    return out;
}

}  // namespace smpc
