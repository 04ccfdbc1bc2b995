// Independent reference computations shared by the unit tests and the acceptance run.
#pragma once

#include "smpc/ego_dynamics.hpp"
#include "smpc/maneuver_planner.hpp"
#include "smpc/qp_solver.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace smpc::oracle {

// Brute-force oracle: every subset of inequality rows treated as equalities;
// keep KKT points that are primal and dual feasible, take the best objective.
inline double enumeration_oracle(const QuadraticProgram& qp, bool* feasible) {
    const int n = qp.num_vars();
    const int m = qp.num_ineq();
    const int p = qp.num_eq();
    double best = std::numeric_limits<double>::infinity();
    for (int mask = 0; mask < (1 << m); ++mask) {
        std::vector<int> rows;
        for (int i = 0; i < m; ++i)
            if (mask & (1 << i)) rows.push_back(i);
        const int k = p + static_cast<int>(rows.size());
        if (k > n) continue;
        Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n + k, n + k);
        Eigen::VectorXd rhs(n + k);
        K.topLeftCorner(n, n) = qp.H;
        rhs.head(n) = -qp.g;
        for (int j = 0; j < p; ++j) {
            K.block(0, n + j, n, 1) = qp.A_eq.row(j).transpose();
            K.block(n + j, 0, 1, n) = qp.A_eq.row(j);
            rhs(n + j) = qp.b_eq(j);
        }
        for (std::size_t j = 0; j < rows.size(); ++j) {
            const int c = n + p + static_cast<int>(j);
            K.block(0, c, n, 1) = qp.A_ineq.row(rows[j]).transpose();
            K.block(c, 0, 1, n) = qp.A_ineq.row(rows[j]);
            rhs(c) = qp.b_ineq(rows[j]);
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(K);
        if (lu.rank() < n + k) continue;
        const Eigen::VectorXd sol = lu.solve(rhs);
        const Eigen::VectorXd z = sol.head(n);
        bool ok = true;
        for (std::size_t j = 0; j < rows.size(); ++j) ok = ok && sol(n + p + static_cast<int>(j)) >= -1e-9;
        for (int i = 0; i < m; ++i) ok = ok && qp.A_ineq.row(i).dot(z) <= qp.b_ineq(i) + 1e-9;
        if (!ok) continue;
        best = std::min(best, 0.5 * z.dot(qp.H * z) + qp.g.dot(z));
    }
    *feasible = std::isfinite(best);
    return best;
}

inline QuadraticProgram random_qp(std::mt19937_64& rng, int n, int m, int p) {
    std::normal_distribution<double> N01(0.0, 1.0);
    QuadraticProgram qp(n);
    Eigen::MatrixXd M(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) M(i, j) = N01(rng);
    qp.H = M * M.transpose() + 0.1 * Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < n; ++i) qp.g(i) = 3.0 * N01(rng);
    // Rows around a known interior point keep most instances feasible.
    Eigen::VectorXd z0(n);
    for (int i = 0; i < n; ++i) z0(i) = N01(rng);
    for (int i = 0; i < m; ++i) {
        Eigen::RowVectorXd a(n);
        for (int j = 0; j < n; ++j) a(j) = N01(rng);
        qp.add_inequality(a, a.dot(z0) + std::abs(N01(rng)));
    }
    for (int i = 0; i < p; ++i) {
        Eigen::RowVectorXd a(n);
        for (int j = 0; j < n; ++j) a(j) = N01(rng);
        qp.add_equality(a, a.dot(z0));
    }
    return qp;
}

inline Vector4 fd_column_state(const EgoState& x0, double kappa, const EgoParams& p, int j, double h) {
    Vector4 plus = x0.vec();
    Vector4 minus = x0.vec();
    plus(j) += h;
    minus(j) -= h;
    return (continuous_dynamics(EgoState::from(plus), {}, kappa, p) -
            continuous_dynamics(EgoState::from(minus), {}, kappa, p)) /
           (2.0 * h);
}

inline Vector4 fd_column_input(const EgoState& x0, double kappa, const EgoParams& p, int j, double h) {
    Eigen::Vector2d plus = Eigen::Vector2d::Zero();
    Eigen::Vector2d minus = Eigen::Vector2d::Zero();
    plus(j) += h;
    minus(j) -= h;
    return (continuous_dynamics(x0, EgoInput::from(plus), kappa, p) -
            continuous_dynamics(x0, EgoInput::from(minus), kappa, p)) /
           (2.0 * h);
}

// Disjunction of one crossing spec checked directly on a speed profile.
inline bool crossing_satisfied(double s0, const std::vector<double>& nu, const CrossingConstraintSpec& spec,
                               double T_H, double tol = 1e-9) {
    const auto s = positions(s0, nu, T_H);
    const double sc = spec.s_agent[0];
    bool behind = position_at(s0, nu, T_H, spec.window_end) <= sc - spec.delta1_at_end + tol;
    bool ahead = position_at(s0, nu, T_H, spec.window_begin) >= sc + spec.delta2_at_begin - tol;
    for (std::size_t h = 1; h < s.size(); ++h) {
        if (!spec.active[h]) continue;
        behind = behind && s[h] <= sc - spec.delta1[h] + tol;
        ahead = ahead && s[h] >= sc + spec.delta2[h] - tol;
    }
    return behind || ahead;
}

// Best speed-profile cost over a uniform grid of nu values in [0, speed limit at s_h], one crossing spec.
inline double hl_grid_best(double s0, double v0, const CrossingConstraintSpec& spec, const HighLevelConfig& cfg,
                           double resolution = 0.25) {
    const int NH = cfg.N_H;
    const int levels = static_cast<int>(std::floor(cfg.v_max / resolution + 1e-9)) + 1;
    std::vector<int> idx(static_cast<std::size_t>(NH), 0);
    std::vector<double> nu(static_cast<std::size_t>(NH), 0.0);
    double best = std::numeric_limits<double>::infinity();
    while (true) {
        for (int h = 0; h < NH; ++h) nu[static_cast<std::size_t>(h)] = idx[static_cast<std::size_t>(h)] * resolution;
        const auto s = positions(s0, nu, cfg.T_H);
        bool ok = true;
        for (int h = 0; h < NH && ok; ++h) ok = nu[static_cast<std::size_t>(h)] <= cfg.speed_limit(s[static_cast<std::size_t>(h)]) + 1e-12;
        if (ok && crossing_satisfied(s0, nu, spec, cfg.T_H)) best = std::min(best, speed_profile_cost(nu, v0, cfg));
        int h = 0;
        while (h < NH && ++idx[static_cast<std::size_t>(h)] == levels) idx[static_cast<std::size_t>(h++)] = 0;
        if (h == NH) break;
    }
    return best;
}

// Crossing spec with a random crossing point, occupancy window and margins; s0 = 0.
inline CrossingConstraintSpec random_crossing_spec(std::mt19937_64& rng, const HighLevelConfig& cfg) {
    std::uniform_real_distribution<double> u_sc(15.0, 70.0), u_begin(0.0, 0.6 * cfg.N_H * cfg.T_H),
        u_len(0.5, 4.0), u_margin(4.0, 9.0), u_growth(0.0, 0.6);
    const int NH = cfg.N_H;
    CrossingConstraintSpec spec;
    spec.agent_id = "x";
    spec.type = SpecType::Crossing;
    spec.window_begin = u_begin(rng);
    spec.window_end = spec.window_begin + u_len(rng);
    const double d1 = u_margin(rng), d2 = u_margin(rng), g = u_growth(rng);
    spec.s_agent.assign(static_cast<std::size_t>(NH) + 1, u_sc(rng));
    for (int h = 0; h <= NH; ++h) {
        spec.delta1.push_back(d1 + g * h);
        spec.delta2.push_back(d2 + g * h);
        spec.rho.push_back(spec.delta1.back() - 2.5);
        const double t = h * cfg.T_H;
        spec.active.push_back(t >= spec.window_begin && t <= spec.window_end);
    }
    auto at = [&](const std::vector<double>& v, double t) {
        const double x = std::clamp(t / cfg.T_H, 0.0, static_cast<double>(NH));
        const std::size_t i = std::min(static_cast<std::size_t>(x), static_cast<std::size_t>(NH) - 1);
        const double a = x - static_cast<double>(i);
        return (1.0 - a) * v[i] + a * v[i + 1];
    };
    spec.delta2_at_begin = at(spec.delta2, spec.window_begin);
    spec.delta1_at_end = at(spec.delta1, spec.window_end);
    return spec;
}

}  // namespace smpc::oracle
