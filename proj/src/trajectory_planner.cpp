#include "smpc/trajectory_planner.hpp"

#include "smpc/collision.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace smpc {

void LowLevelConfig::validate() const {
    if (N < 1) throw std::invalid_argument("low level: N must be >= 1");
    if (!(T > 0.0)) throw std::invalid_argument("low level: T must be positive");
    if (!is_psd(Q) || !is_psd(P) || !is_psd(R) || !is_psd(S))
        throw std::invalid_argument("low level: weights must be symmetric PSD");
    for (double b : {beta_tv, beta_ped})
        if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("low level: risk level outside (0, 1)");
    if (eps_tv < 0.0 || eps_ped < 0.0) throw std::invalid_argument("low level: negative safety margin");
    if (!(sensing_radius > 0.0)) throw std::invalid_argument("low level: sensing radius must be positive");
    if (!(rho_slack > 0.0) || linear_slack < 0.0) throw std::invalid_argument("low level: bad slack weights");
    if (linearization_min_speed < 0.0 || lane_margin < 0.0)
        throw std::invalid_argument("low level: negative linearization speed or lane margin");
}

std::string to_string(ConstraintSource s) {
    switch (s) {
        case ConstraintSource::TvSameLane: return "tv_same_lane";
        case ConstraintSource::TvIntersection: return "tv_intersection";
        case ConstraintSource::Pedestrian: return "pedestrian";
    }
    return "unknown";
}

ReferenceTrajectory ReferenceTrajectory::from_speeds(double s0, const std::vector<double>& v, double T,
                                                     double v_max, ReferenceSource source) {
    ReferenceTrajectory ref;
    ref.source = source;
    const std::size_t N = v.size();
    ref.xi.reserve(N + 1);
    double s = s0;
    for (std::size_t k = 0; k <= N; ++k) {
        const double vk = std::clamp(v[std::min(k, N - 1)], 0.0, v_max);
        ref.xi.emplace_back(s, 0.0, 0.0, vk);
        s += vk * T;
    }
    return ref;
}

ReferenceTrajectory ReferenceTrajectory::cruise(double s0, double v_ref, int N, double T, double v_max) {
    return from_speeds(s0, std::vector<double>(static_cast<std::size_t>(N), v_ref), T, v_max,
                       ReferenceSource::StaticCruise);
}

namespace {

Eigen::Vector2d ego_position(const EgoState& ego, const ReferencePath& path) {
    return path.curvilinear_to_world(std::clamp(ego.s, 0.0, path.total_length()), ego.d);
}

Eigen::Vector2d heading_vector(double h) { return {std::cos(h), std::sin(h)}; }

// Arc length of the agent at step k: its projection when that stays continuous
// with the previous step, otherwise constant-speed extrapolation.
std::vector<double> along_path_positions(const AgentPrediction& pred, double s0, double v_along, double T) {
    std::vector<double> s(pred.mean.size());
    s[0] = s0;
    for (std::size_t k = 1; k < s.size(); ++k) {
        const double guess = s[k - 1] + v_along * T;
        const auto& pose = pred.pose[k];
        s[k] = (pose && std::abs(pose->s - guess) < 10.0) ? pose->s : guess;
    }
    return s;
}

}  // namespace

std::vector<AgentPrediction> predict_agents(const EgoState& ego, const std::vector<Agent>& agents,
                                            const std::vector<AgentState>& states, const ReferencePath& path,
                                            const LowLevelConfig& cfg) {
    if (agents.size() != states.size()) throw std::invalid_argument("agent and state lists differ in size");
    const PointMassModel model = point_mass_matrices(cfg.T);
    const Eigen::Vector2d p_ego = ego_position(ego, path);
    std::vector<AgentPrediction> out;
    for (std::size_t i = 0; i < agents.size(); ++i) {
        if ((states[i].position() - p_ego).norm() > cfg.sensing_radius) continue;
        AgentPrediction pred;
        pred.index = static_cast<int>(i);
        pred.mean = predict_mean(states[i], agents[i], cfg.N, model);
        pred.cov = propagate_covariance(error_model(agents[i], model, false), cfg.N);
        pred.pose.reserve(pred.mean.size());
        for (const auto& m : pred.mean) pred.pose.push_back(path.try_project(m.position()));
        out.push_back(std::move(pred));
    }
    return out;
}

double earliest_arrival_time(double distance, double v, double a_max, double v_max) {
    if (distance <= 0.0) return 0.0;
    v = std::clamp(v, 0.0, v_max);
    const double t_acc = (v_max - v) / a_max;
    const double d_acc = v * t_acc + 0.5 * a_max * t_acc * t_acc;
    if (distance <= d_acc) return (-v + std::sqrt(v * v + 2.0 * a_max * distance)) / a_max;
    return t_acc + (distance - d_acc) / v_max;
}

std::vector<PositionalConstraint> generate_constraints(const EgoState& ego, const std::vector<Agent>& agents,
                                                       const std::vector<AgentPrediction>& predictions,
                                                       const ReferencePath& path, const EgoParams& params,
                                                       const LowLevelConfig& cfg) {
    std::vector<PositionalConstraint> rows;
    const double half = 0.5 * params.l_veh;
    const double decel = -params.u_min(0);
    const int N = cfg.N;

    for (const auto& pred : predictions) {
        const Agent& agent = agents[static_cast<std::size_t>(pred.index)];
        const AgentState& now = pred.mean[0];
        const auto& p0 = pred.pose[0];

        if (agent.kind == AgentKind::TargetVehicle) {
            if (p0 && std::abs(p0->d) < 0.5 * params.w_lane && p0->s > ego.s) {
                const Eigen::Vector2d tangent = path.tangent_at(p0->s);
                if (heading_vector(agent.heading(now)).dot(tangent) > 0.0) {
                    const double v_along = now.velocity().dot(tangent);
                    const SafetyEnvelope env = safety_envelope(pred.cov, agent.footprint().length, cfg.beta_tv,
                                                               cfg.eps_tv, ego.v, v_along, decel, tangent);
                    const auto s_tv = along_path_positions(pred, p0->s, v_along, cfg.T);
                    for (int k = 1; k <= N; ++k)
                        rows.push_back({k, 1.0, 0.0, half - s_tv[k] + env.a[k], ConstraintSource::TvSameLane,
                                        agent.id, true});
                    continue;
                }
            }

            // Conflict zone: only while the ego can still stop before it.
            const double s_int = path.intersection_entry_s();
            const double s_exit = path.intersection_exit_s();
            const double gap = s_int - (ego.s + half);
            if (gap <= 0.0 || stopping_distance(ego.v, 0.0, decel) > gap) continue;

            const OrientedBox zone = zone_box(cfg.zone);
            const Footprint& fp = agent.footprint();
            const double gamma_sqrt = std::sqrt(risk_inflation(cfg.beta_tv));
            double t_in = std::numeric_limits<double>::infinity();
            for (int k = 0; k <= N; ++k) {
                const AgentState& m = pred.mean[static_cast<std::size_t>(k)];
                const double h = agent.heading(m);
                const double e = directional_sigma(pred.cov.sigma[static_cast<std::size_t>(k)], heading_vector(h)) *
                                 gamma_sqrt;
                const OrientedBox box{m.position(), h, fp.length + 2.0 * (cfg.eps_tv + e), fp.width};
                if (boxes_overlap(box, zone)) {
                    t_in = k * cfg.T;
                    break;
                }
            }
            // Occupied at any time before the ego could have left the zone: give way.
            const double t_clear = earliest_arrival_time(s_exit + half - ego.s, ego.v, params.u_max(0), params.v_max);
            if (t_in < t_clear) {
                for (int k = 1; k <= N; ++k)
                    rows.push_back({k, 1.0, 0.0, half - s_int, ConstraintSource::TvIntersection, agent.id, true});
            }
            continue;
        }

        // Pedestrian.
        if (!p0 || p0->s <= ego.s) continue;
        const Footprint& fp = agent.footprint();
        const double ped_gamma_sqrt = std::sqrt(risk_inflation(cfg.beta_ped));
        // Carriageway: the ego lane plus the oncoming lane on its left.
        const double band_lo = -0.5 * params.w_lane - 0.5 * fp.width;
        const double band_hi = 1.5 * params.w_lane + 0.5 * fp.width;
        double t_in = std::numeric_limits<double>::infinity();
        for (std::size_t k = 0; k < pred.mean.size(); ++k) {
            const auto& pose = pred.pose[k];
            if (!pose) continue;
            const Eigen::Vector2d t = path.tangent_at(pose->s);
            const Eigen::Vector2d n(-t.y(), t.x());
            const double reach = directional_sigma(pred.cov.sigma[k], n) * ped_gamma_sqrt;
            if (pose->d > band_lo - reach && pose->d < band_hi + reach) {
                t_in = static_cast<double>(k) * cfg.T;
                break;
            }
            if (k + 1 == pred.mean.size()) {
                // Past the horizon: extrapolate the mean walking speed toward the band.
                const double vd = pred.mean[k].velocity().dot(n);
                const double dist = pose->d < band_lo ? band_lo - reach - pose->d : pose->d - band_hi - reach;
                const double closing = pose->d < band_lo ? vd : -vd;
                if (closing > 0.0) t_in = static_cast<double>(k) * cfg.T + dist / closing;
            }
        }
        // Keeping its speed, the ego rear passes the pedestrian before it can reach the road.
        const double clear_dist = p0->s + 0.5 * fp.length + cfg.eps_ped + half - ego.s;
        const double t_clear = ego.v > 0.0 ? clear_dist / ego.v : std::numeric_limits<double>::infinity();
        const bool crossing = t_in < t_clear;
        if (!crossing) continue;
        const Eigen::Vector2d tangent = path.tangent_at(p0->s);
        const double v_along = now.velocity().dot(tangent);
        const SafetyEnvelope env =
            safety_envelope(pred.cov, fp.length, cfg.beta_ped, cfg.eps_ped, ego.v, v_along, decel, tangent);
        const auto s_p = along_path_positions(pred, p0->s, v_along, cfg.T);
        for (int k = 1; k <= N; ++k)
            rows.push_back({k, 1.0, 0.0, half - s_p[k] + env.a[k], ConstraintSource::Pedestrian, agent.id, true});
    }
    return rows;
}

CondensedOcp build_ocp(const EgoState& ego, const EgoInput& u_prev, const LinearDiscreteModel& model,
                       const ReferenceTrajectory& ref, const std::vector<PositionalConstraint>& constraints,
                       const EgoParams& params, const LowLevelConfig& cfg, bool soften_lane,
                       const std::vector<Vector4>& drift) {
    const int N = cfg.N;
    if (!drift.empty() && static_cast<int>(drift.size()) != N)
        throw std::invalid_argument("drift must have one entry per prediction step");
    if (static_cast<int>(ref.xi.size()) < N + 1)
        throw std::invalid_argument("reference trajectory shorter than the horizon");
    for (const auto& c : constraints) {
        if (c.k < 1 || c.k > N) throw std::invalid_argument("positional constraint step outside 1..N");
        if (!std::isfinite(c.q_s) || !std::isfinite(c.q_d) || !std::isfinite(c.q_t))
            throw std::invalid_argument("positional constraint with non-finite coefficients");
    }

    const int nx = 4 * N;
    const int nu = 2 * N;
    CondensedOcp ocp;
    ocp.Gamma = Eigen::MatrixXd::Zero(nx, nu);
    ocp.free_response.resize(nx);

    Vector4 f = ego.vec();
    Eigen::MatrixXd prev = Eigen::MatrixXd::Zero(4, nu);
    for (int k = 1; k <= N; ++k) {
        f = model.offset + model.A * f;
        if (!drift.empty()) f += drift[static_cast<std::size_t>(k - 1)];
        ocp.free_response.segment<4>(4 * (k - 1)) = f;
        Eigen::MatrixXd cur = model.A * prev;
        cur.block(0, 2 * (k - 1), 4, 2) += model.B;
        ocp.Gamma.block(4 * (k - 1), 0, 4, nu) = cur;
        prev = std::move(cur);
    }

    Eigen::MatrixXd Qbar = Eigen::MatrixXd::Zero(nx, nx);
    Eigen::VectorXd target(nx);
    for (int k = 1; k <= N; ++k) {
        Qbar.block<4, 4>(4 * (k - 1), 4 * (k - 1)) = (k == N) ? cfg.P : cfg.Q;
        target.segment<4>(4 * (k - 1)) = ref.xi[static_cast<std::size_t>(k)];
    }
    Eigen::MatrixXd Rbar = Eigen::MatrixXd::Zero(nu, nu);
    Eigen::MatrixXd Sbar = Eigen::MatrixXd::Zero(nu, nu);
    Eigen::MatrixXd D = Eigen::MatrixXd::Identity(nu, nu);
    for (int j = 0; j < N; ++j) {
        Rbar.block<2, 2>(2 * j, 2 * j) = cfg.R;
        Sbar.block<2, 2>(2 * j, 2 * j) = cfg.S;
        if (j > 0) D.block<2, 2>(2 * j, 2 * (j - 1)) = -Eigen::Matrix2d::Identity();
    }
    Eigen::VectorXd Eu = Eigen::VectorXd::Zero(nu);
    Eu.head<2>() = u_prev.vec();

    const Eigen::VectorXd err = target - ocp.free_response;
    QuadraticProgram& qp = ocp.qp;
    qp = QuadraticProgram(nu);
    qp.H = 2.0 * (ocp.Gamma.transpose() * Qbar * ocp.Gamma + Rbar + D.transpose() * Sbar * D);
    qp.H = 0.5 * (qp.H + qp.H.transpose()).eval();
    qp.g = -2.0 * (ocp.Gamma.transpose() * Qbar * err + D.transpose() * Sbar * Eu);
    ocp.cost_constant = err.dot(Qbar * err) + Eu.dot(Sbar * Eu);
    qp.rho_slack = cfg.rho_slack;
    qp.linear_slack = cfg.linear_slack;

    Eigen::RowVectorXd row(nu);
    // Input bounds.
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < 2; ++i) {
            row.setZero();
            row(2 * j + i) = 1.0;
            qp.add_inequality(row, params.u_max(i));
            qp.add_inequality(-row, -params.u_min(i));
        }
    // Rate bounds, u_{-1} = last applied input.
    for (int j = 0; j < N; ++j)
        for (int i = 0; i < 2; ++i) {
            row.setZero();
            row(2 * j + i) = 1.0;
            double offset = 0.0;
            if (j == 0) offset = u_prev.vec()(i);
            else row(2 * (j - 1) + i) = -1.0;
            qp.add_inequality(row, params.du_max(i) + offset);
            qp.add_inequality(-row, -params.du_min(i) - offset);
        }
    // Speed bounds.
    for (int k = 1; k <= N; ++k) {
        const int r = 4 * (k - 1) + 3;
        const double fv = ocp.free_response(r);
        qp.add_inequality(ocp.Gamma.row(r), params.v_max - fv);
        qp.add_inequality(-ocp.Gamma.row(r), fv);
    }
    // Lane containment.
    ocp.lane_row_begin = qp.num_ineq();
    const double lim = params.lateral_limit() - cfg.lane_margin;
    for (int k = 1; k <= N; ++k) {
        const int r = 4 * (k - 1) + 1;
        const double fd = ocp.free_response(r);
        qp.add_inequality(ocp.Gamma.row(r), lim - fd, soften_lane);
        qp.add_inequality(-ocp.Gamma.row(r), lim + fd, soften_lane);
    }
    // Positional rows.
    ocp.positional_row_begin = qp.num_ineq();
    for (const auto& c : constraints) {
        const int rs = 4 * (c.k - 1);
        const int rd = rs + 1;
        row = c.q_s * ocp.Gamma.row(rs) + c.q_d * ocp.Gamma.row(rd);
        const double b = -c.q_t - c.q_s * ocp.free_response(rs) - c.q_d * ocp.free_response(rd);
        qp.add_inequality(row, b, c.soft);
    }
    return ocp;
}

std::vector<Vector4> curvature_drift(const EgoState& ego, const ReferencePath& path, const std::vector<double>& s_nom,
                                     const std::vector<double>& v_nom, double T) {
    if (s_nom.size() != v_nom.size()) throw std::invalid_argument("nominal positions and speeds differ in size");
    auto kappa = [&](double s) { return path.curvature_at(std::clamp(s, 0.0, path.total_length())); };
    const double c = std::cos(ego.phi);
    const double k0 = kappa(ego.s);
    const double den0 = 1.0 - k0 * ego.d;
    std::vector<Vector4> out(s_nom.size(), Vector4::Zero());
    for (std::size_t k = 0; k < s_nom.size(); ++k) {
        const double kk = kappa(s_nom[k]);
        const double den = 1.0 - kk * ego.d;
        if (std::abs(den) < 1e-6 || std::abs(den0) < 1e-6) continue;
        const double v = std::max(0.0, v_nom[k]);
        out[k](0) = T * v * (c / den - c / den0);
        out[k](2) = -T * v * (kk * c / den - k0 * c / den0);
    }
    return out;
}

ControlOutput control_step(const EgoState& ego, const EgoInput& u_prev, const std::vector<Agent>& agents,
                           const std::vector<AgentState>& states, const ReferencePath& path,
                           const EgoParams& params, const LowLevelConfig& cfg, const ReferenceTrajectory& ref,
                           bool keep_qp) {
    EgoState anchor = ego;
    anchor.v = std::max(ego.v, cfg.linearization_min_speed);
    const LinearDiscreteModel model = linear_model_at(anchor, path, params, cfg.T);
    const auto predictions = predict_agents(ego, agents, states, path, cfg);
    ControlOutput out;
    ControlDiagnostics& diag = out.diag;
    diag.constraints = generate_constraints(ego, agents, predictions, path, params, cfg);

    const int N = cfg.N;
    std::vector<Vector4> drift;
    if (cfg.curvature_preview) {
        std::vector<double> s_nom(static_cast<std::size_t>(N)), v_nom(static_cast<std::size_t>(N), ego.v);
        for (int k = 0; k < N; ++k) s_nom[static_cast<std::size_t>(k)] = ego.s + k * cfg.T * ego.v;
        drift = curvature_drift(ego, path, s_nom, v_nom, cfg.T);
    }
    auto solve_ocp = [&](CondensedOcp* ocp, QpSolution* sol) {
        *ocp = build_ocp(ego, u_prev, model, ref, diag.constraints, params, cfg, false, drift);
        *sol = solve(ocp->qp);
        diag.lane_softened = false;
        if (sol->status == QpStatus::Infeasible) {
            *ocp = build_ocp(ego, u_prev, model, ref, diag.constraints, params, cfg, true, drift);
            *sol = solve(ocp->qp);
            diag.lane_softened = true;
        }
    };
    CondensedOcp ocp;
    QpSolution sol;
    solve_ocp(&ocp, &sol);
    if (cfg.curvature_preview && sol.optimal()) {
        // One refinement with the positions and speeds of the first solution.
        const Eigen::VectorXd X = ocp.free_response + ocp.Gamma * sol.z;
        std::vector<double> s_nom(static_cast<std::size_t>(N)), v_nom(static_cast<std::size_t>(N));
        s_nom[0] = ego.s;
        v_nom[0] = ego.v;
        for (int k = 1; k < N; ++k) {
            s_nom[static_cast<std::size_t>(k)] = X(4 * (k - 1));
            v_nom[static_cast<std::size_t>(k)] = X(4 * (k - 1) + 3);
        }
        drift = curvature_drift(ego, path, s_nom, v_nom, cfg.T);
        solve_ocp(&ocp, &sol);
    }
    diag.status = sol.status;
    diag.iterations = sol.iterations;

    Eigen::VectorXd U;
    if (sol.optimal()) {
        U = sol.z;
        diag.objective = sol.objective + ocp.cost_constant;
        diag.kkt_residual = sol.max_kkt_residual();
        out.u = EgoInput::from(sol.z.head<2>().cwiseMax(params.u_min).cwiseMin(params.u_max));
    } else {
        diag.fallback = true;
        out.u = {params.u_min(0), 0.0};
        U = out.u.vec().replicate(N, 1);
    }

    const Eigen::VectorXd X = ocp.free_response + ocp.Gamma * U;
    diag.predicted.reserve(static_cast<std::size_t>(N) + 1);
    diag.predicted.push_back(ego.vec());
    for (int k = 0; k < N; ++k) diag.predicted.push_back(X.segment<4>(4 * k));

    diag.slack.assign(diag.constraints.size(), 0.0);
    if (sol.optimal()) {
        int soft_index = 0;
        std::vector<int> soft_of_row(static_cast<std::size_t>(ocp.qp.num_ineq()), -1);
        for (int r = 0; r < ocp.qp.num_ineq(); ++r)
            if (!ocp.qp.soft.empty() && ocp.qp.soft[static_cast<std::size_t>(r)]) soft_of_row[r] = soft_index++;
        for (std::size_t i = 0; i < diag.constraints.size(); ++i) {
            const int r = ocp.positional_row_begin + static_cast<int>(i);
            const int si = soft_of_row[static_cast<std::size_t>(r)];
            if (si >= 0) diag.slack[i] = sol.slack(si);
            const bool bound = std::binary_search(sol.active.begin(), sol.active.end(), r);
            if (bound || diag.slack[i] > 1e-9) diag.active.push_back(static_cast<int>(i));
        }
    }
    if (keep_qp) out.qp = std::move(ocp.qp);
    return out;
}

}  // namespace smpc
