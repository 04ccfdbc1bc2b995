#include "smpc/maneuver_planner.hpp"

#include "smpc/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

namespace smpc {

double HighLevelConfig::speed_limit(double s) const {
    double lim = v_max;
    for (const auto& z : limits)
        if (s >= z.s_begin && s <= z.s_end) lim = std::min(lim, z.limit);
    return lim;
}

int HighLevelConfig::averaging_factor(double T) const {
    const double ratio = T_H / T;
    const double r = std::round(ratio);
    if (r < 1.0 || std::abs(ratio - r) > 1e-9 * ratio)
        throw std::invalid_argument("high level: T_H must be an integer multiple of T");
    return static_cast<int>(r);
}

void HighLevelConfig::validate(double T, int N) const {
    if (N_H < 1) throw std::invalid_argument("high level: N_H must be >= 1");
    if (!(T_H > 0.0)) throw std::invalid_argument("high level: T_H must be positive");
    averaging_factor(T);
    if (N_H * T_H < N * T - 1e-9) throw std::invalid_argument("high level: N_H T_H shorter than N T");
    if (r_H < 0.0) throw std::invalid_argument("high level: negative r_H");
    for (double b : {beta_tv, beta_ped})
        if (!(b > 0.0 && b < 1.0)) throw std::invalid_argument("high level: risk level outside (0, 1)");
    if (!(v_max > 0.0) || v_ref < 0.0 || v_ref > v_max) throw std::invalid_argument("high level: bad speeds");
    for (const auto& z : limits)
        if (z.s_end < z.s_begin || z.limit < 0.0) throw std::invalid_argument("high level: bad speed-limit zone");
}

std::string to_string(SpecType t) { return t == SpecType::InFront ? "in_front" : "crossing"; }

std::vector<double> positions(double s0, const std::vector<double>& nu, double T_H) {
    std::vector<double> s(nu.size() + 1);
    s[0] = s0;
    for (std::size_t h = 0; h < nu.size(); ++h) s[h + 1] = s[h] + T_H * nu[h];
    return s;
}

double position_at(double s0, const std::vector<double>& nu, double T_H, double t) {
    double s = s0;
    for (std::size_t j = 0; j < nu.size(); ++j) s += std::clamp(t - static_cast<double>(j) * T_H, 0.0, T_H) * nu[j];
    return s;
}

double speed_profile_cost(const std::vector<double>& nu, double v0, const HighLevelConfig& cfg) {
    double cost = 0.0;
    double prev = v0;
    for (double v : nu) {
        cost += (v - prev) * (v - prev) + cfg.r_H * (v - cfg.v_ref) * (v - cfg.v_ref);
        prev = v;
    }
    return cost;
}

namespace {

Eigen::Vector2d unit(double h) { return {std::cos(h), std::sin(h)}; }

double interpolate(const std::vector<double>& v, double T_H, double t) {
    const double x = std::clamp(t / T_H, 0.0, static_cast<double>(v.size() - 1));
    const std::size_t i = std::min(static_cast<std::size_t>(x), v.size() - 2);
    const double a = x - static_cast<double>(i);
    return (1.0 - a) * v[i] + a * v[i + 1];
}

// First arc length at which the path crosses the line p0 + lambda u.
std::optional<double> line_crossing(const ReferencePath& path, double s_from, const Eigen::Vector2d& p0,
                                    const Eigen::Vector2d& u) {
    auto f = [&](double s) {
        const Eigen::Vector2d r = path.point_at(s) - p0;
        return u.x() * r.y() - u.y() * r.x();
    };
    const double step = 0.5;
    double a = std::max(0.0, s_from);
    double fa = f(a);
    while (a < path.total_length()) {
        const double b = std::min(a + step, path.total_length());
        const double fb = f(b);
        if (fa == 0.0) return a;
        if ((fa < 0.0 && fb > 0.0) || (fa > 0.0 && fb < 0.0)) {
            double lo = a, hi = b, flo = fa;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (lo + hi);
                const double fm = f(mid);
                if ((fm < 0.0) == (flo < 0.0)) {
                    lo = mid;
                    flo = fm;
                } else {
                    hi = mid;
                }
            }
            return 0.5 * (lo + hi);
        }
        a = b;
        fa = fb;
    }
    return std::nullopt;
}

// Time span in which lo(t) <= lambda(t) <= hi(t), all linear between samples.
bool occupancy_window(const std::vector<double>& lambda, const std::vector<double>& lo_band,
                      const std::vector<double>& hi_band, double T_H, double* t_in, double* t_out) {
    *t_in = std::numeric_limits<double>::infinity();
    *t_out = -*t_in;
    for (std::size_t h = 0; h + 1 < lambda.size(); ++h) {
        double lo = 0.0, hi = 1.0;
        const double p1 = lambda[h] - hi_band[h];
        const double q1 = (lambda[h + 1] - hi_band[h + 1]) - p1;
        const double p2 = lo_band[h] - lambda[h];
        const double q2 = (lo_band[h + 1] - lambda[h + 1]) - p2;
        bool empty = false;
        for (auto [p, q] : {std::pair{p1, q1}, std::pair{p2, q2}}) {
            if (std::abs(q) < 1e-15) {
                if (p > 0.0) empty = true;
            } else if (q > 0.0) {
                hi = std::min(hi, -p / q);
            } else {
                lo = std::max(lo, -p / q);
            }
        }
        if (empty || lo > hi) continue;
        *t_in = std::min(*t_in, (static_cast<double>(h) + lo) * T_H);
        *t_out = std::max(*t_out, (static_cast<double>(h) + hi) * T_H);
    }
    return std::isfinite(*t_in);
}

}  // namespace

std::vector<CrossingConstraintSpec> project_agents_high_level(const EgoState& ego, const std::vector<Agent>& agents,
                                                              const std::vector<AgentState>& states,
                                                              const ReferencePath& path, const EgoParams& params,
                                                              const HighLevelConfig& cfg, double T_low) {
    if (agents.size() != states.size()) throw std::invalid_argument("agent and state lists differ in size");
    const int k_bar = cfg.averaging_factor(T_low);
    const int NH = cfg.N_H;
    const PointMassModel model = point_mass_matrices(cfg.T_H);
    const Eigen::Vector2d p_ego = path.curvilinear_to_world(std::clamp(ego.s, 0.0, path.total_length()), ego.d);
    const double half = 0.5 * params.l_veh;
    const double decel = -params.u_min(0);

    std::vector<CrossingConstraintSpec> specs;
    for (std::size_t i = 0; i < agents.size(); ++i) {
        const Agent& agent = agents[i];
        const AgentState& now = states[i];
        if ((now.position() - p_ego).norm() > cfg.sensing_radius) continue;
        const bool is_tv = agent.kind == AgentKind::TargetVehicle;
        const double gamma_sqrt = std::sqrt(risk_inflation(is_tv ? cfg.beta_tv : cfg.beta_ped));
        const double eps = is_tv ? cfg.eps_tv : cfg.eps_ped;
        const double half_agent = 0.5 * agent.footprint().length;
        const auto mean = predict_mean(now, agent, NH, model, true);
        const auto cov = propagate_covariance(error_model(agent, model, true, k_bar), NH);

        CrossingConstraintSpec spec;
        spec.agent_id = agent.id;
        spec.s_agent.resize(NH + 1);
        spec.rho.resize(NH + 1);
        spec.delta1.resize(NH + 1);
        spec.delta2.resize(NH + 1);
        spec.active.assign(NH + 1, true);

        const auto p0 = path.try_project(now.position());
        if (is_tv && p0 && std::abs(p0->d) < 0.5 * params.w_lane && p0->s > ego.s) {
            const Eigen::Vector2d tangent = path.tangent_at(p0->s);
            if (unit(agent.heading(now)).dot(tangent) > 0.0) {
                const double v_along = now.velocity().dot(tangent);
                const double stop = stopping_distance(ego.v, v_along, decel);
                spec.type = SpecType::InFront;
                spec.s_agent[0] = p0->s;
                for (int h = 0; h <= NH; ++h) {
                    if (h > 0) {
                        const double guess = spec.s_agent[h - 1] + v_along * cfg.T_H;
                        const auto pose = path.try_project(mean[h].position());
                        spec.s_agent[h] = (pose && std::abs(pose->s - guess) < 10.0) ? pose->s : guess;
                    }
                    const double e = directional_sigma(cov.sigma[h], tangent) * gamma_sqrt;
                    spec.rho[h] = half_agent + stop + e + eps;
                    spec.delta1[h] = spec.delta2[h] = half + spec.rho[h] + cfg.extra_safety;
                }
                spec.window_begin = 0.0;
                spec.window_end = NH * cfg.T_H;
                specs.push_back(std::move(spec));
                continue;
            }
        }

        // Crossing: straight motion line along the lane (TV) or the walking direction (pedestrian).
        Eigen::Vector2d u;
        if (is_tv) {
            u = unit(agent.tv.lane_heading);
        } else {
            if (now.velocity().norm() < 0.1) continue;
            u = now.velocity().normalized();
        }
        const auto s_cross = line_crossing(path, ego.s - half, now.position(), u);
        if (!s_cross) continue;
        const Eigen::Vector2d c = path.point_at(*s_cross);
        const Eigen::Vector2d tangent = path.tangent_at(*s_cross);
        const double sin_angle = std::abs(u.x() * tangent.y() - u.y() * tangent.x());
        if (sin_angle < 0.2) continue;

        const double v_along = now.velocity().dot(tangent);
        const double stop = stopping_distance(ego.v, v_along, decel);
        // Band along u occupied by the road: the ego lane for vehicles, the whole
        // carriageway (ego lane plus the oncoming lane on its left) for pedestrians.
        const double u_n = u.dot(Eigen::Vector2d(-tangent.y(), tangent.x()));
        double d_lo = -0.5 * params.w_lane, d_hi = 0.5 * params.w_lane;
        if (!is_tv) d_hi = 1.5 * params.w_lane;
        const double l_lo = std::min(d_lo / u_n, d_hi / u_n);
        const double l_hi = std::max(d_lo / u_n, d_hi / u_n);
        std::vector<double> lambda(NH + 1), lo_band(NH + 1), hi_band(NH + 1);
        for (int h = 0; h <= NH; ++h) {
            lambda[h] = (mean[h].position() - c).dot(u);
            const double margin = half_agent + eps + directional_sigma(cov.sigma[h], u) * gamma_sqrt;
            lo_band[h] = l_lo - margin;
            hi_band[h] = l_hi + margin;
            const double e_long = directional_sigma(cov.sigma[h], tangent) * gamma_sqrt;
            spec.s_agent[h] = *s_cross;
            spec.rho[h] = half_agent + stop + e_long + eps;
            spec.delta1[h] = half + spec.rho[h] + cfg.extra_safety;
            // The stopping distance protects a vehicle that is still behind; once ahead it is not needed.
            spec.delta2[h] = half + half_agent + e_long + eps + cfg.extra_safety;
            spec.active[h] = lambda[h] >= lo_band[h] && lambda[h] <= hi_band[h];
        }
        double t_in = 0.0, t_out = 0.0;
        if (!occupancy_window(lambda, lo_band, hi_band, cfg.T_H, &t_in, &t_out)) continue;
        spec.type = SpecType::Crossing;
        spec.window_begin = t_in;
        spec.window_end = t_out;
        spec.delta2_at_begin = interpolate(spec.delta2, cfg.T_H, t_in);
        spec.delta1_at_end = interpolate(spec.delta1, cfg.T_H, t_out);
        specs.push_back(std::move(spec));
    }
    return specs;
}

namespace {

struct BranchQp {
    QuadraticProgram qp;
    bool trivially_infeasible = false;
};

Eigen::RowVectorXd time_row(int NH, double T_H, double t) {
    Eigen::RowVectorXd r(NH);
    for (int j = 0; j < NH; ++j) r(j) = std::clamp(t - j * T_H, 0.0, T_H);
    return r;
}

// a nu <= b, or a constant check when a vanishes.
void add_row(BranchQp& b, const Eigen::RowVectorXd& a, double rhs, bool soft) {
    if (a.cwiseAbs().maxCoeff() < 1e-12) {
        if (rhs < -1e-9 && !soft) b.trivially_infeasible = true;
        return;
    }
    b.qp.add_inequality(a, rhs, soft);
}

BranchQp build_branch(double s0, double v0, const std::vector<CrossingConstraintSpec>& specs,
                      const std::vector<Branch>& branches, const std::vector<double>& s_prev, const HighLevelConfig& cfg,
                      bool soft_crossing) {
    const int NH = cfg.N_H;
    BranchQp b;
    QuadraticProgram& qp = b.qp;
    qp = QuadraticProgram(NH);
    Eigen::MatrixXd D = Eigen::MatrixXd::Identity(NH, NH);
    for (int h = 1; h < NH; ++h) D(h, h - 1) = -1.0;
    qp.H = 2.0 * (D.transpose() * D + cfg.r_H * Eigen::MatrixXd::Identity(NH, NH));
    qp.g = Eigen::VectorXd::Constant(NH, -2.0 * cfg.r_H * cfg.v_ref);
    qp.g(0) -= 2.0 * v0;
    qp.rho_slack = cfg.rho_slack;
    qp.linear_slack = cfg.linear_slack;

    Eigen::RowVectorXd e(NH);
    for (int h = 0; h < NH; ++h) {
        e.setZero();
        e(h) = 1.0;
        qp.add_inequality(-e, 0.0);
        qp.add_inequality(e, cfg.speed_limit(s_prev[h]));
    }
    std::size_t ci = 0;
    for (const auto& spec : specs) {
        if (spec.type == SpecType::InFront) {
            for (int h = 1; h <= NH; ++h)
                add_row(b, time_row(NH, cfg.T_H, h * cfg.T_H), spec.s_agent[h] - spec.delta1[h] - s0, true);
            continue;
        }
        const Branch br = branches[ci++];
        const double sc = spec.s_agent[0];
        if (br == Branch::Ahead) {
            add_row(b, -time_row(NH, cfg.T_H, spec.window_begin), -(sc + spec.delta2_at_begin - s0), soft_crossing);
            for (int h = 1; h <= NH; ++h)
                if (spec.active[h])
                    add_row(b, -time_row(NH, cfg.T_H, h * cfg.T_H), -(sc + spec.delta2[h] - s0), soft_crossing);
        } else {
            add_row(b, time_row(NH, cfg.T_H, spec.window_end), sc - spec.delta1_at_end - s0, soft_crossing);
            for (int h = 1; h <= NH; ++h)
                if (spec.active[h])
                    add_row(b, time_row(NH, cfg.T_H, h * cfg.T_H), sc - spec.delta1[h] - s0, soft_crossing);
        }
    }
    return b;
}

struct BranchResult {
    bool feasible = false;
    QpSolution sol;
};

// One fixed-point pass on the position-dependent speed limit.
BranchResult solve_branch(double s0, double v0, const std::vector<CrossingConstraintSpec>& specs,
                          const std::vector<Branch>& branches, const HighLevelConfig& cfg, bool soft_crossing) {
    std::vector<double> s_prev(cfg.N_H + 1);
    for (int h = 0; h <= cfg.N_H; ++h) s_prev[h] = s0 + h * cfg.T_H * std::max(0.0, v0);
    BranchResult r;
    for (int pass = 0; pass < 2; ++pass) {
        BranchQp b = build_branch(s0, v0, specs, branches, s_prev, cfg, soft_crossing);
        if (b.trivially_infeasible) return {};
        r.sol = solve(b.qp);
        if (!r.sol.optimal()) return {};
        const std::vector<double> nu(r.sol.z.data(), r.sol.z.data() + r.sol.z.size());
        s_prev = positions(s0, nu, cfg.T_H);
    }
    r.feasible = true;
    return r;
}

int switching_step(const CrossingConstraintSpec& spec, Branch b, const HighLevelConfig& cfg) {
    if (b == Branch::Behind) return cfg.N_H + 1;
    return std::max(1, static_cast<int>(std::ceil(spec.window_begin / cfg.T_H - 1e-9)));
}

}  // namespace

ManeuverPlan enumerate_and_solve(double s0, double v0, const std::vector<CrossingConstraintSpec>& specs,
                                 const HighLevelConfig& cfg, double plan_time) {
    int n_cross = 0;
    for (const auto& s : specs) n_cross += s.type == SpecType::Crossing ? 1 : 0;
    if (n_cross > 12) throw std::invalid_argument("too many crossing agents for enumeration");
    const double constant = v0 * v0 + cfg.r_H * cfg.N_H * cfg.v_ref * cfg.v_ref;

    ManeuverPlan best;
    best.plan_time = plan_time;
    best.s0 = s0;
    best.v0 = v0;
    bool have = false;
    int best_sum = -1;
    std::vector<int> best_switch;

    // Hard crossing rows first; if no pattern is feasible, the pattern with the least violation.
    for (const bool soft : {false, true}) {
        for (int mask = 0; mask < (1 << n_cross); ++mask) {
            std::vector<Branch> branches(static_cast<std::size_t>(n_cross));
            std::vector<int> sw;
            int sum = 0;
            int ci = 0;
            for (const auto& spec : specs) {
                if (spec.type != SpecType::Crossing) continue;
                branches[ci] = (mask >> ci) & 1 ? Branch::Ahead : Branch::Behind;
                sw.push_back(switching_step(spec, branches[ci], cfg));
                sum += sw.back();
                ++ci;
            }
            ++best.branches_tried;
            const BranchResult r = solve_branch(s0, v0, specs, branches, cfg, soft);
            if (!r.feasible) continue;
            if (!soft) ++best.branches_feasible;
            const double obj = r.sol.objective + constant;
            bool better = !have || obj < best.objective - 1e-9;
            if (have && std::abs(obj - best.objective) <= 1e-9)
                better = sum > best_sum || (sum == best_sum && sw > best_switch);
            if (!better) continue;
            have = true;
            best.objective = obj;
            best.nu.assign(r.sol.z.data(), r.sol.z.data() + r.sol.z.size());
            best.branch = branches;
            best.switching = sw;
            best.kkt_residual = r.sol.max_kkt_residual();
            best_sum = sum;
            best_switch = sw;
        }
        if (have) break;
        best.degraded = true;
    }

    if (!have) {
        // Only the speed bounds remain; hold the current speed within them.
        best.branch.assign(static_cast<std::size_t>(n_cross), Branch::Behind);
        best.switching.assign(static_cast<std::size_t>(n_cross), cfg.N_H + 1);
        best.nu.assign(static_cast<std::size_t>(cfg.N_H), std::clamp(v0, 0.0, cfg.v_max));
        best.objective = speed_profile_cost(best.nu, v0, cfg);
    }
    best.s = positions(s0, best.nu, cfg.T_H);
    return best;
}

double crossing_residual(const ManeuverPlan& plan, const std::vector<CrossingConstraintSpec>& specs) {
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto& spec : specs) {
        if (spec.type != SpecType::Crossing) continue;
        for (std::size_t h = 1; h < spec.active.size() && h < plan.s.size(); ++h) {
            if (!spec.active[h]) continue;
            const double sa = spec.s_agent[h];
            worst = std::max(worst, (plan.s[h] - sa + spec.delta1[h]) * (-plan.s[h] + sa + spec.delta2[h]));
        }
    }
    return worst;
}

ReferenceTrajectory reference_for_low_level(const ManeuverPlan& plan, const HighLevelConfig& cfg, double now,
                                            double T, int N, double ego_s, double v_max) {
    if (plan.nu.empty()) throw std::invalid_argument("empty maneuver plan");
    std::vector<double> v(static_cast<std::size_t>(N));
    const int last = static_cast<int>(plan.nu.size()) - 1;
    for (int k = 0; k < N; ++k) {
        const double t = now + k * T - plan.plan_time;
        const int idx = std::clamp(static_cast<int>(std::floor(t / cfg.T_H + 1e-9)), 0, last);
        v[static_cast<std::size_t>(k)] = plan.nu[static_cast<std::size_t>(idx)];
    }
    ReferenceTrajectory ref = ReferenceTrajectory::from_speeds(ego_s, v, T, v_max, ReferenceSource::ManeuverPlanner);
    ref.stale = now - plan.plan_time > cfg.T_H + T + 1e-9;
    return ref;
}

}  // namespace smpc
