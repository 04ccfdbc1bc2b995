#include "smpc/simulation.hpp"

#include "smpc/rng.hpp"
#include "smpc/uncertainty.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <ostream>
#include <thread>

namespace smpc {

OrientedBox ego_box(const EgoState& ego, const ReferencePath& path, const EgoParams& params) {
    const double s = std::clamp(ego.s, 0.0, path.total_length());
    return {path.curvilinear_to_world(s, ego.d), path.heading_at(s) + ego.phi, params.l_veh, params.w_veh};
}

OrientedBox agent_box(const AgentState& state, const Agent& agent) {
    const Footprint& f = agent.footprint();
    return {state.position(), agent.heading(state), f.length, f.width};
}

double stage_cost(const EgoState& ego, const EgoInput& u, const EgoInput& u_prev, const LowLevelConfig& cfg,
                  double v_ref) {
    const Vector4 dx(0.0, ego.d, ego.phi, ego.v - v_ref);
    const Eigen::Vector2d uu = u.vec();
    const Eigen::Vector2d du = uu - u_prev.vec();
    return dx.dot(cfg.Q * dx) + uu.dot(cfg.R * uu) + du.dot(cfg.S * du);
}

double score(const EpisodeLog& log, const LowLevelConfig& cfg, double v_ref_fixed) {
    double J = 0.0;
    EgoInput prev;
    for (const auto& r : log.steps) {
        J += stage_cost(r.ego, r.u, prev, cfg, v_ref_fixed);
        prev = r.u;
    }
    return J;
}

EpisodeLog run_episode(const Scenario& scn, std::ostream* qp_dump) {
    EpisodeLog log;
    log.scenario = scn.name;
    log.seed = scn.seed;
    log.maneuver_planner = scn.maneuver_planner;
    log.noise = scn.noise;
    log.steps_planned = scn.steps;
    log.T = scn.low.T;
    for (const auto& a : scn.agents) log.agent_ids.push_back(a.id);
    log.min_gap.assign(scn.agents.size(), std::numeric_limits<double>::infinity());

    const ReferencePath path = scn.build_path();
    const HighLevelConfig high = scn.high_level_for(path);
    const LowLevelConfig& low = scn.low;
    const EgoParams& params = scn.ego_params;
    const int k_bar = high.averaging_factor(low.T);
    const PointMassModel agent_model = point_mass_matrices(low.T);

    std::vector<NoiseStream> noise;
    std::vector<Eigen::Matrix2d> noise_sqrt;
    for (std::size_t i = 0; i < scn.agents.size(); ++i) {
        noise.emplace_back(scn.seed, i + 1);
        const Agent& a = scn.agents[i];
        noise_sqrt.push_back(
            covariance_sqrt(a.kind == AgentKind::TargetVehicle ? a.tv.noise_cov : a.ped.noise_cov));
    }

    EgoState ego = scn.ego_initial;
    EgoInput u_prev;
    std::vector<AgentState> agents = scn.agent_initial;
    std::optional<ManeuverPlan> plan;
    log.min_speed = ego.v;

    try {
        for (int tau = 1; tau <= scn.steps; ++tau) {
            const double t = (tau - 1) * low.T;
            if (scn.maneuver_planner && (tau - 1) % k_bar == 0) {
                const auto specs = project_agents_high_level(ego, scn.agents, agents, path, params, high, low.T);
                PlanRecord pr;
                pr.step = tau;
                pr.plan = enumerate_and_solve(ego.s, ego.v, specs, high, t);
                pr.specs = specs;
                plan = pr.plan;
                log.plans.push_back(std::move(pr));
            }
            const ReferenceTrajectory ref =
                plan ? reference_for_low_level(*plan, high, t, low.T, low.N, ego.s, params.v_max)
                     : ReferenceTrajectory::cruise(ego.s, scn.cruise_speed, low.N, low.T, params.v_max);

            ControlOutput out = control_step(ego, u_prev, scn.agents, agents, path, params, low, ref,
                                             qp_dump != nullptr);
            if (qp_dump && out.qp) {
                *qp_dump << "# step " << tau << "\n";
                dump_text(*out.qp, *qp_dump);
            }

            StepRecord rec;
            rec.step = tau;
            rec.time = t;
            rec.ego = ego;
            const OrientedBox eb0 = ego_box(ego, path, params);
            rec.ego_xy = eb0.center;
            rec.ego_heading = eb0.heading;
            rec.u = out.u;
            rec.v_ref = ref.xi.size() > 1 ? ref.xi[1](3) : ref.xi[0](3);
            rec.ref_source = ref.source;
            rec.ref_stale = ref.stale;
            rec.agents = agents;
            rec.constraint_count = static_cast<int>(out.diag.constraints.size());
            for (int i : out.diag.active) {
                const auto& c = out.diag.constraints[static_cast<std::size_t>(i)];
                rec.active.push_back({c.agent_id, c.source, c.k, out.diag.slack[static_cast<std::size_t>(i)]});
            }
            rec.status = out.diag.status;
            rec.fallback = out.diag.fallback;
            rec.lane_softened = out.diag.lane_softened;
            rec.iterations = out.diag.iterations;
            rec.kkt_residual = out.diag.kkt_residual;
            rec.objective = out.diag.objective;
            if (out.diag.fallback) ++log.fallback_count;
            log.max_kkt_residual = std::max(log.max_kkt_residual, out.diag.kkt_residual);

            ego = plant_step(ego, out.u, path, low.T, params);
            for (std::size_t i = 0; i < agents.size(); ++i) {
                const Eigen::Vector2d w = scn.noise ? noise[i].gaussian(static_cast<std::uint64_t>(tau), noise_sqrt[i])
                                                    : Eigen::Vector2d::Zero();
                agents[i] = agent_sim_step(agents[i], scn.agents[i], w, agent_model);
            }
            if (!std::isfinite(ego.s) || !std::isfinite(ego.d) || !std::isfinite(ego.phi) || !std::isfinite(ego.v))
                throw std::runtime_error("non-finite ego state");

            const OrientedBox eb = ego_box(ego, path, params);
            for (std::size_t i = 0; i < agents.size(); ++i) {
                const OrientedBox ab = agent_box(agents[i], scn.agents[i]);
                const double gap = box_distance(eb, ab);
                rec.gaps.push_back(gap);
                log.min_gap[i] = std::min(log.min_gap[i], gap);
                if (!log.collision && boxes_overlap(eb, ab)) {
                    log.collision = true;
                    log.collision_step = tau;
                    log.collision_agent = scn.agents[i].id;
                }
            }
            log.max_abs_d = std::max(log.max_abs_d, std::abs(ego.d));
            log.min_speed = std::min(log.min_speed, ego.v);
            u_prev = out.u;
            log.steps.push_back(std::move(rec));
        }
    } catch (const std::exception& ex) {
        log.failed = true;
        log.failure = ex.what();
    }
    log.final_ego = ego;
    log.J_sim = score(log, low, scn.cruise_speed);
    return log;
}

Scenario SweepVariation::apply(Scenario scn) const {
    if (beta_tv) scn.low.beta_tv = *beta_tv;
    if (beta_ped) scn.low.beta_ped = *beta_ped;
    return scn;
}

SweepSummary sweep(const Scenario& base, std::uint64_t first_seed, int count, const SweepVariation& variation,
                   int threads, int containment_trials) {
    if (count < 1) throw std::invalid_argument("sweep needs at least one seed");
    const Scenario scn = variation.apply(base);
    scn.validate();
    std::vector<EpisodeLog> logs(static_cast<std::size_t>(count));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < count; i = next++) {
            Scenario s = scn;
            s.seed = first_seed + static_cast<std::uint64_t>(i);
            EpisodeLog log = run_episode(s);
            // Step records are not needed for the statistics.
            log.steps.clear();
            log.plans.clear();
            logs[static_cast<std::size_t>(i)] = std::move(log);
        }
    };
    const int n_threads = std::clamp(threads, 1, count);
    std::vector<std::thread> pool;
    for (int i = 1; i < n_threads; ++i) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();

    SweepSummary sum;
    sum.episodes = count;
    sum.J_min = std::numeric_limits<double>::infinity();
    sum.J_max = -sum.J_min;
    for (const auto& a : scn.agents) sum.gaps.push_back({a.id, 0.0, std::numeric_limits<double>::infinity(), 0.0});
    for (const auto& log : logs) {
        sum.collisions += log.collision ? 1 : 0;
        sum.failures += log.failed ? 1 : 0;
        sum.J_mean += log.J_sim / count;
        sum.J_min = std::min(sum.J_min, log.J_sim);
        sum.J_max = std::max(sum.J_max, log.J_sim);
        sum.min_speed_mean += log.min_speed / count;
        sum.fallbacks += log.fallback_count;
        sum.max_kkt_residual = std::max(sum.max_kkt_residual, log.max_kkt_residual);
        for (std::size_t i = 0; i < sum.gaps.size(); ++i) {
            sum.gaps[i].mean += log.min_gap[i] / count;
            sum.gaps[i].min = std::min(sum.gaps[i].min, log.min_gap[i]);
            sum.gaps[i].max = std::max(sum.gaps[i].max, log.min_gap[i]);
        }
    }
    double var = 0.0;
    for (const auto& log : logs) var += (log.J_sim - sum.J_mean) * (log.J_sim - sum.J_mean);
    sum.J_std = count > 1 ? std::sqrt(var / (count - 1)) : 0.0;

    const PointMassModel model = point_mass_matrices(scn.low.T);
    for (std::size_t i = 0; i < scn.agents.size(); ++i) {
        const Agent& a = scn.agents[i];
        const bool tv = a.kind == AgentKind::TargetVehicle;
        const Eigen::Vector2d dir = tv ? Eigen::Vector2d(std::cos(a.tv.lane_heading), std::sin(a.tv.lane_heading))
                                       : Eigen::Vector2d::UnitX();
        const auto freq = empirical_containment(error_model(a, model, false), tv ? scn.low.beta_tv : scn.low.beta_ped,
                                                scn.low.N, containment_trials, first_seed + 7919 * (i + 1), dir);
        double worst = 1.0;
        for (std::size_t k = 1; k < freq.size(); ++k) worst = std::min(worst, freq[k]);
        sum.containment.push_back(worst);
    }
    return sum;
}

}  // namespace smpc
