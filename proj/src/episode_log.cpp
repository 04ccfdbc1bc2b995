#include "smpc/episode_log.hpp"

#include "json.hpp"

#include <cmath>
#include <ostream>
#include <sstream>

namespace smpc {

namespace {

using Json = nlohmann::ordered_json;

// Infinite gaps (agents never observed) are written as null.
Json finite_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

Json step_json(const StepRecord& r, const EpisodeLog& log) {
    Json j;
    j["type"] = "step";
    j["step"] = r.step;
    j["t"] = r.time;
    j["ego"] = {{"s", r.ego.s}, {"d", r.ego.d}, {"phi", r.ego.phi}, {"v", r.ego.v},
                {"x", r.ego_xy.x()}, {"y", r.ego_xy.y()}, {"heading", r.ego_heading}};
    j["u"] = {{"a", r.u.a}, {"delta", r.u.delta}};
    j["v_ref"] = r.v_ref;
    j["ref_source"] = r.ref_source == ReferenceSource::ManeuverPlanner ? "maneuver_planner" : "static_cruise";
    j["ref_stale"] = r.ref_stale;
    Json agents = Json::array();
    for (std::size_t i = 0; i < r.agents.size(); ++i) {
        const AgentState& a = r.agents[i];
        agents.push_back({{"id", log.agent_ids[i]}, {"x", a.x}, {"vx", a.vx}, {"y", a.y}, {"vy", a.vy},
                          {"gap", i < r.gaps.size() ? finite_or_null(r.gaps[i]) : Json(nullptr)}});
    }
    j["agents"] = std::move(agents);
    Json active = Json::array();
    for (const auto& c : r.active)
        active.push_back({{"agent", c.agent_id}, {"source", to_string(c.source)}, {"k", c.k}, {"slack", c.slack}});
    j["constraints"] = r.constraint_count;
    j["active"] = std::move(active);
    j["solver"] = {{"status", to_string(r.status)}, {"iterations", r.iterations}, {"kkt", r.kkt_residual},
                   {"objective", r.objective}, {"fallback", r.fallback}, {"lane_softened", r.lane_softened}};
    return j;
}

Json plan_json(const PlanRecord& p) {
    Json j;
    j["type"] = "plan";
    j["step"] = p.step;
    j["t"] = p.plan.plan_time;
    j["s0"] = p.plan.s0;
    j["v0"] = p.plan.v0;
    j["nu"] = p.plan.nu;
    j["s"] = p.plan.s;
    Json crossing = Json::array();
    Json in_front = Json::array();
    std::size_t ci = 0;
    for (const auto& spec : p.specs) {
        if (spec.type == SpecType::InFront) {
            in_front.push_back({{"agent", spec.agent_id}, {"s_agent", spec.s_agent}, {"delta", spec.delta1}});
            continue;
        }
        Json c = {{"agent", spec.agent_id},
                  {"s_cross", spec.s_agent.front()},
                  {"window", {spec.window_begin, spec.window_end}},
                  {"delta_behind", spec.delta1_at_end},
                  {"delta_ahead", spec.delta2_at_begin}};
        if (ci < p.plan.branch.size()) {
            c["branch"] = p.plan.branch[ci] == Branch::Ahead ? "ahead" : "behind";
            c["switching"] = p.plan.switching[ci];
        }
        ++ci;
        crossing.push_back(std::move(c));
    }
    j["crossing"] = std::move(crossing);
    j["in_front"] = std::move(in_front);
    j["objective"] = p.plan.objective;
    j["degraded"] = p.plan.degraded;
    j["branches_tried"] = p.plan.branches_tried;
    j["branches_feasible"] = p.plan.branches_feasible;
    return j;
}

}  // namespace

void write_log(const EpisodeLog& log, std::ostream& os) {
    Json h;
    h["type"] = "header";
    h["scenario"] = log.scenario;
    h["seed"] = log.seed;
    h["maneuver_planner"] = log.maneuver_planner;
    h["noise"] = log.noise;
    h["steps"] = log.steps_planned;
    h["T"] = log.T;
    h["agents"] = log.agent_ids;
    os << h.dump() << '\n';

    std::size_t next_plan = 0;
    for (const auto& r : log.steps) {
        while (next_plan < log.plans.size() && log.plans[next_plan].step <= r.step)
            os << plan_json(log.plans[next_plan++]).dump() << '\n';
        os << step_json(r, log).dump() << '\n';
    }
    for (; next_plan < log.plans.size(); ++next_plan) os << plan_json(log.plans[next_plan]).dump() << '\n';

    if (log.failed) {
        Json f;
        f["type"] = "failure";
        f["step"] = static_cast<int>(log.steps.size()) + 1;
        f["message"] = log.failure;
        os << f.dump() << '\n';
    }

    Json s;
    s["type"] = "summary";
    s["steps_completed"] = log.steps.size();
    s["J_sim"] = log.J_sim;
    s["collision"] = log.collision;
    s["collision_step"] = log.collision_step;
    s["collision_agent"] = log.collision_agent;
    Json gaps = Json::object();
    for (std::size_t i = 0; i < log.agent_ids.size(); ++i) gaps[log.agent_ids[i]] = finite_or_null(log.min_gap[i]);
    s["min_gaps"] = std::move(gaps);
    s["min_speed"] = log.min_speed;
    s["max_abs_d"] = log.max_abs_d;
    s["fallbacks"] = log.fallback_count;
    s["max_kkt"] = log.max_kkt_residual;
    s["failed"] = log.failed;
    os << s.dump() << '\n';
}

std::string log_to_string(const EpisodeLog& log) {
    std::ostringstream os;
    write_log(log, os);
    return os.str();
}

}  // namespace smpc
