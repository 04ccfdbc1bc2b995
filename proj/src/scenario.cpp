#include "smpc/scenario.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <variant>

namespace smpc {

namespace {

using nlohmann::json;

constexpr double kDegToRad = 3.14159265358979323846 / 180.0;

const json& require(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw ScenarioError(where + ": missing key '" + key + "'");
    return j.at(key);
}

double number(const json& j, const char* key, const std::string& where, double fallback) {
    if (!j.contains(key)) return fallback;
    const json& v = j.at(key);
    if (!v.is_number()) throw ScenarioError(where + "." + key + ": expected a number");
    return v.get<double>();
}

std::vector<double> numbers(const json& v, const std::string& where, std::size_t n) {
    if (!v.is_array() || v.size() != n) throw ScenarioError(where + ": expected an array of " + std::to_string(n));
    std::vector<double> out;
    for (const auto& x : v) {
        if (!x.is_number()) throw ScenarioError(where + ": expected numbers");
        out.push_back(x.get<double>());
    }
    return out;
}

Eigen::Vector2d vec2(const json& v, const std::string& where) {
    const auto a = numbers(v, where, 2);
    return {a[0], a[1]};
}

// Square matrix given either as its diagonal or as nested rows.
template <int n>
Eigen::Matrix<double, n, n> square(const json& v, const std::string& where) {
    Eigen::Matrix<double, n, n> M = Eigen::Matrix<double, n, n>::Zero();
    if (v.is_array() && v.size() == static_cast<std::size_t>(n) && v[0].is_number()) {
        const auto d = numbers(v, where, n);
        for (int i = 0; i < n; ++i) M(i, i) = d[static_cast<std::size_t>(i)];
        return M;
    }
    if (!v.is_array() || v.size() != static_cast<std::size_t>(n))
        throw ScenarioError(where + ": expected a diagonal or a " + std::to_string(n) + "x" + std::to_string(n) +
                            " matrix");
    for (int i = 0; i < n; ++i) {
        const auto row = numbers(v[static_cast<std::size_t>(i)], where, n);
        for (int j = 0; j < n; ++j) M(i, j) = row[static_cast<std::size_t>(j)];
    }
    return M;
}

Matrix24 gain(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 2) throw ScenarioError(where + ": expected a 2x4 matrix");
    Matrix24 K;
    for (int i = 0; i < 2; ++i) {
        const auto row = numbers(v[static_cast<std::size_t>(i)], where, 4);
        for (int j = 0; j < 4; ++j) K(i, j) = row[static_cast<std::size_t>(j)];
    }
    return K;
}

Agent parse_agent(const json& j, AgentState* initial, std::size_t index) {
    const std::string where = "agents[" + std::to_string(index) + "]";
    Agent a;
    a.id = require(j, "id", where).get<std::string>();
    const std::string kind = require(j, "kind", where).get<std::string>();
    const auto x0 = numbers(require(j, "initial", where), where + ".initial", 4);
    *initial = {x0[0], x0[1], x0[2], x0[3]};
    const Eigen::Matrix2d noise = square<2>(require(j, "noise_cov", where), where + ".noise_cov");
    if (kind == "vehicle") {
        a.kind = AgentKind::TargetVehicle;
        TVConfig& tv = a.tv;
        const json& lane = require(j, "lane", where);
        tv.lane_heading = number(lane, "heading_deg", where + ".lane", 0.0) * kDegToRad;
        const Eigen::Vector2d through = vec2(require(lane, "through", where + ".lane"), where + ".lane.through");
        const Eigen::Vector2d left(-std::sin(tv.lane_heading), std::cos(tv.lane_heading));
        tv.lateral_ref = left.dot(through);
        tv.speed_ref = number(lane, "speed", where + ".lane", 0.0);
        tv.K = gain(require(j, "K", where), where + ".K");
        tv.K_H = gain(require(j, "K_H", where), where + ".K_H");
        tv.noise_cov = noise;
        if (j.contains("u_min")) tv.u_min = vec2(j["u_min"], where + ".u_min");
        if (j.contains("u_max")) tv.u_max = vec2(j["u_max"], where + ".u_max");
        tv.footprint = {number(j, "length", where, 5.0), number(j, "width", where, 2.0)};
    } else if (kind == "pedestrian") {
        a.kind = AgentKind::Pedestrian;
        a.ped.noise_cov = noise;
        a.ped.footprint = {number(j, "length", where, 1.0), number(j, "width", where, 1.0)};
    } else {
        throw ScenarioError(where + ".kind: expected 'vehicle' or 'pedestrian'");
    }
    return a;
}

Scenario parse(const json& root) {
    Scenario sc;
    sc.name = root.value("name", std::string("scenario"));
    if (root.contains("seed")) sc.seed = root.at("seed").get<std::uint64_t>();
    if (root.contains("steps")) sc.steps = root.at("steps").get<int>();
    sc.noise = root.value("noise", true);
    sc.maneuver_planner = root.value("maneuver_planner", true);
    sc.cruise_speed = number(root, "cruise_speed", "root", 10.0);

    const json& p = require(root, "path", "root");
    sc.path.start = vec2(require(p, "start", "path"), "path.start");
    sc.path.start_heading = number(p, "start_heading_deg", "path", 0.0) * kDegToRad;
    sc.path.approach_length = number(p, "approach_length", "path", sc.path.approach_length);
    sc.path.turn_radius = number(p, "turn_radius", "path", sc.path.turn_radius);
    sc.path.turn_angle = number(p, "turn_angle_deg", "path", 90.0) * kDegToRad;
    sc.path.exit_length = number(p, "exit_length", "path", sc.path.exit_length);
    sc.projection_corridor = number(p, "projection_corridor", "path", 20.0);
    if (p.contains("conflict_zone")) {
        const json& z = p.at("conflict_zone");
        sc.path.zone.min_corner = vec2(require(z, "min", "path.conflict_zone"), "path.conflict_zone.min");
        sc.path.zone.max_corner = vec2(require(z, "max", "path.conflict_zone"), "path.conflict_zone.max");
    }

    const json& e = require(root, "ego", "root");
    EgoParams& ep = sc.ego_params;
    ep.l_f = number(e, "l_f", "ego", ep.l_f);
    ep.l_r = number(e, "l_r", "ego", ep.l_r);
    ep.l_veh = number(e, "length", "ego", ep.l_veh);
    ep.w_veh = number(e, "width", "ego", ep.w_veh);
    ep.w_lane = number(e, "lane_width", "ego", ep.w_lane);
    ep.v_max = number(e, "v_max", "ego", ep.v_max);
    if (e.contains("u_min")) ep.u_min = vec2(e["u_min"], "ego.u_min");
    if (e.contains("u_max")) ep.u_max = vec2(e["u_max"], "ego.u_max");
    if (e.contains("du_max")) ep.du_max = vec2(e["du_max"], "ego.du_max");
    ep.du_min = e.contains("du_min") ? vec2(e["du_min"], "ego.du_min") : Eigen::Vector2d(-ep.du_max);

    const json& init = require(e, "initial", "ego");
    sc.path.exit_length = std::max(sc.path.exit_length, 0.0);
    {
        const ReferencePath path = sc.build_path();
        const Eigen::Vector2d pos = vec2(require(init, "position", "ego.initial"), "ego.initial.position");
        const auto pose = path.try_project(pos);
        if (!pose) throw ScenarioError("ego.initial.position is not within the path corridor");
        sc.ego_initial = {pose->s, pose->d, number(init, "phi", "ego.initial", 0.0),
                          number(init, "v", "ego.initial", 0.0)};
    }

    if (root.contains("low_level")) {
        const json& l = root.at("low_level");
        LowLevelConfig& c = sc.low;
        if (l.contains("N")) c.N = l.at("N").get<int>();
        c.T = number(l, "T", "low_level", c.T);
        if (l.contains("Q")) c.Q = square<4>(l["Q"], "low_level.Q");
        if (l.contains("P")) c.P = square<4>(l["P"], "low_level.P");
        if (l.contains("R")) c.R = square<2>(l["R"], "low_level.R");
        if (l.contains("S")) c.S = square<2>(l["S"], "low_level.S");
        c.beta_tv = number(l, "beta_tv", "low_level", c.beta_tv);
        c.beta_ped = number(l, "beta_ped", "low_level", c.beta_ped);
        c.eps_tv = number(l, "eps_tv", "low_level", c.eps_tv);
        c.eps_ped = number(l, "eps_ped", "low_level", c.eps_ped);
        c.sensing_radius = number(l, "sensing_radius", "low_level", c.sensing_radius);
        c.rho_slack = number(l, "slack_quadratic", "low_level", c.rho_slack);
        c.linear_slack = number(l, "slack_linear", "low_level", c.linear_slack);
        c.linearization_min_speed =
            number(l, "linearization_min_speed", "low_level", c.linearization_min_speed);
        c.curvature_preview = l.value("curvature_preview", c.curvature_preview);
        c.lane_margin = number(l, "lane_margin", "low_level", c.lane_margin);
    }
    sc.low.zone = sc.path.zone;

    if (root.contains("high_level")) {
        const json& h = root.at("high_level");
        HighLevelConfig& c = sc.high;
        if (h.contains("N_H")) c.N_H = h.at("N_H").get<int>();
        c.T_H = number(h, "T_H", "high_level", c.T_H);
        c.r_H = number(h, "r_H", "high_level", c.r_H);
        c.v_ref = number(h, "v_ref", "high_level", c.v_ref);
        c.beta_tv = number(h, "beta_tv", "high_level", c.beta_tv);
        c.beta_ped = number(h, "beta_ped", "high_level", c.beta_ped);
        c.eps_tv = number(h, "eps_tv", "high_level", c.eps_tv);
        c.eps_ped = number(h, "eps_ped", "high_level", c.eps_ped);
        c.extra_safety = number(h, "extra_safety", "high_level", c.extra_safety);
        c.sensing_radius = number(h, "sensing_radius", "high_level", c.sensing_radius);
        sc.turn_speed_limit = number(h, "turn_speed_limit", "high_level", sc.turn_speed_limit);
        if (h.contains("speed_limits")) {
            for (const auto& z : h.at("speed_limits"))
                c.limits.push_back({number(z, "s_begin", "high_level.speed_limits", 0.0),
                                    number(z, "s_end", "high_level.speed_limits", 0.0),
                                    number(z, "limit", "high_level.speed_limits", 0.0)});
        }
    }
    sc.high.v_max = sc.ego_params.v_max;
    sc.high.rho_slack = sc.low.rho_slack;
    sc.high.linear_slack = sc.low.linear_slack;

    if (root.contains("agents")) {
        const json& agents = root.at("agents");
        if (!agents.is_array()) throw ScenarioError("agents: expected an array");
        for (std::size_t i = 0; i < agents.size(); ++i) {
            AgentState x0;
            sc.agents.push_back(parse_agent(agents[i], &x0, i));
            sc.agent_initial.push_back(x0);
        }
    }
    return sc;
}

}  // namespace

ReferencePath Scenario::build_path() const {
    const ReferencePath base = make_turn_path(path);
    std::vector<PathSegment> segs;
    for (std::size_t i = 0; i < base.segment_count(); ++i) segs.push_back(base.segment(i));
    return ReferencePath(std::move(segs), base.intersection_entry_s(), base.intersection_exit_s(),
                         projection_corridor);
}

HighLevelConfig Scenario::high_level_for(const ReferencePath& p) const {
    HighLevelConfig c = high;
    for (std::size_t i = 0; i < p.segment_count(); ++i)
        if (std::holds_alternative<BezierSegment>(p.segment(i)))
            c.limits.push_back({p.segment_start_s(i), p.segment_end_s(i), turn_speed_limit});
    return c;
}

void Scenario::validate() const {
    try {
        ego_params.validate();
        low.validate();
        high.validate(low.T, low.N);
        if (steps < 1) throw ScenarioError("steps must be >= 1");
        if (!(cruise_speed >= 0.0 && cruise_speed <= ego_params.v_max))
            throw ScenarioError("cruise_speed outside [0, v_max]");
        if (!(ego_initial.v >= 0.0 && ego_initial.v <= ego_params.v_max))
            throw ScenarioError("ego initial speed outside [0, v_max]");
        if (!(turn_speed_limit > 0.0)) throw ScenarioError("turn_speed_limit must be positive");
        if (agents.size() != agent_initial.size()) throw ScenarioError("agent list and initial states differ");
        std::set<std::string> ids;
        for (const auto& a : agents) {
            if (!ids.insert(a.id).second) throw ScenarioError("duplicate agent id '" + a.id + "'");
            if (a.kind == AgentKind::TargetVehicle) validate_tv_config(a.tv, low.T, high.T_H);
            else validate_ped_config(a.ped);
        }
        build_path();
    } catch (const ScenarioError&) {
        throw;
    } catch (const std::exception& ex) {
        throw ScenarioError(ex.what());
    }
}

Scenario parse_scenario(const std::string& json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::exception& ex) {
        throw ScenarioError(std::string("scenario is not valid JSON: ") + ex.what());
    }
    Scenario sc;
    try {
        sc = parse(root);
    } catch (const ScenarioError&) {
        throw;
    } catch (const std::exception& ex) {
        throw ScenarioError(ex.what());
    }
    sc.validate();
    return sc;
}

Scenario load_scenario(const std::string& file_path) {
    std::ifstream in(file_path);
    if (!in) throw ScenarioError("cannot open scenario file '" + file_path + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_scenario(buf.str());
}

}  // namespace smpc
