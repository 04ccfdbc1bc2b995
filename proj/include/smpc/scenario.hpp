#pragma once

#include "smpc/agent_models.hpp"
#include "smpc/ego_dynamics.hpp"
#include "smpc/maneuver_planner.hpp"
#include "smpc/path_geometry.hpp"
#include "smpc/trajectory_planner.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace smpc {

/// Malformed or inconsistent scenario configuration.
class ScenarioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct Scenario {
    std::string name;
    TurnPathSpec path;
    double projection_corridor = 20.0;
    double turn_speed_limit = 7.0;  ///< applied to every curved segment in the high-level speed map
    EgoParams ego_params;
    EgoState ego_initial;
    std::vector<Agent> agents;
    std::vector<AgentState> agent_initial;
    LowLevelConfig low;
    HighLevelConfig high;
    bool maneuver_planner = true;
    bool noise = true;
    double cruise_speed = 10.0;
    int steps = 180;
    std::uint64_t seed = 1;

    /// Path with the conflict zone span as its intersection entry and exit.
    ReferencePath build_path() const;
    /// High-level config with the curved segments of `path` added to the speed-limit map.
    HighLevelConfig high_level_for(const ReferencePath& path) const;
    /// Throws ScenarioError naming the first invalid item.
    void validate() const;
};

/// Parses a JSON scenario document; `ego.initial.position` is projected onto the path.
Scenario parse_scenario(const std::string& json_text);
Scenario load_scenario(const std::string& file_path);

}  // namespace smpc
