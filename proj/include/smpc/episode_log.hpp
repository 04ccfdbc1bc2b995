/**
 * @file episode_log.hpp
 * @brief JSON-lines episode log.
 *
 * One object per line, discriminated by "type":
 *   header   scenario, seed, flags, T, agent ids
 *   plan     high-level snapshot (written before the step it applies to)
 *   step     one per plant step
 *   failure  present only when the episode ended early
 *   summary  J_sim, collision flag, minimum gaps
 */
#pragma once

#include "smpc/simulation.hpp"

#include <iosfwd>
#include <string>

namespace smpc {

void write_log(const EpisodeLog& log, std::ostream& os);
std::string log_to_string(const EpisodeLog& log);

}  // namespace smpc
