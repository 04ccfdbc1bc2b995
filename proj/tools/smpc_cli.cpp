// Command-line front end: run, sweep, validate.
#include "smpc/episode_log.hpp"
#include "smpc/scenario.hpp"
#include "smpc/simulation.hpp"
#include "smpc/uncertainty.hpp"

#include "CLI11.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

namespace {

enum Exit { kOk = 0, kConfig = 1, kRuntime = 2, kCollision = 3 };

bool on_off(const std::string& v) { return v == "on"; }

struct RunArgs {
    std::string scenario;
    std::string hl;
    std::string noise;
    std::optional<std::uint64_t> seed;
    std::optional<int> steps;
    std::string out = "-";
    std::string dump_qp;
};

struct SweepArgs {
    std::string scenario;
    std::string hl;
    int seeds = 50;
    std::uint64_t first_seed = 1;
    std::optional<double> beta_tv;
    std::optional<double> beta_ped;
    int threads = 0;
};

struct ValidateArgs {
    std::string scenario;
    int trials = 10000;
    std::uint64_t seed = 1;
};

smpc::Scenario load(const std::string& path, const std::string& hl) {
    smpc::Scenario scn = smpc::load_scenario(path);
    if (!hl.empty()) scn.maneuver_planner = on_off(hl);
    return scn;
}

int cmd_run(const RunArgs& a) {
    smpc::Scenario scn = load(a.scenario, a.hl);
    if (!a.noise.empty()) scn.noise = on_off(a.noise);
    if (a.seed) scn.seed = *a.seed;
    if (a.steps) scn.steps = *a.steps;
    scn.validate();

    std::ofstream qp_file;
    if (!a.dump_qp.empty()) {
        qp_file.open(a.dump_qp);
        if (!qp_file) throw smpc::ScenarioError("cannot open QP dump file '" + a.dump_qp + "'");
    }
    const smpc::EpisodeLog log = smpc::run_episode(scn, a.dump_qp.empty() ? nullptr : &qp_file);

    if (a.out == "-") {
        smpc::write_log(log, std::cout);
    } else {
        std::ofstream os(a.out, std::ios::binary);
        if (!os) throw smpc::ScenarioError("cannot open output file '" + a.out + "'");
        smpc::write_log(log, os);
    }
    std::fprintf(stderr, "%s: steps=%zu J_sim=%.1f min_speed=%.2f collision=%s%s\n", scn.name.c_str(),
                 log.steps.size(), log.J_sim, log.min_speed, log.collision ? "yes" : "no",
                 log.failed ? (" failure: " + log.failure).c_str() : "");
    if (log.failed) return kRuntime;
    return log.collision ? kCollision : kOk;
}

int cmd_sweep(const SweepArgs& a) {
    smpc::Scenario scn = load(a.scenario, a.hl);
    smpc::SweepVariation var;
    var.beta_tv = a.beta_tv;
    var.beta_ped = a.beta_ped;
    const int threads = a.threads > 0 ? a.threads : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
    const smpc::SweepSummary s = smpc::sweep(scn, a.first_seed, a.seeds, var, threads);
    std::printf("episodes %d  collisions %d  failures %d\n", s.episodes, s.collisions, s.failures);
    std::printf("J_sim mean %.1f  std %.1f  min %.1f  max %.1f\n", s.J_mean, s.J_std, s.J_min, s.J_max);
    std::printf("min speed mean %.2f  fallbacks %d  max KKT residual %.2e\n", s.min_speed_mean, s.fallbacks, s.max_kkt_residual);
    for (std::size_t i = 0; i < s.gaps.size(); ++i)
        std::printf("agent %-8s min gap mean %.3f  min %.3f  max %.3f  envelope containment %.4f\n",
                    s.gaps[i].agent_id.c_str(), s.gaps[i].mean, s.gaps[i].min, s.gaps[i].max, s.containment[i]);
    if (s.failures > 0) return kRuntime;
    return s.collisions > 0 ? kCollision : kOk;
}

int cmd_validate(const ValidateArgs& a) {
    const smpc::Scenario scn = smpc::load_scenario(a.scenario);
    const int k_bar = scn.high.averaging_factor(scn.low.T);
    bool all = true;
    for (std::size_t i = 0; i < scn.agents.size(); ++i) {
        const smpc::Agent& agent = scn.agents[i];
        const bool tv = agent.kind == smpc::AgentKind::TargetVehicle;
        const Eigen::Vector2d dir = tv ? Eigen::Vector2d(std::cos(agent.tv.lane_heading), std::sin(agent.tv.lane_heading))
                                       : Eigen::Vector2d::UnitX();
        for (const bool high : {false, true}) {
            const double T = high ? scn.high.T_H : scn.low.T;
            const int N = high ? scn.high.N_H : scn.low.N;
            const auto model = smpc::error_model(agent, smpc::point_mass_matrices(T), high, high ? k_bar : 1);
            for (const double beta : {0.5, 0.8, 0.9}) {
                const auto freq = smpc::empirical_containment(model, beta, N, a.trials, a.seed + i, dir);
                double worst = 1.0;
                for (std::size_t k = 1; k < freq.size(); ++k) worst = std::min(worst, freq[k]);
                const bool ok = worst >= beta - 0.03;
                all = all && ok;
                std::printf("%s %-8s %s beta=%.2f min containment %.4f\n", ok ? "PASS" : "FAIL", agent.id.c_str(),
                            high ? "high" : "low ", beta, worst);
            }
        }
    }
    return all ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-level stochastic MPC for urban automated driving"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run one closed-loop episode and write its JSON-lines log");
    run_cmd->add_option("--scenario", run.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--hl", run.hl, "Maneuver planner on|off (default: scenario file)")
        ->check(CLI::IsMember({"on", "off"}));
    run_cmd->add_option("--noise", run.noise, "Agent noise on|off (default: scenario file)")
        ->check(CLI::IsMember({"on", "off"}));
    run_cmd->add_option("--seed", run.seed, "Noise seed");
    run_cmd->add_option("--steps", run.steps, "Number of plant steps")->check(CLI::PositiveNumber);
    run_cmd->add_option("--out", run.out, "Log path, - for stdout");
    run_cmd->add_option("--dump-qp", run.dump_qp, "Write every low-level QP to this file");

    SweepArgs sw;
    auto* sweep_cmd = app.add_subcommand("sweep", "Monte Carlo batch over consecutive seeds");
    sweep_cmd->add_option("--scenario", sw.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    sweep_cmd->add_option("--hl", sw.hl, "Maneuver planner on|off")->check(CLI::IsMember({"on", "off"}));
    sweep_cmd->add_option("--seeds", sw.seeds, "Number of seeds")->check(CLI::PositiveNumber);
    sweep_cmd->add_option("--first-seed", sw.first_seed, "First seed");
    sweep_cmd->add_option("--beta-tv", sw.beta_tv, "Low-level TV risk level")->check(CLI::Range(0.0, 1.0));
    sweep_cmd->add_option("--beta-ped", sw.beta_ped, "Low-level pedestrian risk level")->check(CLI::Range(0.0, 1.0));
    sweep_cmd->add_option("--threads", sw.threads, "Worker threads, 0 = hardware concurrency");

    ValidateArgs va;
    auto* val_cmd = app.add_subcommand("validate", "Check envelope containment of every agent in a scenario");
    val_cmd->add_option("--scenario", va.scenario, "Scenario file")->required()->check(CLI::ExistingFile);
    val_cmd->add_option("--trials", va.trials, "Monte Carlo trials")->check(CLI::PositiveNumber);
    val_cmd->add_option("--seed", va.seed, "Sampling seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfig;
    }

    try {
        if (*run_cmd) return cmd_run(run);
        if (*sweep_cmd) return cmd_sweep(sw);
        return cmd_validate(va);
    } catch (const smpc::ScenarioError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return kConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "runtime failure: %s\n", e.what());
        return kRuntime;
    }
}
