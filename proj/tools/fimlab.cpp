// Command-line front end: train one run, sweep modes x seeds, profile
// dimension entropies, or re-export reports from a saved run record.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fimlab/report.hpp"

namespace fs = std::filesystem;
using namespace fimlab;

namespace {

struct FlagSet {
    std::string config_path;
    std::vector<std::pair<std::string, std::string>> overrides;
};

void add_common_flags(CLI::App* cmd, FlagSet& flags) {
    cmd->add_option("--config", flags.config_path, "Configuration file (key=value lines)");
    static const std::vector<std::pair<std::string, std::string>> kFlagKeys = {
        {"--mode", "mode"},
        {"--alpha", "alpha"},
        {"--phi", "phi"},
        {"--tau", "tau"},
        {"--steps", "steps"},
        {"--seed", "seed"},
        {"--out", "out"},
        {"--grid", "grid"},
        {"--episode-limit", "episode_limit"},
    };
    for (const auto& [flag, key] : kFlagKeys) {
        auto* opt = cmd->add_option(flag);
        opt->each([&flags, key = key](const std::string& value) {
            flags.overrides.push_back({key, value});
        });
    }
}

std::string run_dir(const ExperimentSpec& spec, Mode mode, std::uint64_t seed) {
    return (fs::path(spec.out_dir) / (to_string(mode) + "_seed" + std::to_string(seed))).string();
}

int do_run(const ExperimentSpec& spec, Mode mode, std::uint64_t seed) {
    RunConfig rc = spec.base;
    rc.mode = mode;
    rc.seed = seed;
    rc.validate();
    std::string dir = run_dir(spec, mode, seed);
    std::printf("run mode=%s seed=%llu steps=%lld -> %s\n", to_string(mode).c_str(),
                static_cast<unsigned long long>(seed), static_cast<long long>(rc.total_steps),
                dir.c_str());
    std::fflush(stdout);
    RunRecord rec = run_training(rc);
    save_run_record(rec, dir);
    std::printf("done mode=%s seed=%llu final_success=%s env_steps=%lld\n",
                to_string(mode).c_str(), static_cast<unsigned long long>(seed),
                fmt(rec.final_success_rate()).c_str(),
                static_cast<long long>(rec.train_steps + rec.estimation_steps));
    return 0;
}

int do_profile(const ExperimentSpec& spec) {
    const RunConfig& rc = spec.base;
    PushBoxEnv env(rc.grid);
    Rng rng(rc.seed, 1771);
    std::vector<Transition> transitions;
    transitions.reserve(rc.estimation_samples);
    std::uint64_t episode = 0;
    while (static_cast<std::int64_t>(transitions.size()) < rc.estimation_samples) {
        auto [state, obs] = env.reset(splitmix64(rc.seed) ^ episode++);
        bool done = false;
        while (!done && static_cast<std::int64_t>(transitions.size()) < rc.estimation_samples) {
            JointAction a;
            for (int i = 0; i < env.n_agents(); ++i) a.push_back(rng.below(env.n_actions()));
            auto res = env.step(state, a);
            Transition tr;
            tr.state = env.flatten_state(state);
            tr.action = a;
            tr.reward_ext = res.reward_ext;
            tr.reward = res.reward_ext;
            tr.next_state = env.flatten_state(res.next_state);
            tr.done = res.done;
            transitions.push_back(std::move(tr));
            state = res.next_state;
            done = res.done;
        }
    }
    auto profile = build_profile(transitions, rc.tau);
    fs::create_directories(spec.out_dir);
    auto path = fs::path(spec.out_dir) / "profile.tsv";
    write_profile(profile, rc.grid, path);
    std::printf("profiled %lld random-policy transitions -> %s\n",
                static_cast<long long>(transitions.size()), path.string().c_str());
    auto labels = dimension_labels(rc.grid);
    for (std::size_t d = 0; d < profile.weight.size(); ++d)
        std::printf("  %-10s H=%s w=%s\n", labels[d].c_str(), fmt(profile.raw_entropy[d]).c_str(),
                    fmt(profile.weight[d]).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Focusing-influence laboratory on the Push-2-Box gridworld"};
    app.require_subcommand(1);

    FlagSet train_flags, sweep_flags, profile_flags;
    std::string replay_in, replay_out;
    std::string sweep_modes, sweep_seeds;

    auto* train = app.add_subcommand("train", "Train a single run and export its reports");
    add_common_flags(train, train_flags);

    auto* sweep = app.add_subcommand("sweep", "Run a modes x seeds batch");
    add_common_flags(sweep, sweep_flags);
    sweep->add_option("--modes", sweep_modes, "Comma-separated mode list");
    sweep->add_option("--seeds", sweep_seeds, "Comma-separated seed list");

    auto* profile = app.add_subcommand("profile", "Estimate dimension entropies standalone");
    add_common_flags(profile, profile_flags);

    auto* replay = app.add_subcommand("replay", "Re-export reports from a saved run record");
    replay->add_option("record", replay_in, "Directory holding a saved run record")->required();
    replay->add_option("--out", replay_out, "Output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) {
            auto spec = load_config(train_flags.config_path, train_flags.overrides);
            return do_run(spec, spec.base.mode, spec.base.seed);
        }
        if (sweep->parsed()) {
            if (!sweep_modes.empty()) sweep_flags.overrides.push_back({"modes", sweep_modes});
            if (!sweep_seeds.empty()) sweep_flags.overrides.push_back({"seeds", sweep_seeds});
            auto spec = load_config(sweep_flags.config_path, sweep_flags.overrides);
            for (const auto& [mode, seed] : spec.runs()) {
                int rc = do_run(spec, mode, seed);
                if (rc != 0) return rc;
            }
            return 0;
        }
        if (profile->parsed()) {
            auto spec = load_config(profile_flags.config_path, profile_flags.overrides);
            return do_profile(spec);
        }
        if (replay->parsed()) {
            RunRecord rec = load_run_record(replay_in);
            std::string out = replay_out.empty()
                                  ? (fs::path(replay_in) / "replay").string()
                                  : replay_out;
            save_run_record(rec, out);
            std::printf("re-exported %s -> %s\n", replay_in.c_str(), out.c_str());
            return 0;
        }
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
