#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "singulation/agent.hpp"
#include "singulation/env.hpp"

namespace singulation {

struct TrainConfig {
    int episodes = 3000;
    int epoch_train_episodes = 20;
    int epoch_test_episodes = 10;
    int preload = 1000;
    std::uint64_t seed = 0;
    AgentConfig agent;

    void validate() const;
};

struct EpisodeRecord {
    std::uint64_t scene_seed = 0;
    bool success = false;
    int actions = 0;
    double total_reward = 0.0;
    TerminalKind terminal = TerminalKind::None;
};

struct EvalReport {
    int n_episodes = 0;
    int successes = 0;
    double success_rate = 0.0;
    double mean_actions = 0.0;  // successful episodes only
    double std_actions = 0.0;
    double mean_reward = 0.0;  // all episodes
    double std_reward = 0.0;
};

struct CurvePoint {
    int epoch = 0;
    double success_rate = 0.0;
    double mean_reward = 0.0;
};

using TrainingCurve = std::vector<CurvePoint>;

/// Maps the current episode state to an action index.
using Policy = std::function<int(const EpisodeState&, Rng&)>;

Policy greedy_policy(const QAgent& agent);
Policy random_policy(int n_actions);

/// Receives one trace record per executed step.
using TraceSink = std::function<void(const nlohmann::json&)>;

/// Runs a prepared episode to its terminal step.
EpisodeRecord play_episode(const Policy& policy, const EnvConfig& env_cfg, EpisodeState ep, Rng& policy_rng,
                           const TraceSink& sink = {}, int episode_index = 0);

EpisodeRecord run_episode(const Policy& policy, const EnvConfig& env_cfg, std::uint64_t scene_seed, Rng& policy_rng,
                          const TraceSink& sink = {}, int episode_index = 0);

/// Scene seed of evaluation episode i.
std::uint64_t eval_scene_seed(std::uint64_t seed, int i);

std::vector<EpisodeRecord> evaluate_episodes(const Policy& policy, const EnvConfig& env_cfg, int n_episodes,
                                             std::uint64_t seed, const TraceSink& sink = {});

EvalReport aggregate(std::span<const EpisodeRecord> records);

EvalReport evaluate(const Policy& policy, const EnvConfig& env_cfg, int n_episodes, std::uint64_t seed,
                    const TraceSink& sink = {});

/// Rebuilds episode records from trace lines (as written by a TraceSink).
std::vector<EpisodeRecord> records_from_trace(std::istream& is);

struct TrainHooks {
    std::function<void(const CurvePoint&)> on_epoch;
    TraceSink trace;
};

/// Scene seeds used for the test episodes of `epoch` (0-based).
std::vector<std::uint64_t> epoch_test_seeds(const TrainConfig& cfg, int epoch);

TrainingCurve train(QAgent& agent, const EnvConfig& env_cfg, const TrainConfig& cfg, const TrainHooks& hooks = {});

// CSV outputs.
void write_metrics_csv(std::ostream& os, const std::vector<std::pair<std::string, EvalReport>>& rows,
                       bool header = true);
void write_curves_csv(std::ostream& os, const std::vector<std::pair<std::string, TrainingCurve>>& curves);

/// Reference values reported for the full-scale experiment; metadata only.
struct ReferencePoint {
    const char* policy;
    double success_rate;
};
std::span<const ReferencePoint> reference_table1();
std::span<const ReferencePoint> reference_table2();

struct ModularityReport {
    TrainingCurve warm_curve;
    TrainingCurve scratch_curve;
    EvalReport warm_eval;
    EvalReport scratch_eval;
    bool warm_start_exact = false;
    double level = 0.0;
    std::optional<int> warm_epochs_to_level;
    std::optional<int> scratch_epochs_to_level;
};

/// Mean success over the last `n` points of a curve.
double final_success(const TrainingCurve& curve, int n = 5);

/// First epoch whose success reaches `level`.
std::optional<int> epochs_to_level(const TrainingCurve& curve, double level);

/// Trains SplitDQN-3 warm-started from the SplitDQN-2 checkpoint in
/// `split2_dir` and SplitDQN-3 from scratch on `env_cfg` with the extra
/// primitive enabled. Throws CheckpointError when the checkpoint is missing.
ModularityReport run_modularity_experiment(const EnvConfig& env_cfg, const TrainConfig& cfg,
                                           const std::string& split2_dir, int eval_episodes,
                                           const std::function<void(const std::string&, const CurvePoint&)>& on_epoch = {});

/// Probe-state regression: first n_actions Q-values of `b` equal those of `a`.
bool q_prefix_identical(const QAgent& a, const QAgent& b, std::span<const StatePtr> probes);

std::vector<StatePtr> probe_states(const EnvConfig& env_cfg, int n, std::uint64_t seed);

}  // namespace singulation
