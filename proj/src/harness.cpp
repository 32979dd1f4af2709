#include "singulation/harness.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace singulation {

void TrainConfig::validate() const {
    if (episodes < 0 || epoch_train_episodes < 1 || epoch_test_episodes < 0 || preload < 0)
        throw ConfigError("train: counts must be non-negative (epoch length positive)");
    if (agent.batch_size < 1) throw ConfigError("train: batch_size must be positive");
    if (!(agent.gamma >= 0.0 && agent.gamma <= 1.0)) throw ConfigError("train: gamma outside [0, 1]");
    if (!(agent.lr > 0.0)) throw ConfigError("train: lr must be positive");
}

Policy greedy_policy(const QAgent& agent) {
    return [&agent](const EpisodeState& ep, Rng&) { return agent.greedy_action(*ep.state); };
}

Policy random_policy(int n_actions) {
    return [n_actions](const EpisodeState&, Rng& rng) {
        return static_cast<int>(rng.below(static_cast<std::uint64_t>(n_actions)));
    };
}

EpisodeRecord play_episode(const Policy& policy, const EnvConfig& env_cfg, EpisodeState ep, Rng& policy_rng,
                           const TraceSink& sink, int episode_index) {
    EpisodeRecord rec;
    while (!ep.done) {
        const int t = ep.t;
        const int u = policy(ep, policy_rng);
        const StepResult r = step(ep, u, env_cfg);
        rec.total_reward += r.reward;
        rec.actions += 1;
        rec.terminal = r.terminal;
        if (sink) {
            auto line = step_record(t, u, r);
            line["episode"] = episode_index;
            sink(line);
        }
    }
    rec.success = rec.terminal == TerminalKind::Singulated;
    return rec;
}

EpisodeRecord run_episode(const Policy& policy, const EnvConfig& env_cfg, std::uint64_t scene_seed, Rng& policy_rng,
                          const TraceSink& sink, int episode_index) {
    Rng scene_rng(scene_seed);
    EpisodeRecord rec = play_episode(policy, env_cfg, reset(env_cfg, scene_rng), policy_rng, sink, episode_index);
    rec.scene_seed = scene_seed;
    return rec;
}

std::uint64_t eval_scene_seed(std::uint64_t seed, int i) { return mix_seed(seed ^ 0xE7A1ULL, static_cast<std::uint64_t>(i)); }

std::vector<EpisodeRecord> evaluate_episodes(const Policy& policy, const EnvConfig& env_cfg, int n_episodes,
                                             std::uint64_t seed, const TraceSink& sink) {
    std::vector<EpisodeRecord> out;
    out.reserve(static_cast<std::size_t>(std::max(n_episodes, 0)));
    for (int i = 0; i < n_episodes; ++i) {
        // Each episode owns its policy stream so episodes stay independent.
        Rng policy_rng(mix_seed(seed ^ 0x90C1ULL, static_cast<std::uint64_t>(i)));
        out.push_back(run_episode(policy, env_cfg, eval_scene_seed(seed, i), policy_rng, sink, i));
    }
    return out;
}

EvalReport aggregate(std::span<const EpisodeRecord> records) {
    EvalReport r;
    r.n_episodes = static_cast<int>(records.size());
    if (records.empty()) return r;
    // Sums run over sorted values so the report is independent of episode order.
    std::vector<double> rewards, actions;
    for (const auto& e : records) {
        rewards.push_back(e.total_reward);
        if (e.success) actions.push_back(e.actions);
    }
    std::sort(rewards.begin(), rewards.end());
    std::sort(actions.begin(), actions.end());
    auto mean_std = [](const std::vector<double>& v) {
        double sum = 0.0, var = 0.0;
        for (double x : v) sum += x;
        const double mean = sum / static_cast<double>(v.size());
        for (double x : v) var += (x - mean) * (x - mean);
        return std::pair{mean, std::sqrt(var / static_cast<double>(v.size()))};
    };
    r.successes = static_cast<int>(actions.size());
    r.success_rate = static_cast<double>(r.successes) / r.n_episodes;
    std::tie(r.mean_reward, r.std_reward) = mean_std(rewards);
    if (r.successes > 0) std::tie(r.mean_actions, r.std_actions) = mean_std(actions);
    return r;
}

EvalReport evaluate(const Policy& policy, const EnvConfig& env_cfg, int n_episodes, std::uint64_t seed,
                    const TraceSink& sink) {
    const auto records = evaluate_episodes(policy, env_cfg, n_episodes, seed, sink);
    return aggregate(records);
}

std::vector<EpisodeRecord> records_from_trace(std::istream& is) {
    std::map<int, EpisodeRecord> by_episode;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        EpisodeRecord& rec = by_episode[j.at("episode").get<int>()];
        rec.total_reward += j.at("reward").get<double>();
        rec.actions += 1;
        const auto term = j.at("terminal").get<std::string>();
        rec.success = term == "Singulated";
        for (auto k : {TerminalKind::None, TerminalKind::Singulated, TerminalKind::TargetOff, TerminalKind::Collision,
                       TerminalKind::Timeout, TerminalKind::SimFault})
            if (term == terminal_name(k)) rec.terminal = k;
    }
    std::vector<EpisodeRecord> out;
    for (auto& [idx, rec] : by_episode) out.push_back(rec);
    return out;
}

std::vector<std::uint64_t> epoch_test_seeds(const TrainConfig& cfg, int epoch) {
    std::vector<std::uint64_t> seeds;
    for (int i = 0; i < cfg.epoch_test_episodes; ++i)
        seeds.push_back(mix_seed(cfg.seed ^ 0x7E57ULL, static_cast<std::uint64_t>(epoch * cfg.epoch_test_episodes + i)));
    return seeds;
}

namespace {

// Random-action episodes until every buffer holds `preload` transitions.
void preload_buffers(QAgent& agent, const EnvConfig& env_cfg, const TrainConfig& cfg, Rng& rng) {
    const auto target = static_cast<std::size_t>(cfg.preload);
    const std::size_t max_steps = 100 * target + 1000;
    std::size_t steps = 0;
    const Policy random = random_policy(agent.n_actions());
    while (agent.min_buffer_size() < target && steps < max_steps) {
        EpisodeState ep = reset(env_cfg, rng);
        while (!ep.done && steps < max_steps) {
            const StatePtr before = ep.state;
            const int u = random(ep, rng);
            const StepResult r = step(ep, u, env_cfg);
            agent.store({before, u, r.reward, r.next_state, r.terminal != TerminalKind::None});
            ++steps;
        }
    }
}

}  // namespace

TrainingCurve train(QAgent& agent, const EnvConfig& env_cfg, const TrainConfig& cfg, const TrainHooks& hooks) {
    cfg.validate();
    env_cfg.validate();
    if (agent.n_actions() != env_cfg.n_actions() || agent.w() != env_cfg.w)
        throw ConfigError("train: agent action space does not match the environment");
    TrainingCurve curve;
    if (cfg.episodes == 0) return curve;

    Rng rng(mix_seed(cfg.seed, 1));
    Rng scene_rng(mix_seed(cfg.seed, 2));
    preload_buffers(agent, env_cfg, cfg, scene_rng);

    std::uint64_t global_step = 0;
    const Policy greedy = greedy_policy(agent);
    for (int episode = 0; episode < cfg.episodes; ++episode) {
        EpisodeState ep = reset(env_cfg, scene_rng);
        while (!ep.done) {
            const StatePtr before = ep.state;
            const int t = ep.t;
            const int u = agent.select_action(*before, global_step, rng);
            const StepResult r = step(ep, u, env_cfg);
            agent.store({before, u, r.reward, r.next_state, r.terminal != TerminalKind::None});
            agent.train_step(u, rng);
            ++global_step;
            if (hooks.trace) {
                auto line = step_record(t, u, r);
                line["episode"] = episode;
                hooks.trace(line);
            }
        }

        if ((episode + 1) % cfg.epoch_train_episodes != 0) continue;
        const int epoch = static_cast<int>(curve.size());
        std::vector<EpisodeRecord> records;
        for (std::uint64_t s : epoch_test_seeds(cfg, epoch)) {
            Rng unused(s);
            records.push_back(run_episode(greedy, env_cfg, s, unused));
        }
        const EvalReport rep = aggregate(records);
        curve.push_back({epoch, rep.success_rate, rep.mean_reward});
        if (hooks.on_epoch) hooks.on_epoch(curve.back());
    }
    return curve;
}

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << std::fixed << v;
    return os.str();
}

}  // namespace

void write_metrics_csv(std::ostream& os, const std::vector<std::pair<std::string, EvalReport>>& rows, bool header) {
    if (header) os << "policy,n,success_rate,mean_actions,std_actions,mean_reward,std_reward\n";
    for (const auto& [name, r] : rows) {
        os << name << ',' << r.n_episodes << ',' << fmt(r.success_rate) << ',' << fmt(r.mean_actions) << ','
           << fmt(r.std_actions) << ',' << fmt(r.mean_reward) << ',' << fmt(r.std_reward) << '\n';
    }
}

void write_curves_csv(std::ostream& os, const std::vector<std::pair<std::string, TrainingCurve>>& curves) {
    os << "policy,epoch,success_rate,mean_reward\n";
    for (const auto& [name, curve] : curves)
        for (const auto& p : curve)
            os << name << ',' << p.epoch << ',' << fmt(p.success_rate) << ',' << fmt(p.mean_reward) << '\n';
}

std::span<const ReferencePoint> reference_table1() {
    static constexpr std::array<ReferencePoint, 4> kTable{
        {{"Human", 0.950}, {"SplitDQN", 0.886}, {"DQN", 0.771}, {"Random", 0.221}}};
    return kTable;
}

std::span<const ReferencePoint> reference_table2() {
    static constexpr std::array<ReferencePoint, 2> kTable{{{"SplitDQN-3", 0.834}, {"SplitDQN-2", 0.596}}};
    return kTable;
}

double final_success(const TrainingCurve& curve, int n) {
    if (curve.empty()) return 0.0;
    const auto k = std::min<std::size_t>(curve.size(), static_cast<std::size_t>(n));
    double s = 0.0;
    for (std::size_t i = curve.size() - k; i < curve.size(); ++i) s += curve[i].success_rate;
    return s / static_cast<double>(k);
}

std::optional<int> epochs_to_level(const TrainingCurve& curve, double level) {
    for (const auto& p : curve)
        if (p.success_rate >= level - 1e-12) return p.epoch;
    return std::nullopt;
}

std::vector<StatePtr> probe_states(const EnvConfig& env_cfg, int n, std::uint64_t seed) {
    std::vector<StatePtr> out;
    Rng rng(seed);
    for (int i = 0; i < n; ++i) out.push_back(reset(env_cfg, rng).state);
    return out;
}

bool q_prefix_identical(const QAgent& a, const QAgent& b, std::span<const StatePtr> probes) {
    for (const auto& s : probes) {
        const auto qa = a.q_values(*s);
        const auto qb = b.q_values(*s);
        if (qb.size() < qa.size() || !std::equal(qa.begin(), qa.end(), qb.begin())) return false;
    }
    return true;
}

ModularityReport run_modularity_experiment(const EnvConfig& env_cfg, const TrainConfig& cfg,
                                           const std::string& split2_dir, int eval_episodes,
                                           const std::function<void(const std::string&, const CurvePoint&)>& on_epoch) {
    if (!std::filesystem::exists(std::filesystem::path(split2_dir) / "manifest.json"))
        throw CheckpointError("modularity: no SplitDQN-2 checkpoint in " + split2_dir);
    EnvConfig cfg3 = env_cfg;
    cfg3.extra_primitive_enabled = true;

    ModularityReport report;
    const SplitAgent split2 = SplitAgent::load(split2_dir);
    if (split2.n_primitives() != 2) throw CheckpointError("modularity: checkpoint is not a two-primitive agent");

    Rng init_rng(mix_seed(cfg.seed, 3));
    SplitAgent warm = SplitAgent::load(split2_dir);
    warm.add_primitive(std::nullopt, init_rng);
    const auto probes = probe_states(cfg3, 16, mix_seed(cfg.seed, 4));
    report.warm_start_exact = q_prefix_identical(split2, warm, probes);

    Rng scratch_rng(mix_seed(cfg.seed, 5));
    SplitAgent scratch(cfg.agent, 3, scratch_rng);

    auto hook = [&](const std::string& name) {
        TrainHooks h;
        if (on_epoch) h.on_epoch = [&on_epoch, name](const CurvePoint& p) { on_epoch(name, p); };
        return h;
    };
    report.warm_curve = train(warm, cfg3, cfg, hook("SplitDQN-3"));
    report.scratch_curve = train(scratch, cfg3, cfg, hook("SplitDQN-3-scr"));
    report.warm_eval = evaluate(greedy_policy(warm), cfg3, eval_episodes, mix_seed(cfg.seed, 6));
    report.scratch_eval = evaluate(greedy_policy(scratch), cfg3, eval_episodes, mix_seed(cfg.seed, 6));

    report.level = final_success(report.scratch_curve);
    report.warm_epochs_to_level = epochs_to_level(report.warm_curve, report.level);
    report.scratch_epochs_to_level = epochs_to_level(report.scratch_curve, report.level);
    return report;
}

}  // namespace singulation
