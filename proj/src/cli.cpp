#include "singulation/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "singulation/config.hpp"
#include "singulation/harness.hpp"
#include "singulation/nn.hpp"
#include "singulation/session.hpp"

namespace singulation {

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::string out = ".";
    std::uint64_t seed = 0;
    std::string policy = "split";
    std::string checkpoint;
    int episodes = -1;
    int eval_episodes = 100;
    std::string trace;
    bool toy = false;
    // gradcheck
    int nets = 100;
    std::vector<int> dims{263, 100, 100, 1};
    double h = 1e-4;
    // serve
    unsigned short port = 8765;
    int sessions = -1;
};

RunConfig resolve_config(const Options& o, RunConfig base) {
    RunConfig cfg = o.config.empty() ? base : load_config(o.config, base);
    if (o.episodes >= 0) cfg.train.episodes = o.episodes;
    cfg.train.seed = o.seed;
    cfg.env.validate();
    cfg.train.validate();
    return cfg;
}

std::unique_ptr<QAgent> make_agent(const std::string& policy, const RunConfig& cfg, Rng& rng) {
    if (policy == "split") return std::make_unique<SplitAgent>(cfg.train.agent, cfg.env.n_primitives(), rng);
    if (policy == "dqn") return std::make_unique<VanillaAgent>(cfg.train.agent, cfg.env.n_primitives(), rng);
    throw ConfigError("unknown learning policy '" + policy + "' (expected split or dqn)");
}

std::unique_ptr<QAgent> load_agent(const std::string& dir) {
    std::ifstream is(fs::path(dir) / "manifest.json");
    if (!is) throw ConfigError("no agent checkpoint in " + dir);
    const auto kind = nlohmann::json::parse(is).value("kind", "");
    if (kind == "split") return std::make_unique<SplitAgent>(SplitAgent::load(dir));
    if (kind == "vanilla") return std::make_unique<VanillaAgent>(VanillaAgent::load(dir));
    throw ConfigError("unknown agent kind in " + dir);
}

std::string display_name(const std::string& policy) {
    if (policy == "split") return "SplitDQN";
    if (policy == "dqn") return "DQN";
    if (policy == "random") return "Random";
    return policy;
}

void write_file(const fs::path& path, const std::string& content) {
    fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write " + path.string());
    os << content;
}

std::string metrics_text(const std::vector<std::pair<std::string, EvalReport>>& rows) {
    std::ostringstream os;
    write_metrics_csv(os, rows);
    return os.str();
}

std::string curves_text(const std::vector<std::pair<std::string, TrainingCurve>>& curves) {
    std::ostringstream os;
    write_curves_csv(os, curves);
    return os.str();
}

int cmd_train(const Options& o, std::ostream& out) {
    const RunConfig cfg = resolve_config(o, o.toy ? toy_config() : RunConfig{});
    Rng init_rng(mix_seed(cfg.train.seed, 0));
    auto agent = make_agent(o.policy, cfg, init_rng);
    const std::string name = display_name(o.policy);

    TrainHooks hooks;
    hooks.on_epoch = [&](const CurvePoint& p) {
        out << name << " epoch " << p.epoch << " success " << std::fixed << std::setprecision(3) << p.success_rate
            << " reward " << p.mean_reward << '\n';
    };
    const TrainingCurve curve = train(*agent, cfg.env, cfg.train, hooks);

    const fs::path dir(o.out);
    agent->save((dir / (o.policy + "_checkpoint")).string());
    const EvalReport rep = evaluate(greedy_policy(*agent), cfg.env, o.eval_episodes, mix_seed(cfg.train.seed, 99));
    write_file(dir / "curves.csv", curves_text({{name, curve}}));
    write_file(dir / "metrics.csv", metrics_text({{name, rep}}));
    out << name << " final success " << rep.success_rate << " over " << rep.n_episodes << " episodes\n";
    return 0;
}

int cmd_eval(const Options& o, std::ostream& out) {
    const RunConfig cfg = resolve_config(o, o.toy ? toy_config() : RunConfig{});
    const int n = o.episodes >= 0 ? o.episodes : 100;

    std::unique_ptr<QAgent> agent;
    Policy policy;
    if (o.policy == "random") {
        policy = random_policy(cfg.env.n_actions());
    } else {
        if (o.checkpoint.empty()) throw ConfigError("--checkpoint is required for policy " + o.policy);
        agent = load_agent(o.checkpoint);
        if (agent->n_actions() != cfg.env.n_actions()) throw ConfigError("checkpoint action space differs from config");
        policy = greedy_policy(*agent);
    }

    std::ofstream trace;
    TraceSink sink;
    if (!o.trace.empty()) {
        trace.open(o.trace, std::ios::trunc);
        if (!trace) throw Error("cannot write " + o.trace);
        sink = [&trace](const nlohmann::json& line) { trace << line.dump() << '\n'; };
    }
    const std::string name = agent ? display_name(agent->kind() == "split" ? "split" : "dqn") : "Random";
    const EvalReport rep = evaluate(policy, cfg.env, n, o.seed, sink);
    write_file(fs::path(o.out) / "metrics.csv", metrics_text({{name, rep}}));
    write_metrics_csv(out, {{name, rep}});
    return 0;
}

int cmd_gradcheck(const Options& o, std::ostream& out) {
    const auto report = nn::gradient_check(o.dims, o.nets, o.seed, o.h);
    out << "gradcheck nets=" << report.networks << " parameters=" << report.parameters_checked
        << " max_relative_error=" << std::scientific << std::setprecision(3) << report.max_relative_error << '\n';
    return report.max_relative_error < 1e-4 ? 0 : 1;
}

int cmd_modularity(const Options& o, std::ostream& out) {
    RunConfig base = o.toy ? toy_complex_config() : RunConfig{};
    if (!o.toy) {
        base.env.scene_cfg.n_obstacles_max = 13;
        base.env.scene_cfg.equal_height_prob = 0.2;
    }
    RunConfig cfg = resolve_config(o, base);
    cfg.env.extra_primitive_enabled = false;

    const fs::path dir(o.out);
    std::string split2_dir = o.checkpoint;
    TrainingCurve split2_curve;
    auto progress = [&out](const std::string& name, const CurvePoint& p) {
        out << name << " epoch " << p.epoch << " success " << std::fixed << std::setprecision(3) << p.success_rate << '\n';
    };
    if (split2_dir.empty()) {
        Rng init_rng(mix_seed(cfg.train.seed, 0));
        SplitAgent split2(cfg.train.agent, 2, init_rng);
        TrainHooks hooks;
        hooks.on_epoch = [&](const CurvePoint& p) { progress("SplitDQN-2", p); };
        split2_curve = train(split2, cfg.env, cfg.train, hooks);
        split2_dir = (dir / "split2_checkpoint").string();
        split2.save(split2_dir);
    }
    const SplitAgent split2 = SplitAgent::load(split2_dir);
    const EvalReport split2_eval = evaluate(greedy_policy(split2), cfg.env, o.eval_episodes, mix_seed(cfg.train.seed, 6));

    const ModularityReport rep = run_modularity_experiment(cfg.env, cfg.train, split2_dir, o.eval_episodes, progress);
    std::vector<std::pair<std::string, TrainingCurve>> curves;
    if (!split2_curve.empty()) curves.emplace_back("SplitDQN-2", split2_curve);
    curves.emplace_back("SplitDQN-3", rep.warm_curve);
    curves.emplace_back("SplitDQN-3-scr", rep.scratch_curve);
    write_file(dir / "curves.csv", curves_text(curves));
    write_file(dir / "metrics.csv", metrics_text({{"SplitDQN-2", split2_eval},
                                                  {"SplitDQN-3", rep.warm_eval},
                                                  {"SplitDQN-3-scr", rep.scratch_eval}}));
    auto epochs = [](const std::optional<int>& e) { return e ? std::to_string(*e) : std::string("never"); };
    out << "warm start reproduces SplitDQN-2 Q-values: " << (rep.warm_start_exact ? "yes" : "no") << '\n'
        << "scratch final success level " << std::fixed << std::setprecision(3) << rep.level << "; epochs to reach it:"
        << " SplitDQN-3 " << epochs(rep.warm_epochs_to_level) << ", SplitDQN-3-scr "
        << epochs(rep.scratch_epochs_to_level) << '\n';
    return rep.warm_start_exact ? 0 : 1;
}

int cmd_serve(const Options& o, std::ostream& out) {
    const RunConfig cfg = resolve_config(o, o.toy ? toy_config() : RunConfig{});
    ServeOptions so;
    so.port = o.port;
    so.seed = o.seed;
    so.out_dir = o.out;
    so.max_sessions = o.sessions;
    so.on_listening = [&out](unsigned short port) { out << "listening on ws://127.0.0.1:" << port << std::endl; };
    so.log = [&out](const std::string& s) { out << s << std::endl; };
    serve_session(cfg, so);
    return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Object singulation workbench: push simulation, Split DQN training and evaluation"};
    app.require_subcommand(1, 1);
    Options o;

    auto common = [&o](CLI::App* c) {
        c->add_option("--config", o.config, "key=value configuration file");
        c->add_option("--out", o.out, "output directory")->capture_default_str();
        c->add_option("--seed", o.seed, "base seed")->capture_default_str();
        c->add_flag("--toy", o.toy, "start from the reduced desk-scale environment");
    };

    auto* train_cmd = app.add_subcommand("train", "train a SplitDQN or DQN policy");
    common(train_cmd);
    train_cmd->add_option("--policy", o.policy, "split | dqn")->check(CLI::IsMember({"split", "dqn"}));
    train_cmd->add_option("--episodes", o.episodes, "override training episodes");
    train_cmd->add_option("--eval-episodes", o.eval_episodes, "final evaluation episodes")->capture_default_str();

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a policy on seeded scenes");
    common(eval_cmd);
    eval_cmd->add_option("--policy", o.policy, "random | split | dqn")->check(CLI::IsMember({"random", "split", "dqn"}));
    eval_cmd->add_option("--checkpoint", o.checkpoint, "agent checkpoint directory");
    eval_cmd->add_option("--episodes", o.episodes, "number of episodes (default 100)");
    eval_cmd->add_option("--trace", o.trace, "write the episode trace log (JSON lines)");

    auto* grad_cmd = app.add_subcommand("gradcheck", "backprop vs finite differences on random networks");
    grad_cmd->add_option("--nets", o.nets, "number of random networks")->capture_default_str();
    grad_cmd->add_option("--seed", o.seed, "seed")->capture_default_str();
    grad_cmd->add_option("--dims", o.dims, "layer dims")->delimiter(',');
    grad_cmd->add_option("--step", o.h, "finite-difference step")->capture_default_str();

    auto* mod_cmd = app.add_subcommand("modularity", "SplitDQN-2 -> SplitDQN-3 warm start vs scratch");
    common(mod_cmd);
    mod_cmd->add_option("--checkpoint", o.checkpoint, "existing SplitDQN-2 checkpoint (skips its training)");
    mod_cmd->add_option("--episodes", o.episodes, "override training episodes");
    mod_cmd->add_option("--eval-episodes", o.eval_episodes, "final evaluation episodes")->capture_default_str();

    auto* serve_cmd = app.add_subcommand("serve", "human-policy WebSocket session server");
    common(serve_cmd);
    serve_cmd->add_option("--port", o.port, "TCP port (0 picks a free one)")->capture_default_str();
    serve_cmd->add_option("--sessions", o.sessions, "stop after this many sessions");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (app.got_subcommand(train_cmd)) return cmd_train(o, out);
        if (app.got_subcommand(eval_cmd)) return cmd_eval(o, out);
        if (app.got_subcommand(grad_cmd)) return cmd_gradcheck(o, out);
        if (app.got_subcommand(mod_cmd)) return cmd_modularity(o, out);
        if (app.got_subcommand(serve_cmd)) return cmd_serve(o, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 2;
}

}  // namespace singulation
