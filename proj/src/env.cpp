#include "singulation/env.hpp"

#include <cmath>

namespace singulation {

const char* terminal_name(TerminalKind k) {
    switch (k) {
        case TerminalKind::None: return "None";
        case TerminalKind::Singulated: return "Singulated";
        case TerminalKind::TargetOff: return "TargetOff";
        case TerminalKind::Collision: return "Collision";
        case TerminalKind::Timeout: return "Timeout";
        case TerminalKind::SimFault: return "SimFault";
    }
    return "None";
}

void EnvConfig::validate() const {
    if (w < 1) throw ConfigError("env: w must be >= 1");
    if (!(push_distance > 0.0)) throw ConfigError("env: push_distance must be positive");
    if (!(d_sing > 0.0)) throw ConfigError("env: d_sing must be positive");
    if (t_max < 1) throw ConfigError("env: t_max must be >= 1");
    if (epsilon_offset < 0.0 || !(alpha > 0.0) || !(finger_radius > 0.0))
        throw ConfigError("env: offsets and radii must be positive");
    if (feature_cfg.w != w) throw ConfigError("env: feature w differs from env w");
    feature_cfg.validate();
    scene_cfg.validate();
}

PushSpec action_to_push(int u, const Scene& scene, const EnvConfig& cfg) {
    if (u < 0 || u >= cfg.n_actions()) throw std::out_of_range("env: action index out of range");
    PushSpec p;
    p.primitive = primitive_of(u, cfg.w);
    p.theta = orientation_angle(u % cfg.w, cfg.w);
    const double c = std::cos(p.theta), s = std::sin(p.theta);
    const Vec3 b = 2.0 * scene.target.half_extents;
    // Every sweep ends at p_f = d [cos, sin, 0] in the target frame.
    switch (p.primitive) {
        case Primitive::Target: {
            const double r = std::hypot(b.x(), b.y()) + cfg.epsilon_offset;
            p.p0 = {-r * c, -r * s, 0.0};
            p.distance = r + cfg.push_distance;
            break;
        }
        case Primitive::Obstacle:
            p.p0 = {0.0, 0.0, b.z() + cfg.epsilon_offset};
            p.distance = cfg.push_distance;
            break;
        case Primitive::Extra:
            p.p0 = {-cfg.alpha * c, -cfg.alpha * s, 0.0};
            p.distance = cfg.alpha + cfg.push_distance;
            break;
    }
    return p;
}

double reward(const PushOutcome& outcome, TerminalKind terminal, Primitive primitive, double extra_penalty) {
    double r;
    switch (terminal) {
        case TerminalKind::Singulated: r = 10.0; break;
        case TerminalKind::TargetOff:
        case TerminalKind::Collision:
        case TerminalKind::SimFault: r = -10.0; break;
        default: r = outcome.moved_any ? -1.0 : -5.0; break;
    }
    if (primitive == Primitive::Extra) r += extra_penalty;
    return r;
}

TerminalKind classify_terminal(const Scene& scene_after, const PushOutcome& outcome, int t, const EnvConfig& cfg) {
    if (outcome.approach_collision) return TerminalKind::Collision;
    if (outcome.target_off_surface || !target_on_surface(scene_after)) return TerminalKind::TargetOff;
    if (min_obstacle_distance(scene_after) >= cfg.d_sing) return TerminalKind::Singulated;
    if (t + 1 >= cfg.t_max) return TerminalKind::Timeout;
    return TerminalKind::None;
}

StepResult step(EpisodeState& ep, int u, const EnvConfig& cfg, const PushTraceFn& trace) {
    if (ep.done) throw std::logic_error("env: step on a finished episode");
    StepResult r;
    r.push = action_to_push(u, ep.scene, cfg);
    const Finger finger = finger_for(r.push, cfg.finger_radius);
    try {
        r.outcome = simulate_push(ep.scene, r.push, finger, cfg.physics, trace);
        r.terminal = classify_terminal(r.outcome.scene_after, r.outcome, ep.t, cfg);
    } catch (const SimulationFault&) {
        r.outcome = PushOutcome{};
        r.outcome.scene_after = ep.scene;
        r.terminal = TerminalKind::SimFault;
    }
    r.reward = reward(r.outcome, r.terminal, r.push.primitive, cfg.extra_penalty);
    ep.scene = r.outcome.scene_after;
    ep.state = std::make_shared<const State>(build_state(ep.scene, cfg.feature_cfg));
    ep.t += 1;
    ep.done = r.terminal != TerminalKind::None;
    r.next_state = ep.state;
    return r;
}

EpisodeState episode_from_scene(const Scene& scene, const EnvConfig& cfg) {
    EpisodeState ep;
    ep.scene = scene;
    ep.t = 0;
    ep.state = std::make_shared<const State>(build_state(scene, cfg.feature_cfg));
    return ep;
}

EpisodeState reset(const EnvConfig& cfg, Rng& rng) {
    cfg.validate();
    for (int attempt = 0; attempt < cfg.reset_retries; ++attempt) {
        Scene scene;
        try {
            scene = generate_scene(cfg.scene_cfg, rng);
        } catch (const GenerationError&) {
            continue;
        }
        if (min_obstacle_distance(scene) < cfg.d_sing) return episode_from_scene(scene, cfg);
    }
    throw GenerationError("env: no cluttered scene after retries");
}

nlohmann::json step_record(int t, int u, const StepResult& r) {
    const double d = min_obstacle_distance(r.outcome.scene_after);
    return {{"t", t},
            {"u", u},
            {"reward", r.reward},
            {"terminal", terminal_name(r.terminal)},
            {"min_dist", std::isfinite(d) ? nlohmann::json(d) : nlohmann::json(nullptr)}};
}

}  // namespace singulation
