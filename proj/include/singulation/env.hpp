#pragma once

#include <memory>
#include <optional>
#include <string>

#include <json.hpp>

#include "singulation/features.hpp"
#include "singulation/physics.hpp"
#include "singulation/scene.hpp"

namespace singulation {

enum class TerminalKind { None, Singulated, TargetOff, Collision, Timeout, SimFault };

const char* terminal_name(TerminalKind k);

struct EnvConfig {
    int w = 8;
    double push_distance = 10.0;
    double epsilon_offset = 0.5;
    double d_sing = 3.0;
    int t_max = 20;
    double alpha = 25.0;
    bool extra_primitive_enabled = false;
    double extra_penalty = -5.0;
    double finger_radius = 0.5;
    int reset_retries = 100;
    FeatureConfig feature_cfg;
    SceneGenConfig scene_cfg;
    PhysicsParams physics;

    int n_primitives() const { return extra_primitive_enabled ? 3 : 2; }
    int n_actions() const { return n_primitives() * w; }
    void validate() const;
};

using StatePtr = std::shared_ptr<const State>;

struct EpisodeState {
    Scene scene;
    int t = 0;
    StatePtr state;
    bool done = false;
};

struct StepResult {
    StatePtr next_state;
    double reward = 0.0;
    TerminalKind terminal = TerminalKind::None;
    PushOutcome outcome;
    PushSpec push;
};

inline Primitive primitive_of(int u, int w) { return static_cast<Primitive>(u / w); }

PushSpec action_to_push(int u, const Scene& scene, const EnvConfig& cfg);

double reward(const PushOutcome& outcome, TerminalKind terminal, Primitive primitive, double extra_penalty = -5.0);

TerminalKind classify_terminal(const Scene& scene_after, const PushOutcome& outcome, int t, const EnvConfig& cfg);

/// Advances `ep` in place and reports the transition. `trace` receives the
/// substep positions of the sweep when provided.
StepResult step(EpisodeState& ep, int u, const EnvConfig& cfg, const PushTraceFn& trace = {});

EpisodeState reset(const EnvConfig& cfg, Rng& rng);

/// Episode from a fixed scene (scripted fixtures, replay).
EpisodeState episode_from_scene(const Scene& scene, const EnvConfig& cfg);

/// One line of the episode trace log.
nlohmann::json step_record(int t, int u, const StepResult& r);

}  // namespace singulation
