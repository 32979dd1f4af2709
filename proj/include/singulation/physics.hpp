#pragma once

#include <functional>
#include <vector>

#include "singulation/scene.hpp"

namespace singulation {

enum class Primitive { Target = 0, Obstacle = 1, Extra = 2 };

const char* primitive_name(Primitive p);

/// Spherical fingertip. `center_height` is the sweep plane of the sphere center.
struct Finger {
    double radius = 0.5;
    double center_height = 0.5;

    double bottom() const { return center_height - radius; }
};

/// A resolved push, start point expressed in the target frame {O}: origin
/// at the target center, axes parallel to the workspace axes.
struct PushSpec {
    Vec3 p0{0.0, 0.0, 0.0};
    double theta = 0.0;
    double distance = 1.0;  // full sweep length from p0
    Primitive primitive = Primitive::Target;

    Vec2 direction() const { return {std::cos(theta), std::sin(theta)}; }
};

struct PushOutcome {
    Scene scene_after;
    bool moved_any = false;
    bool target_moved = false;
    bool target_off_surface = false;
    bool approach_collision = false;
    std::vector<int> obstacles_removed;
};

struct PhysicsParams {
    double substep = 0.1;
    int max_resolution_iterations = 64;
    double rest_overlap_tolerance = 0.05;
};

/// Finger pose for a push: sweep height from p0.z, with a sphere resting on
/// the surface when p0.z is zero.
Finger finger_for(const PushSpec& push, double radius);

Vec2 push_start_world(const Scene& scene, const PushSpec& push);

/// True when lowering the finger vertically onto p0 would hit a box.
bool check_approach(const Scene& scene, const PushSpec& push, const Finger& finger);

/// Called after every substep with the finger center and current scene.
using PushTraceFn = std::function<void(const Vec2& finger_xy, const Scene& scene)>;

/// Quasi-static, translation-only sweep. Throws SimulationFault when contact
/// resolution does not converge.
PushOutcome execute_push(const Scene& scene, const PushSpec& push, const Finger& finger,
                         const PhysicsParams& params = {}, const PushTraceFn& trace = {});

/// check_approach followed by execute_push; an approach collision returns the
/// unchanged scene with approach_collision set.
PushOutcome simulate_push(const Scene& scene, const PushSpec& push, const Finger& finger,
                          const PhysicsParams& params = {}, const PushTraceFn& trace = {});

double max_pairwise_overlap(const Scene& scene);

}  // namespace singulation
