#pragma once

#include "singulation/env.hpp"
#include "singulation/scene.hpp"

#include <cmath>
#include <limits>

namespace fixtures {

using singulation::Box;
using singulation::Scene;
using singulation::Vec2;
using singulation::Vec3;

// Full extents (sx, sy, sz), like the generator config.
inline Box box(double sx, double sy, double sz, double x, double y, double yaw = 0.0, int id = 0) {
    Box b;
    b.half_extents = {0.5 * sx, 0.5 * sy, 0.5 * sz};
    b.center = {x, y};
    b.yaw = yaw;
    b.id = id;
    return b;
}

inline Scene scene(Box target, std::vector<Box> obstacles = {}) {
    Scene s;
    s.target = target;
    s.target.id = singulation::kTargetId;
    for (std::size_t i = 0; i < obstacles.size(); ++i) obstacles[i].id = static_cast<int>(i) + 1;
    s.obstacles = std::move(obstacles);
    return s;
}

// Brute-force footprint distance: dense samples along both perimeters.
inline double sampled_distance(const Box& a, const Box& b, int per_edge = 400) {
    auto perimeter = [per_edge](const Box& box) {
        std::vector<Vec2> pts;
        const auto c = box.corners();
        for (int e = 0; e < 4; ++e) {
            const Vec2 p = c[e], q = c[(e + 1) % 4];
            for (int k = 0; k < per_edge; ++k) pts.push_back(p + (q - p) * (static_cast<double>(k) / per_edge));
        }
        return pts;
    };
    const auto pa = perimeter(a), pb = perimeter(b);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : pa)
        for (const auto& q : pb) best = std::min(best, (p - q).norm());
    return best;
}

// Target 2x2x1 at the origin with one 2x2x1 obstacle whose center sits at (x, 0).
inline Scene pair_scene(double x, double obstacle_height = 1.0, double target_height = 1.0) {
    return scene(box(2, 2, target_height, 0, 0), {box(2, 2, obstacle_height, x, 0)});
}

// Seeded draw that retries on placement failure, like the env reset.
inline Scene draw(std::uint64_t seed, const singulation::SceneGenConfig& cfg = {}) {
    singulation::Rng rng(seed);
    for (;;) {
        try {
            return singulation::generate_scene(cfg, rng);
        } catch (const singulation::GenerationError&) {
        }
    }
}

}  // namespace fixtures
