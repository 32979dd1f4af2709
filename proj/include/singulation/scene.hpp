#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "singulation/common.hpp"

namespace singulation {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

inline constexpr int kTargetId = 0;

/// Axis-aligned-in-its-own-frame box resting on the plane z = 0.
/// Positions are in the workspace frame (cm), yaw in [0, 2pi).
struct Box {
    Vec3 half_extents{0.5, 0.5, 0.25};
    Vec2 center{0.0, 0.0};
    double yaw = 0.0;
    int id = 0;

    double height() const { return 2.0 * half_extents.z(); }
    double circumradius() const { return half_extents.head<2>().norm(); }

    // Point in box-local planar coordinates.
    Vec2 to_local(const Vec2& p) const;
    std::array<Vec2, 4> corners() const;
    // The two unit edge normals of the footprint.
    std::array<Vec2, 2> axes() const;

    bool operator==(const Box&) const = default;
};

struct Scene {
    Box target;
    std::vector<Box> obstacles;
    double workspace_half = 25.0;

    // Target first, then obstacles in storage order.
    std::vector<const Box*> all_boxes() const;
    bool operator==(const Scene&) const = default;
};

struct SceneGenConfig {
    int n_obstacles_min = 5;
    int n_obstacles_max = 8;
    Vec3 box_min{1.0, 1.0, 0.5};  // full extents, cm
    Vec3 box_max{3.0, 3.0, 2.0};
    double equal_height_prob = 0.0;
    double workspace_half = 25.0;
    double target_center_spread = 3.0;  // target center uniform in [-s, s]^2
    std::uint64_t seed = 0;

    void validate() const;
};

/// [W - x, W + x, W - y, W + y] for target center (x, y).
struct SupportDistances {
    std::array<double, 4> s_d{};
    bool off_surface = false;
};

inline constexpr double kInfiniteDistance = std::numeric_limits<double>::infinity();
inline constexpr double kGenerationOverlapTolerance = 0.05;
inline constexpr int kGenerationRetries = 255;

Scene generate_scene(const SceneGenConfig& cfg, Rng& rng);

double min_obstacle_distance(const Scene& scene);

SupportDistances support_distances(const Scene& scene);

bool target_on_surface(const Scene& scene);

// 2D footprint geometry.
double point_box_distance(const Vec2& p, const Box& box);
bool boxes_overlap(const Box& a, const Box& b);
double box_distance(const Box& a, const Box& b);

/// Penetration depth along the separating-axis with least overlap (0 when disjoint).
double penetration_depth(const Box& a, const Box& b);

/// Rigid rotation of every box about the target center by `angle` (ccw).
Scene rotate_about_target(const Scene& scene, double angle);

nlohmann::json to_json(const Scene& scene);
Scene scene_from_json(const nlohmann::json& j);

}  // namespace singulation
