#include "singulation/scene.hpp"

#include <algorithm>
#include <cmath>

namespace singulation {

Vec2 Box::to_local(const Vec2& p) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    const Vec2 d = p - center;
    return {c * d.x() + s * d.y(), -s * d.x() + c * d.y()};
}

std::array<Vec2, 2> Box::axes() const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    return {Vec2{c, s}, Vec2{-s, c}};
}

std::array<Vec2, 4> Box::corners() const {
    const auto [ax, ay] = axes();
    const Vec2 ex = ax * half_extents.x();
    const Vec2 ey = ay * half_extents.y();
    return {center + ex + ey, center - ex + ey, center - ex - ey, center + ex - ey};
}

std::vector<const Box*> Scene::all_boxes() const {
    std::vector<const Box*> out;
    out.reserve(obstacles.size() + 1);
    out.push_back(&target);
    for (const auto& o : obstacles) out.push_back(&o);
    return out;
}

void SceneGenConfig::validate() const {
    if (n_obstacles_min < 0 || n_obstacles_max < n_obstacles_min)
        throw ConfigError("scene: invalid obstacle count range");
    for (int i = 0; i < 3; ++i) {
        if (!(box_min[i] > 0.0) || box_max[i] < box_min[i])
            throw ConfigError("scene: box_min must be positive and <= box_max");
    }
    if (!(equal_height_prob >= 0.0 && equal_height_prob <= 1.0))
        throw ConfigError("scene: equal_height_prob outside [0, 1]");
    if (!(workspace_half > 0.0)) throw ConfigError("scene: workspace_half must be positive");
    if (target_center_spread < 0.0 || target_center_spread >= workspace_half)
        throw ConfigError("scene: target_center_spread outside [0, workspace_half)");
}

double point_box_distance(const Vec2& p, const Box& box) {
    const Vec2 l = box.to_local(p);
    const double dx = std::max(std::abs(l.x()) - box.half_extents.x(), 0.0);
    const double dy = std::max(std::abs(l.y()) - box.half_extents.y(), 0.0);
    return std::hypot(dx, dy);
}

namespace {

struct Interval {
    double lo, hi;
};

Interval project(const Box& b, const Vec2& axis) {
    const auto [ax, ay] = b.axes();
    const double c = b.center.dot(axis);
    const double r = b.half_extents.x() * std::abs(ax.dot(axis)) + b.half_extents.y() * std::abs(ay.dot(axis));
    return {c - r, c + r};
}

}  // namespace

double penetration_depth(const Box& a, const Box& b) {
    double depth = kInfiniteDistance;
    const auto aa = a.axes();
    const auto ba = b.axes();
    for (const auto* axes : {&aa, &ba}) {
        for (const Vec2& axis : *axes) {
            const Interval pa = project(a, axis);
            const Interval pb = project(b, axis);
            const double overlap = std::min(pa.hi, pb.hi) - std::max(pa.lo, pb.lo);
            if (overlap <= 0.0) return 0.0;
            depth = std::min(depth, overlap);
        }
    }
    return depth;
}

bool boxes_overlap(const Box& a, const Box& b) { return penetration_depth(a, b) > 0.0; }

double box_distance(const Box& a, const Box& b) {
    if (boxes_overlap(a, b)) return 0.0;
    // Disjoint convex polygons: the closest pair always involves a vertex.
    double d = kInfiniteDistance;
    for (const Vec2& c : a.corners()) d = std::min(d, point_box_distance(c, b));
    for (const Vec2& c : b.corners()) d = std::min(d, point_box_distance(c, a));
    return d;
}

double min_obstacle_distance(const Scene& scene) {
    double d = kInfiniteDistance;
    for (const auto& o : scene.obstacles) d = std::min(d, box_distance(scene.target, o));
    return d;
}

SupportDistances support_distances(const Scene& scene) {
    const double w = scene.workspace_half;
    const double x = scene.target.center.x();
    const double y = scene.target.center.y();
    SupportDistances out;
    out.s_d = {w - x, w + x, w - y, w + y};
    out.off_surface = std::any_of(out.s_d.begin(), out.s_d.end(), [](double v) { return v < 0.0; });
    return out;
}

bool target_on_surface(const Scene& scene) { return !support_distances(scene).off_surface; }

Scene rotate_about_target(const Scene& scene, double angle) {
    Scene out = scene;
    const Vec2 pivot = scene.target.center;
    const double c = std::cos(angle), s = std::sin(angle);
    auto rotate = [&](Box& b) {
        const Vec2 d = b.center - pivot;
        b.center = pivot + Vec2{c * d.x() - s * d.y(), s * d.x() + c * d.y()};
        b.yaw = wrap_angle(b.yaw + angle);
    };
    rotate(out.target);
    for (auto& o : out.obstacles) rotate(o);
    return out;
}

namespace {

Box random_box(const SceneGenConfig& cfg, Rng& rng, int id) {
    Box b;
    b.id = id;
    for (int i = 0; i < 3; ++i) b.half_extents[i] = 0.5 * rng.uniform(cfg.box_min[i], cfg.box_max[i]);
    b.yaw = wrap_angle(rng.uniform(0.0, kTwoPi));
    return b;
}

constexpr double kPlacementSlide = 0.05;

bool clear_of(const Box& candidate, const std::vector<Box>& placed, double tolerance) {
    return std::none_of(placed.begin(), placed.end(),
                        [&](const Box& p) { return penetration_depth(candidate, p) > tolerance; });
}

// Slides the candidate along the ray from the target center until it no
// longer overlaps the target (bisection on the radial offset).
double contact_radius(Box probe, const Box& target, const Vec2& dir) {
    double lo = 0.0;
    double hi = target.circumradius() + probe.circumradius();
    for (int i = 0; i < 60; ++i) {
        const double mid = 0.5 * (lo + hi);
        probe.center = target.center + dir * mid;
        (boxes_overlap(probe, target) ? lo : hi) = mid;
    }
    return hi;
}

}  // namespace

Scene generate_scene(const SceneGenConfig& cfg, Rng& rng) {
    cfg.validate();
    Scene scene;
    scene.workspace_half = cfg.workspace_half;
    scene.target = random_box(cfg, rng, kTargetId);
    scene.target.center = {rng.uniform(-cfg.target_center_spread, cfg.target_center_spread),
                           rng.uniform(-cfg.target_center_spread, cfg.target_center_spread)};

    const int n = rng.integer(cfg.n_obstacles_min, cfg.n_obstacles_max);
    const bool equal_height = rng.bernoulli(cfg.equal_height_prob);

    // The target takes part in overlap checks like any placed box.
    std::vector<Box> placed{scene.target};
    for (int id = 1; id <= n; ++id) {
        Box ob = random_box(cfg, rng, id);
        if (equal_height) ob.half_extents.z() = scene.target.half_extents.z();
        const double max_radius = 1.5 * (scene.target.circumradius() + ob.circumradius());

        bool ok = false;
        for (int attempt = 0; attempt < kGenerationRetries && !ok; ++attempt) {
            const double phi = rng.uniform(0.0, kTwoPi);
            const Vec2 dir{std::cos(phi), std::sin(phi)};
            const double r0 = contact_radius(ob, scene.target, dir);
            const double gap = rng.uniform(0.0, 0.5 * (max_radius - r0));
            ob.center = scene.target.center + dir * std::min(r0 + gap, max_radius);

            // Overlapping draws slide outward along the ray until they fit.
            for (double r = (ob.center - scene.target.center).norm(); r <= max_radius; r += kPlacementSlide) {
                ob.center = scene.target.center + dir * r;
                if (clear_of(ob, placed, 0.0)) {
                    ok = true;
                    break;
                }
            }
        }
        if (!ok) throw GenerationError("scene: obstacle placement failed after retries");
        placed.push_back(ob);
        scene.obstacles.push_back(ob);
    }
    return scene;
}

namespace {

nlohmann::json box_json(const Box& b) {
    return {{"id", b.id},
            {"center", {b.center.x(), b.center.y()}},
            {"yaw", b.yaw},
            {"extents", {2.0 * b.half_extents.x(), 2.0 * b.half_extents.y(), 2.0 * b.half_extents.z()}}};
}

Box box_from_json(const nlohmann::json& j) {
    Box b;
    b.id = j.at("id").get<int>();
    b.center = {j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>()};
    b.yaw = j.at("yaw").get<double>();
    const auto& e = j.at("extents");
    b.half_extents = {0.5 * e.at(0).get<double>(), 0.5 * e.at(1).get<double>(), 0.5 * e.at(2).get<double>()};
    return b;
}

}  // namespace

nlohmann::json to_json(const Scene& scene) {
    nlohmann::json obstacles = nlohmann::json::array();
    for (const auto& o : scene.obstacles) obstacles.push_back(box_json(o));
    return {{"workspace_half", scene.workspace_half}, {"target", box_json(scene.target)}, {"obstacles", obstacles}};
}

Scene scene_from_json(const nlohmann::json& j) {
    Scene s;
    s.workspace_half = j.at("workspace_half").get<double>();
    s.target = box_from_json(j.at("target"));
    for (const auto& o : j.at("obstacles")) s.obstacles.push_back(box_from_json(o));
    return s;
}

}  // namespace singulation
