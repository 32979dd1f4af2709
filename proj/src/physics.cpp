#include "singulation/physics.hpp"

#include <algorithm>
#include <cmath>

namespace singulation {

namespace {

constexpr double kContactEpsilon = 1e-9;
constexpr double kMovedThreshold = 1e-6;

bool in_sweep_band(const Box& box, const Finger& finger) {
    // Box occupies z in [0, height]; the sphere spans [bottom, bottom + 2r].
    return box.height() > finger.bottom() + kContactEpsilon;
}

// Translation of `pushed` that removes its overlap with `pusher`, chosen as
// the cheapest separating-axis move that does not point backwards along the
// push direction.
Vec2 separation_vector(const Box& pusher, const Box& pushed, const Vec2& dir) {
    Vec2 best = Vec2::Zero();
    double best_amount = kInfiniteDistance;
    Vec2 fallback = Vec2::Zero();
    double fallback_amount = kInfiniteDistance;

    const auto pa = pusher.axes();
    const auto pb = pushed.axes();
    for (const auto* axes : {&pa, &pb}) {
        for (const Vec2& axis : *axes) {
            auto extent = [&](const Box& b) {
                const auto [ax, ay] = b.axes();
                return b.half_extents.x() * std::abs(ax.dot(axis)) + b.half_extents.y() * std::abs(ay.dot(axis));
            };
            const double ca = pusher.center.dot(axis), ra = extent(pusher);
            const double cb = pushed.center.dot(axis), rb = extent(pushed);
            const double forward = (ca + ra) - (cb - rb);   // move pushed along +axis
            const double backward = (cb + rb) - (ca - ra);  // move pushed along -axis
            for (const auto& [v, amount] : {std::pair{Vec2(axis), forward}, std::pair{Vec2(-axis), backward}}) {
                if (amount < fallback_amount) {
                    fallback_amount = amount;
                    fallback = v;
                }
                if (v.dot(dir) >= -kContactEpsilon && amount < best_amount) {
                    best_amount = amount;
                    best = v;
                }
            }
        }
    }
    if (!std::isfinite(best_amount)) return fallback * fallback_amount;
    return best * best_amount;
}

// Translation that moves `box` out of the finger disc.
Vec2 finger_contact_move(const Vec2& c, const Box& box, double radius, const Vec2& dir) {
    const Vec2 local = box.to_local(c);
    const double hx = box.half_extents.x(), hy = box.half_extents.y();
    const Vec2 closest_local{std::clamp(local.x(), -hx, hx), std::clamp(local.y(), -hy, hy)};
    const Vec2 gap_local = closest_local - local;
    const double dist = gap_local.norm();

    Vec2 move;
    if (dist > kContactEpsilon) {
        const auto [ax, ay] = box.axes();
        const Vec2 normal = (ax * gap_local.x() + ay * gap_local.y()) / dist;
        move = normal * (radius - dist);
    } else {
        // Finger center inside the footprint: shove forward until clear.
        Box probe = box;
        double amount = radius;
        probe.center = box.center + dir * amount;
        while (point_box_distance(c, probe) < radius - kContactEpsilon && amount < 1e3) {
            amount *= 2.0;
            probe.center = box.center + dir * amount;
        }
        move = dir * amount;
    }
    const double back = move.dot(dir);
    if (back < 0.0) move -= back * dir;
    return move;
}

struct Workspace {
    std::vector<Box> boxes;  // index 0 is the target
    std::vector<bool> alive;
    std::vector<bool> touched;

    std::size_t size() const { return boxes.size(); }
};

void chain_push(Workspace& ws, std::size_t i, const Vec2& dir, std::size_t depth) {
    for (std::size_t j = 0; j < ws.size(); ++j) {
        if (j == i || !ws.alive[j]) continue;
        if (penetration_depth(ws.boxes[i], ws.boxes[j]) <= kContactEpsilon) continue;
        ws.boxes[j].center += separation_vector(ws.boxes[i], ws.boxes[j], dir);
        ws.touched[j] = true;
        if (depth < ws.size()) chain_push(ws, j, dir, depth + 1);
    }
}

// Iterative cleanup of overlaps left behind by the depth-first chain.
void settle(Workspace& ws, const Vec2& dir, const PhysicsParams& params) {
    for (int iter = 0; iter < params.max_resolution_iterations; ++iter) {
        bool found = false;
        for (std::size_t i = 0; i < ws.size(); ++i) {
            for (std::size_t j = i + 1; j < ws.size(); ++j) {
                if (!ws.alive[i] || !ws.alive[j] || !(ws.touched[i] || ws.touched[j])) continue;
                if (penetration_depth(ws.boxes[i], ws.boxes[j]) <= kContactEpsilon) continue;
                found = true;
                const bool i_behind = ws.boxes[i].center.dot(dir) <= ws.boxes[j].center.dot(dir);
                const std::size_t pusher = i_behind ? i : j;
                const std::size_t pushed = i_behind ? j : i;
                ws.boxes[pushed].center += separation_vector(ws.boxes[pusher], ws.boxes[pushed], dir);
                ws.touched[pushed] = true;
            }
        }
        if (!found) return;
    }
    for (std::size_t i = 0; i < ws.size(); ++i) {
        for (std::size_t j = i + 1; j < ws.size(); ++j) {
            if (!ws.alive[i] || !ws.alive[j] || !(ws.touched[i] || ws.touched[j])) continue;
            if (penetration_depth(ws.boxes[i], ws.boxes[j]) > params.rest_overlap_tolerance)
                throw SimulationFault("physics: contact resolution did not converge");
        }
    }
}

bool outside(const Box& b, double w) { return std::abs(b.center.x()) > w || std::abs(b.center.y()) > w; }

Scene assemble(const Scene& base, const Workspace& ws) {
    Scene s;
    s.workspace_half = base.workspace_half;
    s.target = ws.boxes[0];
    for (std::size_t i = 1; i < ws.size(); ++i)
        if (ws.alive[i]) s.obstacles.push_back(ws.boxes[i]);
    return s;
}

}  // namespace

const char* primitive_name(Primitive p) {
    switch (p) {
        case Primitive::Target: return "push_target";
        case Primitive::Obstacle: return "push_obstacle";
        case Primitive::Extra: return "push_extra";
    }
    return "unknown";
}

Finger finger_for(const PushSpec& push, double radius) {
    return Finger{radius, std::max(radius, push.p0.z())};
}

Vec2 push_start_world(const Scene& scene, const PushSpec& push) { return scene.target.center + push.p0.head<2>(); }

bool check_approach(const Scene& scene, const PushSpec& push, const Finger& finger) {
    const Vec2 p = push_start_world(scene, push);
    for (const Box* b : scene.all_boxes()) {
        if (in_sweep_band(*b, finger) && point_box_distance(p, *b) < finger.radius) return true;
    }
    return false;
}

PushOutcome execute_push(const Scene& scene, const PushSpec& push, const Finger& finger,
                         const PhysicsParams& params, const PushTraceFn& trace) {
    Workspace ws;
    ws.boxes.push_back(scene.target);
    for (const auto& o : scene.obstacles) ws.boxes.push_back(o);
    ws.alive.assign(ws.size(), true);
    ws.touched.assign(ws.size(), false);

    PushOutcome out;
    const Vec2 dir = push.direction();
    const Vec2 start = push_start_world(scene, push);
    const int n_sub = std::max(1, static_cast<int>(std::ceil(push.distance / params.substep - 1e-9)));
    const double w = scene.workspace_half;

    for (int k = 1; k <= n_sub && !out.target_off_surface; ++k) {
        const Vec2 c = start + dir * (push.distance * k / n_sub);
        for (std::size_t i = 0; i < ws.size(); ++i) {
            if (!ws.alive[i] || !in_sweep_band(ws.boxes[i], finger)) continue;
            if (point_box_distance(c, ws.boxes[i]) >= finger.radius - kContactEpsilon) continue;
            ws.boxes[i].center += finger_contact_move(c, ws.boxes[i], finger.radius, dir);
            ws.touched[i] = true;
            chain_push(ws, i, dir, 1);
        }
        settle(ws, dir, params);

        for (std::size_t i = 1; i < ws.size(); ++i) {
            if (ws.alive[i] && outside(ws.boxes[i], w)) {
                ws.alive[i] = false;
                out.obstacles_removed.push_back(ws.boxes[i].id);
            }
        }
        if (outside(ws.boxes[0], w)) out.target_off_surface = true;
        if (trace) trace(c, assemble(scene, ws));
    }

    out.scene_after = assemble(scene, ws);
    out.target_moved = (ws.boxes[0].center - scene.target.center).norm() > kMovedThreshold;
    out.moved_any = out.target_moved || !out.obstacles_removed.empty();
    for (std::size_t i = 1; i < ws.size() && !out.moved_any; ++i)
        out.moved_any = (ws.boxes[i].center - scene.obstacles[i - 1].center).norm() > kMovedThreshold;
    return out;
}

PushOutcome simulate_push(const Scene& scene, const PushSpec& push, const Finger& finger,
                          const PhysicsParams& params, const PushTraceFn& trace) {
    if (check_approach(scene, push, finger)) {
        PushOutcome out;
        out.scene_after = scene;
        out.approach_collision = true;
        return out;
    }
    return execute_push(scene, push, finger, params, trace);
}

double max_pairwise_overlap(const Scene& scene) {
    const auto boxes = scene.all_boxes();
    double m = 0.0;
    for (std::size_t i = 0; i < boxes.size(); ++i)
        for (std::size_t j = i + 1; j < boxes.size(); ++j) m = std::max(m, penetration_depth(*boxes[i], *boxes[j]));
    return m;
}

}  // namespace singulation
