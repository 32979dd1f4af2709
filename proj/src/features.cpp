#include "singulation/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>

namespace singulation {

void FeatureConfig::validate() const {
    if (w < 1) throw ConfigError("features: w must be >= 1");
    if (grid_n < 1 || !(cell_size > 0.0)) throw ConfigError("features: invalid grid");
    if (region_n != kRegionCount) throw ConfigError("features: region_n must be 16");
    if (cells_per_region < 1 || region_n * cells_per_region > grid_n)
        throw ConfigError("features: region window does not fit in the heightmap");
    if (!(z_max > 0.0) || !(b_max > 0.0) || !(sd_max > 0.0)) throw ConfigError("features: maxima must be positive");
}

double orientation_angle(int i, int w) { return kTwoPi * i / w; }

Heightmap rasterize_heightmap(const Scene& scene, double theta, const FeatureConfig& cfg) {
    Heightmap h;
    h.n = cfg.grid_n;
    h.cell_size = cfg.cell_size;
    h.theta = theta;
    h.cells.assign(static_cast<std::size_t>(h.n) * h.n, 0.0);

    const double c = std::cos(theta), s = std::sin(theta);
    const double half = 0.5 * (h.n - 1);
    const Vec2 origin = scene.target.center;
    const auto boxes = scene.all_boxes();

    for (const Box* b : boxes) {
        const double height = b->height();
        // Cells whose center can fall inside this box.
        const Vec2 rel = b->center - origin;
        const double lx = (c * rel.x() + s * rel.y()) / h.cell_size + half;
        const double ly = (-s * rel.x() + c * rel.y()) / h.cell_size + half;
        const double reach = b->circumradius() / h.cell_size + 1.0;
        const int c0 = std::max(0, static_cast<int>(std::floor(lx - reach)));
        const int c1 = std::min(h.n - 1, static_cast<int>(std::ceil(lx + reach)));
        const int r0 = std::max(0, static_cast<int>(std::floor(ly - reach)));
        const int r1 = std::min(h.n - 1, static_cast<int>(std::ceil(ly + reach)));
        for (int row = r0; row <= r1; ++row) {
            for (int col = c0; col <= c1; ++col) {
                const double qx = (col - half) * h.cell_size;
                const double qy = (row - half) * h.cell_size;
                const Vec2 world = origin + Vec2{c * qx - s * qy, s * qx + c * qy};
                const Vec2 l = b->to_local(world);
                if (std::abs(l.x()) <= b->half_extents.x() && std::abs(l.y()) <= b->half_extents.y()) {
                    double& cell = h.at(row, col);
                    cell = std::max(cell, height);
                }
            }
        }
    }
    return h;
}

std::array<double, kRegionFeatures> region_features(const Heightmap& h, const FeatureConfig& cfg) {
    const int cpr = cfg.cells_per_region;
    const int window = cfg.region_n * cpr;
    const int offset = (h.n - window) / 2;
    const double inv = 1.0 / (cpr * cpr);

    std::array<double, kRegionFeatures> z{};
    for (int rr = 0; rr < cfg.region_n; ++rr) {
        for (int rc = 0; rc < cfg.region_n; ++rc) {
            double sum = 0.0;
            for (int y = 0; y < cpr; ++y)
                for (int x = 0; x < cpr; ++x) sum += h.at(offset + rr * cpr + y, offset + rc * cpr + x);
            z[static_cast<std::size_t>(rr * cfg.region_n + rc)] = sum * inv;
        }
    }
    return z;
}

FeatureVector assemble_feature(std::span<const double, kRegionFeatures> z, const Scene& scene, double theta,
                               const SupportDistances& sd, const FeatureConfig& cfg) {
    auto unit = [](double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); };
    FeatureVector f{};
    for (int j = 0; j < kRegionFeatures; ++j) f[j] = unit(z[j] / cfg.z_max);
    std::size_t k = kRegionFeatures;
    f[k++] = unit(2.0 * scene.target.half_extents.x() / cfg.b_max);
    f[k++] = unit(2.0 * scene.target.half_extents.y() / cfg.b_max);
    f[k++] = unit(theta / kTwoPi);
    for (double d : sd.s_d) f[k++] = unit(d / cfg.sd_max);
    return f;
}

State build_state(const Scene& scene, const FeatureConfig& cfg) {
    const SupportDistances sd = support_distances(scene);
    State state;
    state.features.reserve(static_cast<std::size_t>(cfg.w));
    for (int i = 0; i < cfg.w; ++i) {
        const double theta = orientation_angle(i, cfg.w);
        const Heightmap h = rasterize_heightmap(scene, theta, cfg);
        const auto z = region_features(h, cfg);
        state.features.push_back(assemble_feature(z, scene, theta, sd, cfg));
    }
    return state;
}

void write_pgm(const Heightmap& h, std::ostream& os) {
    os << "P5\n" << h.n << ' ' << h.n << "\n65535\n";
    for (double v : h.cells) {
        const auto q = static_cast<std::uint16_t>(std::clamp(std::lround(v * 100.0), 0L, 65535L));
        const char bytes[2] = {static_cast<char>(q >> 8), static_cast<char>(q & 0xFF)};  // PGM is big-endian
        os.write(bytes, 2);
    }
}

void write_pgm(const Heightmap& h, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("features: cannot open " + path);
    write_pgm(h, os);
}

}  // namespace singulation
