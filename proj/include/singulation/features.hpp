#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "singulation/scene.hpp"

namespace singulation {

inline constexpr int kRegionCount = 16;
inline constexpr int kRegionFeatures = kRegionCount * kRegionCount;  // 256
inline constexpr int kFeatureLength = kRegionFeatures + 2 + 1 + 4;   // 263

struct FeatureConfig {
    int w = 8;
    int grid_n = 100;
    double cell_size = 0.5;
    int region_n = kRegionCount;
    int cells_per_region = 4;
    double z_max = 2.0;
    double b_max = 3.0;
    double sd_max = 50.0;

    void validate() const;
};

/// Top-down heightmap in the target frame rotated by `theta`. Row r, column c
/// samples local point ((c - (n-1)/2) * cell, (r - (n-1)/2) * cell).
struct Heightmap {
    int n = 0;
    double cell_size = 0.0;
    double theta = 0.0;
    std::vector<double> cells;  // row-major, n*n

    double at(int row, int col) const { return cells[static_cast<std::size_t>(row) * n + col]; }
    double& at(int row, int col) { return cells[static_cast<std::size_t>(row) * n + col]; }
};

/// f_i = [z (256), b1, b2, theta, s_d (4)], all rescaled into [0, 1].
using FeatureVector = std::array<float, kFeatureLength>;

struct State {
    std::vector<FeatureVector> features;

    int w() const { return static_cast<int>(features.size()); }
    bool operator==(const State&) const = default;
};

Heightmap rasterize_heightmap(const Scene& scene, double theta, const FeatureConfig& cfg);

std::array<double, kRegionFeatures> region_features(const Heightmap& h, const FeatureConfig& cfg);

FeatureVector assemble_feature(std::span<const double, kRegionFeatures> z, const Scene& scene, double theta,
                               const SupportDistances& sd, const FeatureConfig& cfg);

double orientation_angle(int i, int w);

State build_state(const Scene& scene, const FeatureConfig& cfg);

/// 16-bit binary PGM, heights in 0.01 cm units.
void write_pgm(const Heightmap& h, std::ostream& os);
void write_pgm(const Heightmap& h, const std::string& path);

}  // namespace singulation
