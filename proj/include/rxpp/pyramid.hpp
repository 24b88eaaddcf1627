#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "rxpp/geometry.hpp"

namespace rxpp {

struct SceneSpec;  // scene_synth.hpp

enum class Level : int { P3 = 0, P4 = 1, P5 = 2 };

constexpr std::array<Level, 3> kLevels = {Level::P3, Level::P4, Level::P5};

constexpr int level_stride(Level l) {
    switch (l) {
        case Level::P3: return 8;
        case Level::P4: return 16;
        default: return 32;
    }
}

inline const char* level_name(Level l) {
    switch (l) {
        case Level::P3: return "P3";
        case Level::P4: return "P4";
        default: return "P5";
    }
}

// One pyramid level: fully populated H*W grid of C-dim feature vectors.
struct LevelGrid {
    size_t channels = 0;
    size_t height = 0;
    size_t width = 0;
    std::vector<double> data;  // ((r * width) + c) * channels + ch

    void resize(size_t c, size_t h, size_t w) {
        channels = c;
        height = h;
        width = w;
        data.assign(c * h * w, 0.0);
    }
    double* cell(size_t r, size_t c) { return &data[(r * width + c) * channels]; }
    const double* cell(size_t r, size_t c) const { return &data[(r * width + c) * channels]; }
};

struct FeaturePyramid {
    std::array<LevelGrid, 3> levels;  // indexed by Level
    int image_width = 0;
    int image_height = 0;

    LevelGrid& level(Level l) { return levels[static_cast<int>(l)]; }
    const LevelGrid& level(Level l) const { return levels[static_cast<int>(l)]; }

    static FeaturePyramid make(int image_w, int image_h, size_t c3, size_t c4, size_t c5) {
        FeaturePyramid p;
        p.image_width = image_w;
        p.image_height = image_h;
        const size_t cs[3] = {c3, c4, c5};
        for (Level l : kLevels) {
            int s = level_stride(l);
            size_t h = static_cast<size_t>((image_h + s - 1) / s);
            size_t w = static_cast<size_t>((image_w + s - 1) / s);
            p.level(l).resize(cs[static_cast<int>(l)], h, w);
        }
        return p;
    }
};

// One frozen-detector output, anchored to the grid cell that produced it.
struct Detection {
    Box box;
    int class_id = 0;
    double confidence = 0.0;
    Level source_level = Level::P3;
    int r = 0;
    int c = 0;
};

// Box center snapped to a level's grid, clamped to bounds.
std::pair<int, int> snap_anchor(const Box& box, Level level, const FeaturePyramid& pyramid);

// Frozen-detector stand-in: one jittered detection per ground-truth object
// plus Beta(2,8)-confidence distractors at the given rate.
std::vector<Detection> simulate_detections(const SceneSpec& scene, const FeaturePyramid& pyramid,
                                           double jitter, double fp_rate, uint64_t seed);

// Stable confidence-descending sort (ties: class_id, r, c ascending), top k.
std::vector<Detection> rank_and_truncate(std::vector<Detection> detections, int k);

}  // namespace rxpp
