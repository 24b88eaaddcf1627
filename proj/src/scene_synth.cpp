#include "rxpp/scene_synth.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rxpp {

void SynthConfig::validate() const {
    if (num_predicate_classes != kPredicateCount)
        throw std::runtime_error("SynthConfig: num_predicate_classes must equal the rule-table size (7)");
    if (objects_min > objects_max || objects_min < 1)
        throw std::runtime_error("SynthConfig: empty objects_per_scene range");
    if (num_object_classes < 1) throw std::runtime_error("SynthConfig: need at least one object class");
    if (skew < 0.0) throw std::runtime_error("SynthConfig: skew must be >= 0");
    if (noise_std < 0.0) throw std::runtime_error("SynthConfig: noise_std must be >= 0");
    if (image_width < 32 || image_height < 32)
        throw std::runtime_error("SynthConfig: image must be at least 32x32");
    if (c_p3 < 1 || c_p4 < 1 || c_p5 < 1) throw std::runtime_error("SynthConfig: channels must be positive");
}

const std::vector<std::string>& predicate_names() {
    static const std::vector<std::string> names = {"inside",   "above",    "below", "left_of",
                                                   "right_of", "overlaps", "near"};
    return names;
}

namespace {
constexpr double kDirectionalMargin = 0.05;
constexpr double kProximity = 0.25;
constexpr double kOverlapIou = 0.1;
}  // namespace

int geometry_predicate(const Box& box_s, const Box& box_o) {
    require_valid_box(box_s, "geometry_predicate");
    require_valid_box(box_o, "geometry_predicate");
    if (box_s.strictly_inside(box_o)) return 0;  // inside
    double dist = center_distance(box_s, box_o);
    double dy = box_s.cy() - box_o.cy();
    double dx = box_s.cx() - box_o.cx();
    if (dist < kProximity) {
        if (dy < -kDirectionalMargin) return 1;  // above
        if (dy > kDirectionalMargin) return 2;   // below
        if (dx < -kDirectionalMargin) return 3;  // left_of
        if (dx > kDirectionalMargin) return 4;   // right_of
    }
    if (iou(box_s, box_o) >= kOverlapIou) return 5;  // overlaps
    if (dist < kProximity) return 6;                 // near
    return -1;
}

int sample_class(Rng& rng, const SynthConfig& config) {
    int k = config.num_object_classes;
    double total = 0.0;
    for (int i = 0; i < k; ++i) total += std::pow(static_cast<double>(i + 1), -config.skew);
    double u = rng.uniform() * total;
    double acc = 0.0;
    for (int i = 0; i < k; ++i) {
        acc += std::pow(static_cast<double>(i + 1), -config.skew);
        if (u < acc) return i;
    }
    return k - 1;
}

ClassPlacement class_placement(int class_id, const SynthConfig& config) {
    switch (class_id) {
        case 0: return {0.50, 0.50, 0.78, 0.78};   // container: most classes sit inside it
        case 1: return {0.140, 0.160, 0.03, 0.03}; // near pair, disjoint but close
        case 2: return {0.175, 0.195, 0.03, 0.03};
        case 3: return {0.76, 0.28, 0.10, 0.10};   // vertical pair: above / below
        case 4: return {0.76, 0.60, 0.10, 0.10};
        case 5: return {0.24, 0.76, 0.10, 0.10};   // horizontal pair: left_of / right_of
        case 6: return {0.55, 0.76, 0.10, 0.10};
        case 7: return {0.41, 0.37, 0.18, 0.10};   // cross-overlap pair (wide x tall)
        case 8: return {0.43, 0.39, 0.10, 0.18};
        default: {
            Rng rng(mix64(config.pattern_seed, hash_str("placement"), static_cast<uint64_t>(class_id)));
            double cx = rng.uniform(0.15, 0.85);
            double cy = rng.uniform(0.15, 0.85);
            double w = rng.uniform(0.07, 0.16);
            double h = rng.uniform(0.07, 0.16);
            return {cx, cy, w, h};
        }
    }
}

namespace {

Box instance_box(int class_id, const SynthConfig& config, Rng& rng) {
    ClassPlacement p = class_placement(class_id, config);
    double cx = p.cx + rng.uniform(-0.006, 0.006);
    double cy = p.cy + rng.uniform(-0.006, 0.006);
    double w = p.w * rng.uniform(0.97, 1.03);
    double h = p.h * rng.uniform(0.97, 1.03);
    Box b{cx - 0.5 * w, cy - 0.5 * h, cx + 0.5 * w, cy + 0.5 * h};
    b.x1 = std::clamp(b.x1, 0.0, 1.0);
    b.y1 = std::clamp(b.y1, 0.0, 1.0);
    b.x2 = std::clamp(b.x2, b.x1 + 1e-4, 1.0);
    b.y2 = std::clamp(b.y2, b.y1 + 1e-4, 1.0);
    return b;
}

}  // namespace

SceneSpec generate_scene(uint64_t seed, const SynthConfig& config) {
    config.validate();
    SceneSpec scene;
    scene.scene_id = static_cast<int64_t>(seed);
    scene.image_width = config.image_width;
    scene.image_height = config.image_height;

    Rng rng(mix64(seed, hash_str("scene")));
    int want = rng.uniform_int(config.objects_min, config.objects_max);
    want = std::min(want, config.num_object_classes);  // distinct classes per scene

    std::vector<int> classes;
    while (static_cast<int>(classes.size()) < want) {
        int k = sample_class(rng, config);
        if (std::find(classes.begin(), classes.end(), k) == classes.end()) classes.push_back(k);
    }
    for (int k : classes) scene.objects.push_back({k, instance_box(k, config, rng)});

    int n = static_cast<int>(scene.objects.size());
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            int p = geometry_predicate(scene.objects[i].box, scene.objects[j].box);
            if (p >= 0) scene.relations.push_back({i, p, j});
        }
    }
    return scene;
}

std::vector<double> class_pattern(int class_id, Level level, const SynthConfig& config) {
    const int cs[3] = {config.c_p3, config.c_p4, config.c_p5};
    size_t channels = static_cast<size_t>(cs[static_cast<int>(level)]);
    std::vector<double> pat(channels);
    Rng rng(mix64(config.pattern_seed, static_cast<uint64_t>(class_id),
                  static_cast<uint64_t>(static_cast<int>(level)) + 101));
    for (double& d : pat) d = rng.gaussian();
    return pat;
}

FeaturePyramid render_pyramid(const SceneSpec& scene, const SynthConfig& config, uint64_t seed) {
    for (const auto& o : scene.objects) require_valid_box(o.box, "render_pyramid");
    FeaturePyramid pyr = FeaturePyramid::make(scene.image_width, scene.image_height,
                                              static_cast<size_t>(config.c_p3),
                                              static_cast<size_t>(config.c_p4),
                                              static_cast<size_t>(config.c_p5));
    for (Level l : kLevels) {
        LevelGrid& grid = pyr.level(l);
        for (const auto& obj : scene.objects) {
            std::vector<double> pat = class_pattern(obj.class_id, l, config);
            auto h = static_cast<double>(grid.height);
            auto w = static_cast<double>(grid.width);
            size_t r0 = static_cast<size_t>(std::clamp(std::floor(obj.box.y1 * h), 0.0, h - 1));
            size_t r1 = static_cast<size_t>(std::clamp(std::ceil(obj.box.y2 * h) - 1, 0.0, h - 1));
            size_t c0 = static_cast<size_t>(std::clamp(std::floor(obj.box.x1 * w), 0.0, w - 1));
            size_t c1 = static_cast<size_t>(std::clamp(std::ceil(obj.box.x2 * w) - 1, 0.0, w - 1));
            for (size_t r = r0; r <= r1; ++r) {
                for (size_t c = c0; c <= c1; ++c) {
                    double* cell = grid.cell(r, c);
                    for (size_t ch = 0; ch < grid.channels; ++ch) cell[ch] += pat[ch];
                }
            }
        }
        if (config.noise_std > 0.0) {
            Rng noise(mix64(seed, static_cast<uint64_t>(scene.scene_id),
                            static_cast<uint64_t>(static_cast<int>(l)) + 577));
            for (double& d : grid.data) d += noise.gaussian() * config.noise_std;
        }
    }
    return pyr;
}

}  // namespace rxpp
