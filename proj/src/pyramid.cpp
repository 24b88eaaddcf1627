#include "rxpp/pyramid.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "rxpp/scene_synth.hpp"
#include "rxpp/util.hpp"

namespace rxpp {

std::pair<int, int> snap_anchor(const Box& box, Level level, const FeaturePyramid& pyramid) {
    require_valid_box(box, "snap_anchor");
    const LevelGrid& grid = pyramid.level(level);
    auto snap = [](double center, size_t extent) {
        auto n = static_cast<double>(extent);
        double idx = std::floor(center * n);
        return static_cast<int>(std::clamp(idx, 0.0, n - 1.0));
    };
    return {snap(box.cy(), grid.height), snap(box.cx(), grid.width)};
}

namespace {

Box jitter_box(const Box& b, double jitter, Rng& rng) {
    if (jitter <= 0.0) return b;
    double w = b.width(), h = b.height();
    Box out{b.x1 + rng.gaussian() * jitter * w, b.y1 + rng.gaussian() * jitter * h,
            b.x2 + rng.gaussian() * jitter * w, b.y2 + rng.gaussian() * jitter * h};
    out.x1 = std::clamp(out.x1, 0.0, 1.0);
    out.y1 = std::clamp(out.y1, 0.0, 1.0);
    out.x2 = std::clamp(out.x2, 0.0, 1.0);
    out.y2 = std::clamp(out.y2, 0.0, 1.0);
    if (out.x2 <= out.x1) out.x2 = std::min(1.0, out.x1 + 1e-3);
    if (out.y2 <= out.y1) out.y2 = std::min(1.0, out.y1 + 1e-3);
    return out;
}

// Largest third of boxes by area -> P5, middle -> P4, smallest -> P3.
void assign_levels(std::vector<Detection>& dets, const FeaturePyramid& pyramid) {
    size_t n = dets.size();
    if (n == 0) return;
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return dets[a].box.area() > dets[b].box.area();
    });
    size_t third = (n + 2) / 3;  // ceil(n/3)
    for (size_t rank = 0; rank < n; ++rank) {
        Level l = rank < third ? Level::P5 : (rank < 2 * third ? Level::P4 : Level::P3);
        Detection& d = dets[order[rank]];
        d.source_level = l;
        auto [r, c] = snap_anchor(d.box, l, pyramid);
        d.r = r;
        d.c = c;
    }
}

}  // namespace

std::vector<Detection> simulate_detections(const SceneSpec& scene, const FeaturePyramid& pyramid,
                                           double jitter, double fp_rate, uint64_t seed) {
    if (jitter < 0.0) throw std::invalid_argument("simulate_detections: jitter must be >= 0");
    if (fp_rate < 0.0 || fp_rate >= 1.0)
        throw std::invalid_argument("simulate_detections: fp_rate must be in [0,1)");
    Rng rng(mix64(seed, static_cast<uint64_t>(scene.scene_id), hash_str("det")));

    std::vector<Detection> dets;
    dets.reserve(scene.objects.size());
    for (const auto& obj : scene.objects) {
        Detection d;
        d.box = jitter_box(obj.box, jitter, rng);
        d.class_id = obj.class_id;
        d.confidence = rng.beta(8, 2);
        dets.push_back(d);
    }
    if (fp_rate > 0.0) {
        int num_classes = 1;
        for (const auto& o : scene.objects) num_classes = std::max(num_classes, o.class_id + 1);
        for (size_t i = 0; i < scene.objects.size(); ++i) {
            if (rng.uniform() >= fp_rate) continue;
            Detection d;
            double w = rng.uniform(0.05, 0.2);
            double h = rng.uniform(0.05, 0.2);
            double x1 = rng.uniform(0.0, 1.0 - w);
            double y1 = rng.uniform(0.0, 1.0 - h);
            d.box = Box{x1, y1, x1 + w, y1 + h};
            d.class_id = rng.uniform_int(0, num_classes - 1);
            d.confidence = rng.beta(2, 8);
            dets.push_back(d);
        }
    }
    assign_levels(dets, pyramid);
    return dets;
}

std::vector<Detection> rank_and_truncate(std::vector<Detection> detections, int k) {
    if (k < 0) throw std::invalid_argument("rank_and_truncate: k must be >= 0");
    std::stable_sort(detections.begin(), detections.end(), [](const Detection& a, const Detection& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        if (a.class_id != b.class_id) return a.class_id < b.class_id;
        if (a.r != b.r) return a.r < b.r;
        return a.c < b.c;
    });
    if (static_cast<size_t>(k) < detections.size()) detections.resize(static_cast<size_t>(k));
    return detections;
}

}  // namespace rxpp
