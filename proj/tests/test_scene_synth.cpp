#include <cmath>
#include <map>

#include "doctest.h"
#include "rxpp/scene_synth.hpp"

using namespace rxpp;

namespace {
SynthConfig default_config() { return SynthConfig{}; }
}  // namespace

TEST_CASE("geometry_predicate rule table") {
    Box a{0.4, 0.4, 0.5, 0.5};
    Box big{0.1, 0.1, 0.9, 0.9};
    CHECK(geometry_predicate(a, big) == 0);  // inside
    // identical boxes: containment is strict, directional margins fail, IoU=1
    CHECK(geometry_predicate(a, a) == 5);  // overlaps
    // unit-distant tiny boxes at opposite corners: nothing fires
    Box c1{0.0, 0.0, 0.02, 0.02};
    Box c2{0.98, 0.98, 1.0, 1.0};
    CHECK(geometry_predicate(c1, c2) == -1);
    // vertical separation within proximity
    Box top{0.4, 0.1, 0.5, 0.2};
    Box bot{0.4, 0.3, 0.5, 0.4};
    CHECK(geometry_predicate(top, bot) == 1);   // above
    CHECK(geometry_predicate(bot, top) == 2);   // below
    Box left{0.1, 0.4, 0.2, 0.5};
    Box right{0.3, 0.4, 0.4, 0.5};
    CHECK(geometry_predicate(left, right) == 3);   // left_of
    CHECK(geometry_predicate(right, left) == 4);   // right_of
    // close but disjoint, aligned within the margin: near
    Box n1{0.40, 0.40, 0.43, 0.43};
    Box n2{0.44, 0.44, 0.47, 0.47};
    CHECK(geometry_predicate(n1, n2) == 6);
    CHECK_THROWS_AS(geometry_predicate(Box{0.5, 0.5, 0.5, 0.5}, a), std::invalid_argument);
}

TEST_CASE("generate_scene is deterministic") {
    SynthConfig cfg = default_config();
    SceneSpec a = generate_scene(42, cfg);
    SceneSpec b = generate_scene(42, cfg);
    REQUIRE(a.objects.size() == b.objects.size());
    for (size_t i = 0; i < a.objects.size(); ++i) {
        CHECK(a.objects[i].class_id == b.objects[i].class_id);
        CHECK(a.objects[i].box.x1 == b.objects[i].box.x1);
        CHECK(a.objects[i].box.y2 == b.objects[i].box.y2);
    }
    REQUIRE(a.relations.size() == b.relations.size());
    for (size_t i = 0; i < a.relations.size(); ++i) {
        CHECK(a.relations[i].subject == b.relations[i].subject);
        CHECK(a.relations[i].predicate == b.relations[i].predicate);
        CHECK(a.relations[i].object == b.relations[i].object);
    }
}

TEST_CASE("scene relations equal brute-force rule evaluation over all ordered pairs") {
    SynthConfig cfg = default_config();
    cfg.objects_min = 5;
    cfg.objects_max = 5;
    SceneSpec scene = generate_scene(7, cfg);
    REQUIRE(scene.objects.size() == 5);

    // independent oracle: evaluate the rule table pairwise
    std::vector<Relation> expected;
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) {
            if (i == j) continue;
            int p = geometry_predicate(scene.objects[i].box, scene.objects[j].box);
            if (p >= 0) expected.push_back({i, p, j});
        }
    }
    REQUIRE(scene.relations.size() == expected.size());
    for (size_t i = 0; i < expected.size(); ++i) {
        CHECK(scene.relations[i].subject == expected[i].subject);
        CHECK(scene.relations[i].predicate == expected[i].predicate);
        CHECK(scene.relations[i].object == expected[i].object);
    }
}

TEST_CASE("relation lists are closed under the rule table") {
    SynthConfig cfg = default_config();
    for (uint64_t seed = 0; seed < 50; ++seed) {
        SceneSpec scene = generate_scene(seed, cfg);
        std::map<std::pair<int, int>, int> seen;
        for (const Relation& r : scene.relations) {
            CHECK(r.subject != r.object);
            auto key = std::make_pair(r.subject, r.object);
            CHECK(seen.count(key) == 0);  // at most one relation per ordered pair
            seen[key] = r.predicate;
        }
        int n = static_cast<int>(scene.objects.size());
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (i == j) continue;
                int p = geometry_predicate(scene.objects[i].box, scene.objects[j].box);
                auto it = seen.find({i, j});
                if (p < 0) {
                    CHECK(it == seen.end());
                } else {
                    REQUIRE(it != seen.end());
                    CHECK(it->second == p);
                }
            }
        }
    }
}

TEST_CASE("class sampling follows rank^(-skew) within chi-square tolerance") {
    SynthConfig cfg = default_config();
    cfg.skew = 0.7;
    Rng rng(12345);
    const int n = 20000;
    std::vector<int> counts(cfg.num_object_classes, 0);
    for (int i = 0; i < n; ++i) ++counts[sample_class(rng, cfg)];

    double total_weight = 0.0;
    std::vector<double> expect(cfg.num_object_classes);
    for (int k = 0; k < cfg.num_object_classes; ++k) {
        expect[k] = std::pow(static_cast<double>(k + 1), -cfg.skew);
        total_weight += expect[k];
    }
    double chi2 = 0.0;
    for (int k = 0; k < cfg.num_object_classes; ++k) {
        double e = n * expect[k] / total_weight;
        chi2 += (counts[k] - e) * (counts[k] - e) / e;
    }
    // 11 dof, p=0.001 critical value is 31.26
    CHECK(chi2 < 31.26);
}

TEST_CASE("render_pyramid stamps class patterns and is deterministic") {
    SynthConfig cfg = default_config();
    cfg.noise_std = 0.0;
    cfg.objects_min = 1;
    cfg.objects_max = 1;

    SUBCASE("cells outside all boxes stay zero, zero-noise render is idempotent") {
        SceneSpec scene;
        scene.scene_id = 1;
        scene.image_width = cfg.image_width;
        scene.image_height = cfg.image_height;
        scene.objects.push_back({3, Box{0.1, 0.1, 0.3, 0.3}});
        FeaturePyramid pyr = render_pyramid(scene, cfg, 0);
        FeaturePyramid pyr2 = render_pyramid(scene, cfg, 0);
        const LevelGrid& p3 = pyr.level(Level::P3);
        // box covers rows/cols [1..4] on the 16x16 P3 grid; far cells are zero
        const double* far = p3.cell(12, 12);
        for (size_t ch = 0; ch < p3.channels; ++ch) CHECK(far[ch] == 0.0);
        for (Level l : kLevels)
            CHECK(pyr.level(l).data == pyr2.level(l).data);
    }

    SUBCASE("same class at two disjoint locations stamps identical vectors") {
        SceneSpec scene;
        scene.scene_id = 2;
        scene.image_width = cfg.image_width;
        scene.image_height = cfg.image_height;
        scene.objects.push_back({5, Box{0.05, 0.05, 0.2, 0.2}});
        scene.objects.push_back({5, Box{0.7, 0.7, 0.85, 0.85}});
        FeaturePyramid pyr = render_pyramid(scene, cfg, 0);
        auto a1 = snap_anchor(scene.objects[0].box, Level::P3, pyr);
        auto a2 = snap_anchor(scene.objects[1].box, Level::P3, pyr);
        const double* v1 = pyr.level(Level::P3).cell(a1.first, a1.second);
        const double* v2 = pyr.level(Level::P3).cell(a2.first, a2.second);
        for (size_t ch = 0; ch < pyr.level(Level::P3).channels; ++ch) CHECK(v1[ch] == v2[ch]);
    }

    SUBCASE("noisy render is bit-identical for fixed seeds") {
        cfg.noise_std = 0.1;
        SceneSpec scene = generate_scene(9, cfg);
        FeaturePyramid a = render_pyramid(scene, cfg, 77);
        FeaturePyramid b = render_pyramid(scene, cfg, 77);
        for (Level l : kLevels) CHECK(a.level(l).data == b.level(l).data);
    }
}

TEST_CASE("config validation rejects bad ranges") {
    SynthConfig cfg = default_config();
    cfg.objects_min = 5;
    cfg.objects_max = 3;
    CHECK_THROWS_AS(generate_scene(0, cfg), std::runtime_error);
    SynthConfig cfg2 = default_config();
    cfg2.num_predicate_classes = 5;
    CHECK_THROWS_AS(generate_scene(0, cfg2), std::runtime_error);
}

TEST_CASE("a two-object scene with strict containment carries the inside relation") {
    SynthConfig cfg;
    cfg.objects_min = 2;
    cfg.objects_max = 2;
    bool found = false;
    for (uint64_t seed = 0; seed < 40 && !found; ++seed) {
        SceneSpec scene = generate_scene(seed, cfg);
        if (!scene.objects[0].box.strictly_inside(scene.objects[1].box)) continue;
        found = true;
        bool has_inside = false;
        for (const Relation& r : scene.relations)
            has_inside = has_inside || (r.subject == 0 && r.predicate == 0 && r.object == 1);
        CHECK(has_inside);
    }
    CHECK(found);  // the class layout makes containment pairs common
}
