#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rxpp/geometry.hpp"
#include "rxpp/pyramid.hpp"
#include "rxpp/util.hpp"

namespace rxpp {

struct SceneObject {
    int class_id = 0;
    Box box;
};

struct Relation {
    int subject = 0;
    int predicate = 0;
    int object = 0;
};

struct SceneSpec {
    int64_t scene_id = 0;
    int image_width = 0;
    int image_height = 0;
    std::vector<SceneObject> objects;
    std::vector<Relation> relations;
};

struct SynthConfig {
    int num_object_classes = 12;
    int num_predicate_classes = 7;  // must equal the rule-table size
    int objects_min = 3;
    int objects_max = 5;
    double noise_std = 0.02;
    uint64_t pattern_seed = 7;
    double skew = 0.7;  // class frequency ~ rank^(-skew)
    int image_width = 128;
    int image_height = 128;
    int c_p3 = 32;
    int c_p4 = 48;
    int c_p5 = 64;

    void validate() const;
};

// The fixed 7-rule predicate table. Precedence:
// inside > above > below > left_of > right_of > overlaps > near.
constexpr int kPredicateCount = 7;
const std::vector<std::string>& predicate_names();

// Predicate id for an ordered (subject, object) box pair, or -1 when no rule
// fires. Directional rules and "near" only apply within center distance 0.25;
// directional rules need a 0.05 center margin on their axis; "overlaps" needs
// IoU >= 0.1; "inside" is strict containment of subject in object.
int geometry_predicate(const Box& box_s, const Box& box_o);

// Zipf-style class draw: P(class k) ~ (k+1)^(-skew).
int sample_class(Rng& rng, const SynthConfig& config);

// Deterministic home placement per class. Classes occupy fixed roles
// (container, near-pair, stacked pair, side pair, cross-overlap pair,
// hashed scatter) so that every predicate of the rule table occurs with a
// stable, feature-predictable label.
struct ClassPlacement {
    double cx, cy, w, h;
};
ClassPlacement class_placement(int class_id, const SynthConfig& config);

SceneSpec generate_scene(uint64_t seed, const SynthConfig& config);

// Stamps each object's class pattern (additively) into the cells its box
// covers on all three levels, then adds seeded i.i.d. Gaussian noise.
FeaturePyramid render_pyramid(const SceneSpec& scene, const SynthConfig& config, uint64_t seed);

// The class pattern stamped for (class_id, level); fixed by pattern_seed.
std::vector<double> class_pattern(int class_id, Level level, const SynthConfig& config);

}  // namespace rxpp
