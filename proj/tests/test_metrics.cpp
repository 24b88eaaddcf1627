#include "doctest.h"
#include "rxpp/metrics.hpp"

using namespace rxpp;

namespace {

// Ground truth with three objects and three triplets; predictions mirror the
// boxes exactly so matching is controlled by predicates and rank.
SceneSpec fixture_scene() {
    SceneSpec s;
    s.scene_id = 1;
    s.image_width = s.image_height = 128;
    s.objects.push_back({0, Box{0.1, 0.1, 0.3, 0.3}});
    s.objects.push_back({1, Box{0.1, 0.5, 0.3, 0.7}});
    s.objects.push_back({2, Box{0.6, 0.1, 0.8, 0.3}});
    s.relations.push_back({0, 1, 1});
    s.relations.push_back({1, 2, 0});
    s.relations.push_back({0, 3, 2});
    return s;
}

SceneGraphPrediction prediction_for(const SceneSpec& gt, const std::vector<Relation>& predicted) {
    SceneGraphPrediction p;
    for (const auto& o : gt.objects) {
        Detection d;
        d.box = o.box;
        d.class_id = o.class_id;
        d.confidence = 0.9;
        p.detections.push_back(d);
    }
    double score = 1.0;
    for (const auto& r : predicted) {
        RelationCandidate c;
        c.subject_index = r.subject;
        c.object_index = r.object;
        c.top_predicate = r.predicate;
        c.theta_rel = score;
        score -= 0.05;
        p.candidates.push_back(c);
    }
    return p;
}

}  // namespace

TEST_CASE("match_triplets on the hand-built fixture") {
    SceneSpec gt = fixture_scene();

    SUBCASE("perfect predictions match everything") {
        auto pred = prediction_for(gt, gt.relations);
        auto matched = match_triplets(pred, gt, 0.5, 100);
        CHECK(matched.size() == 3);
    }
    SUBCASE("K = 0 matches nothing") {
        auto pred = prediction_for(gt, gt.relations);
        CHECK(match_triplets(pred, gt, 0.5, 0).empty());
    }
    SUBCASE("one wrong predicate gives exactly 2 matches") {
        std::vector<Relation> wrong = gt.relations;
        wrong[1].predicate = 5;  // oracle: exhaustive hand matching
        auto pred = prediction_for(gt, wrong);
        auto matched = match_triplets(pred, gt, 0.5, 100);
        CHECK(matched.size() == 2);
        CHECK(matched.count(0) == 1);
        CHECK(matched.count(2) == 1);
    }
    SUBCASE("each ground-truth triplet is matched at most once") {
        std::vector<Relation> doubled = {gt.relations[0], gt.relations[0], gt.relations[1],
                                         gt.relations[2]};
        auto pred = prediction_for(gt, doubled);
        auto matched = match_triplets(pred, gt, 0.5, 100);
        CHECK(matched.size() == 3);
    }
    SUBCASE("rank order controls which candidates are considered") {
        std::vector<Relation> rels = {{0, 6, 1}, gt.relations[0], gt.relations[1], gt.relations[2]};
        auto pred = prediction_for(gt, rels);
        CHECK(match_triplets(pred, gt, 0.5, 1).empty());   // only the wrong one
        CHECK(match_triplets(pred, gt, 0.5, 2).size() == 1);
        CHECK(match_triplets(pred, gt, 0.5, 4).size() == 3);
    }
}

TEST_CASE("recall and mean recall aggregation") {
    SUBCASE("all matched gives 100 for both") {
        SceneSpec gt = fixture_scene();
        auto pred = prediction_for(gt, gt.relations);
        std::vector<std::set<int>> matches = {match_triplets(pred, gt, 0.5, 100)};
        std::vector<const SceneSpec*> gts = {&gt};
        CHECK(recall_at_k(matches, gts) == doctest::Approx(100.0));
        CHECK(mean_recall_at_k(matches, gts, 7) == doctest::Approx(100.0));
    }

    SUBCASE("head class recalled, tail missed: equal counts give 50/50") {
        SceneSpec gt;
        gt.image_width = gt.image_height = 128;
        gt.objects.push_back({0, Box{0.1, 0.1, 0.3, 0.3}});
        gt.objects.push_back({1, Box{0.1, 0.5, 0.3, 0.7}});
        gt.relations.push_back({0, 1, 1});
        gt.relations.push_back({1, 2, 0});
        auto pred = prediction_for(gt, {{0, 1, 1}, {1, 5, 0}});  // second predicate wrong
        std::vector<std::set<int>> matches = {match_triplets(pred, gt, 0.5, 100)};
        std::vector<const SceneSpec*> gts = {&gt};
        CHECK(recall_at_k(matches, gts) == doctest::Approx(50.0));
        CHECK(mean_recall_at_k(matches, gts, 7) == doctest::Approx(50.0));
    }

    SUBCASE("skewed counts 90/10: micro recall 90, macro recall 50") {
        // 90 head-class triplets all recalled, 10 tail-class triplets missed,
        // spread over 10 scenes of 10 disjoint object pairs each
        std::vector<SceneSpec> scenes(10);
        std::vector<SceneGraphPrediction> preds(10);
        int tail_left = 10;
        for (int s = 0; s < 10; ++s) {
            SceneSpec& gt = scenes[s];
            gt.image_width = gt.image_height = 1000;
            std::vector<Relation> predicted;
            for (int i = 0; i < 10; ++i) {
                double y = 0.09 * i + 0.01;
                gt.objects.push_back({2 * i, Box{0.05, y, 0.08, y + 0.03}});
                gt.objects.push_back({2 * i + 1, Box{0.09, y, 0.12, y + 0.03}});
                bool tail = tail_left > 0 && i == 9;
                if (tail) --tail_left;
                gt.relations.push_back({2 * i, tail ? 6 : 3, 2 * i + 1});
                // predict head predicate for everything
                predicted.push_back({2 * i, 3, 2 * i + 1});
            }
            preds[s] = prediction_for(gt, predicted);
        }
        std::vector<std::set<int>> matches(10);
        std::vector<const SceneSpec*> gts;
        for (int s = 0; s < 10; ++s) {
            matches[s] = match_triplets(preds[s], scenes[s], 0.5, 100);
            gts.push_back(&scenes[s]);
        }
        CHECK(recall_at_k(matches, gts) == doctest::Approx(90.0));
        CHECK(mean_recall_at_k(matches, gts, 7) == doctest::Approx(50.0));
    }

    SUBCASE("zero ground truth is an error") {
        SceneSpec empty;
        std::vector<std::set<int>> matches = {{}};
        std::vector<const SceneSpec*> gts = {&empty};
        CHECK_THROWS_AS(recall_at_k(matches, gts), std::invalid_argument);
    }
}

TEST_CASE("f1_at_k identities and frozen reference arithmetic") {
    CHECK(f1_at_k(37.0, 37.0) == doctest::Approx(37.0));
    CHECK(f1_at_k(0.0, 0.0) == 0.0);
    // frozen reference pair: harmonic mean of 33.6 and 24.73 rounds to 28.4
    double f1 = f1_at_k(33.6, 24.73);
    CHECK(std::fabs(f1 - 28.4) < 0.15);
    // harmonic mean stays between its arguments
    for (auto [r, mr] : {std::pair<double, double>{80, 20}, {55, 54}, {5, 95}}) {
        double v = f1_at_k(r, mr);
        CHECK(v >= std::min(r, mr));
        CHECK(v <= std::max(r, mr));
    }
}

TEST_CASE("report metrics are non-decreasing in K") {
    SceneSpec gt = fixture_scene();
    // one wrong candidate ranked first, then the correct three
    std::vector<Relation> rels = {{0, 6, 1}, gt.relations[0], gt.relations[1], gt.relations[2]};
    auto pred = prediction_for(gt, rels);
    std::vector<const SceneSpec*> gts = {&gt};
    MetricReport rep = evaluate_scene_graphs({pred}, gts, {1, 2, 4}, 0.5, 7);
    for (size_t i = 1; i < rep.recall.size(); ++i) {
        CHECK(rep.recall[i] >= rep.recall[i - 1]);
        CHECK(rep.mean_recall[i] >= rep.mean_recall[i - 1]);
    }
    CHECK(rep.num_gt_triplets == 3);
    // both F1 aggregation variants are emitted and bounded
    CHECK(rep.f1_mean_of_f1s >= 0.0);
    CHECK(rep.f1_of_mean_r_mr >= 0.0);
    std::string csv = metric_report_to_csv(rep);
    CHECK(csv.find("f1_mean_of_f1s") != std::string::npos);
    CHECK(csv.find("f1_of_mean_r_mr") != std::string::npos);
}
