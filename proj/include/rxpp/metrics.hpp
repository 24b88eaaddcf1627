#pragma once

#include <set>
#include <string>
#include <vector>

#include "rxpp/graph_engine.hpp"
#include "rxpp/scene_synth.hpp"

namespace rxpp {

struct SceneGraphPrediction {
    std::vector<Detection> detections;
    std::vector<RelationCandidate> candidates;  // ranked by theta_rel descending
};

struct MetricReport {
    std::vector<int> k_values;  // e.g. {20, 50, 100}
    std::vector<double> recall;       // per K, in [0, 100]
    std::vector<double> mean_recall;  // per K
    std::vector<double> f1;           // per K
    // per-predicate recall at each K: [k_index][predicate]; -1 when the
    // predicate has no ground-truth instances
    std::vector<std::vector<double>> per_predicate_recall;
    long long num_gt_triplets = 0;
    double f1_mean_of_f1s = 0.0;   // mean of the per-K F1 values
    double f1_of_mean_r_mr = 0.0;  // F1 of the per-K-averaged R and mR
};

// Greedy rank-order one-to-one matching of the top-K candidates against the
// scene's ground-truth triplets (class match + IoU >= threshold on both
// endpoints, equal predicate). Returns matched ground-truth triplet indices.
std::set<int> match_triplets(const SceneGraphPrediction& pred, const SceneSpec& gt,
                             double iou_thresh, int top_k);

// Micro-averaged triplet recall over scenes, in [0, 100].
double recall_at_k(const std::vector<std::set<int>>& matches_per_scene,
                   const std::vector<const SceneSpec*>& gt_per_scene);

// Macro recall over predicate classes present in the ground truth.
double mean_recall_at_k(const std::vector<std::set<int>>& matches_per_scene,
                        const std::vector<const SceneSpec*>& gt_per_scene, int num_predicates,
                        std::vector<double>* per_class = nullptr);

// Harmonic mean; defined as 0 when both inputs are 0.
double f1_at_k(double recall, double mean_recall);

MetricReport evaluate_scene_graphs(const std::vector<SceneGraphPrediction>& predictions,
                                   const std::vector<const SceneSpec*>& ground_truth,
                                   const std::vector<int>& k_values, double iou_thresh,
                                   int num_predicates);

std::string metric_report_to_csv(const MetricReport& report);
std::string metric_report_to_text(const MetricReport& report);

}  // namespace rxpp
