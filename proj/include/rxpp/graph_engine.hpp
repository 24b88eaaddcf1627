#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rxpp/pyramid.hpp"

namespace rxpp {

// One scored ordered (subject, object) candidate.
struct RelationCandidate {
    int subject_index = 0;
    int object_index = 0;
    std::vector<double> predicate_logits;
    std::vector<double> predicate_probs;
    int top_predicate = 0;
    double theta_subj = 0.0;
    double theta_obj = 0.0;
    double theta_pred = 0.0;
    double theta_rel = 0.0;  // theta_subj * theta_pred * theta_obj
};

struct DcsResult {
    std::vector<int> k_grid;
    std::vector<double> f;        // metric value per grid point
    std::vector<double> f_prime;  // estimated slope per grid point
    double epsilon = 0.0;
    int x_opt = 0;
    bool saturation_reached = true;  // false when no grid point qualified
};

// All ordered pairs (i, j), i != j, lexicographic. Length n*(n-1).
std::vector<std::pair<int, int>> enumerate_pairs(int n);

// Fills theta_pred (max softmax probability), theta_rel, top predicate, then
// stable-sorts by theta_rel descending (ties: subject, object, predicate
// ascending) and keeps the top K. When expand_all_predicates is set, every
// predicate of a pair becomes its own ranked candidate.
std::vector<RelationCandidate> score_and_rank(std::vector<RelationCandidate> candidates, int top_k,
                                              bool expand_all_predicates = false);

// Sweeps the metric over a uniform k grid, takes slopes by central
// differences (one-sided at the ends, optional 3-point pre-smoothing), and
// picks the first grid point whose |slope| drops below epsilon. Evaluations
// may run in parallel; results reduce in grid order.
DcsResult dcs_sweep(const std::function<double(int)>& evaluate, const std::vector<int>& k_grid,
                    double epsilon, bool smooth = false);

// rank_and_truncate at the chosen budget.
std::vector<Detection> apply_dcs(std::vector<Detection> detections, int x_opt);

// CSV with "# x_opt=..." header comment and k,f,f_prime rows.
std::string dcs_to_csv(const DcsResult& result);

}  // namespace rxpp
