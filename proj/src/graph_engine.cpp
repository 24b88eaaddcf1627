#include "rxpp/graph_engine.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "rxpp/util.hpp"

namespace rxpp {

std::vector<std::pair<int, int>> enumerate_pairs(int n) {
    if (n < 0) throw std::invalid_argument("enumerate_pairs: n must be >= 0");
    std::vector<std::pair<int, int>> pairs;
    pairs.reserve(n > 1 ? static_cast<size_t>(n) * (n - 1) : 0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) pairs.emplace_back(i, j);
    return pairs;
}

namespace {

std::vector<double> softmax_probs(const std::vector<double>& logits) {
    double mx = logits.empty() ? 0.0 : *std::max_element(logits.begin(), logits.end());
    std::vector<double> probs(logits.size());
    double z = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] - mx);
        z += probs[i];
    }
    for (double& p : probs) p /= z;
    return probs;
}

}  // namespace

std::vector<RelationCandidate> score_and_rank(std::vector<RelationCandidate> candidates, int top_k,
                                              bool expand_all_predicates) {
    if (top_k < 0) throw std::invalid_argument("score_and_rank: K must be >= 0");
    std::vector<RelationCandidate> scored;
    for (auto& cand : candidates) {
        if (cand.predicate_logits.empty())
            throw std::invalid_argument("score_and_rank: candidate without logits");
        cand.predicate_probs = softmax_probs(cand.predicate_logits);
        if (expand_all_predicates) {
            for (size_t p = 0; p < cand.predicate_probs.size(); ++p) {
                RelationCandidate c = cand;
                c.top_predicate = static_cast<int>(p);
                c.theta_pred = cand.predicate_probs[p];
                c.theta_rel = c.theta_subj * c.theta_pred * c.theta_obj;
                scored.push_back(std::move(c));
            }
        } else {
            size_t best = 0;
            for (size_t p = 1; p < cand.predicate_probs.size(); ++p)
                if (cand.predicate_probs[p] > cand.predicate_probs[best]) best = p;
            cand.top_predicate = static_cast<int>(best);
            cand.theta_pred = cand.predicate_probs[best];
            cand.theta_rel = cand.theta_subj * cand.theta_pred * cand.theta_obj;
            scored.push_back(std::move(cand));
        }
    }
    std::stable_sort(scored.begin(), scored.end(), [](const RelationCandidate& a, const RelationCandidate& b) {
        if (a.theta_rel != b.theta_rel) return a.theta_rel > b.theta_rel;
        if (a.subject_index != b.subject_index) return a.subject_index < b.subject_index;
        if (a.object_index != b.object_index) return a.object_index < b.object_index;
        return a.top_predicate < b.top_predicate;
    });
    if (static_cast<size_t>(top_k) < scored.size()) scored.resize(static_cast<size_t>(top_k));
    return scored;
}

DcsResult dcs_sweep(const std::function<double(int)>& evaluate, const std::vector<int>& k_grid,
                    double epsilon, bool smooth) {
    if (k_grid.size() < 3) throw std::invalid_argument("dcs_sweep: grid needs at least 3 points");
    if (epsilon <= 0.0) throw std::invalid_argument("dcs_sweep: epsilon must be positive");
    int stride = k_grid[1] - k_grid[0];
    if (stride <= 0) throw std::invalid_argument("dcs_sweep: grid must be strictly increasing");
    for (size_t i = 1; i < k_grid.size(); ++i)
        if (k_grid[i] - k_grid[i - 1] != stride)
            throw std::invalid_argument("dcs_sweep: grid stride must be uniform");

    DcsResult res;
    res.k_grid = k_grid;
    res.epsilon = epsilon;
    res.f.assign(k_grid.size(), 0.0);
    parallel_for(k_grid.size(), [&](size_t i) { res.f[i] = evaluate(k_grid[i]); });

    std::vector<double> f = res.f;
    if (smooth) {
        for (size_t i = 1; i + 1 < f.size(); ++i)
            f[i] = (res.f[i - 1] + res.f[i] + res.f[i + 1]) / 3.0;
    }

    size_t n = f.size();
    res.f_prime.assign(n, 0.0);
    double h = static_cast<double>(stride);
    res.f_prime[0] = (f[1] - f[0]) / h;
    res.f_prime[n - 1] = (f[n - 1] - f[n - 2]) / h;
    for (size_t i = 1; i + 1 < n; ++i) res.f_prime[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);

    res.saturation_reached = false;
    res.x_opt = k_grid.back();
    for (size_t i = 0; i < n; ++i) {
        if (std::fabs(res.f_prime[i]) < epsilon) {
            res.x_opt = k_grid[i];
            res.saturation_reached = true;
            break;
        }
    }
    return res;
}

std::vector<Detection> apply_dcs(std::vector<Detection> detections, int x_opt) {
    if (x_opt < 0) throw std::invalid_argument("apply_dcs: x_opt must be >= 0");
    return rank_and_truncate(std::move(detections), x_opt);
}

std::string dcs_to_csv(const DcsResult& result) {
    std::ostringstream out;
    out << "# x_opt=" << result.x_opt << " epsilon=" << format_double(result.epsilon)
        << " saturation_reached=" << (result.saturation_reached ? 1 : 0) << "\n";
    out << "k,f,f_prime\n";
    for (size_t i = 0; i < result.k_grid.size(); ++i) {
        out << result.k_grid[i] << "," << format_double(result.f[i]) << ","
            << format_double(result.f_prime[i]) << "\n";
    }
    return out.str();
}

}  // namespace rxpp
