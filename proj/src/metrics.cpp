#include "rxpp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "rxpp/util.hpp"

namespace rxpp {

std::set<int> match_triplets(const SceneGraphPrediction& pred, const SceneSpec& gt,
                             double iou_thresh, int top_k) {
    if (iou_thresh <= 0.0 || iou_thresh > 1.0)
        throw std::invalid_argument("match_triplets: iou_thresh must be in (0,1]");
    if (top_k < 0) throw std::invalid_argument("match_triplets: K must be >= 0");

    std::set<int> matched;
    std::vector<char> taken(gt.relations.size(), 0);
    size_t limit = std::min<size_t>(static_cast<size_t>(top_k), pred.candidates.size());
    for (size_t ci = 0; ci < limit; ++ci) {
        const RelationCandidate& cand = pred.candidates[ci];
        const Detection& sub = pred.detections[cand.subject_index];
        const Detection& obj = pred.detections[cand.object_index];
        for (size_t gi = 0; gi < gt.relations.size(); ++gi) {
            if (taken[gi]) continue;
            const Relation& rel = gt.relations[gi];
            if (rel.predicate != cand.top_predicate) continue;
            const SceneObject& gsub = gt.objects[rel.subject];
            const SceneObject& gobj = gt.objects[rel.object];
            if (gsub.class_id != sub.class_id || gobj.class_id != obj.class_id) continue;
            if (iou(gsub.box, sub.box) < iou_thresh || iou(gobj.box, obj.box) < iou_thresh) continue;
            taken[gi] = 1;
            matched.insert(static_cast<int>(gi));
            break;
        }
    }
    return matched;
}

double recall_at_k(const std::vector<std::set<int>>& matches_per_scene,
                   const std::vector<const SceneSpec*>& gt_per_scene) {
    if (matches_per_scene.size() != gt_per_scene.size())
        throw std::invalid_argument("recall_at_k: scene count mismatch");
    long long matched = 0, total = 0;
    for (size_t i = 0; i < gt_per_scene.size(); ++i) {
        matched += static_cast<long long>(matches_per_scene[i].size());
        total += static_cast<long long>(gt_per_scene[i]->relations.size());
    }
    if (total == 0) throw std::invalid_argument("recall_at_k: zero ground-truth triplets");
    return 100.0 * static_cast<double>(matched) / static_cast<double>(total);
}

double mean_recall_at_k(const std::vector<std::set<int>>& matches_per_scene,
                        const std::vector<const SceneSpec*>& gt_per_scene, int num_predicates,
                        std::vector<double>* per_class) {
    if (matches_per_scene.size() != gt_per_scene.size())
        throw std::invalid_argument("mean_recall_at_k: scene count mismatch");
    std::vector<long long> matched(num_predicates, 0), total(num_predicates, 0);
    for (size_t i = 0; i < gt_per_scene.size(); ++i) {
        const SceneSpec& gt = *gt_per_scene[i];
        for (size_t gi = 0; gi < gt.relations.size(); ++gi) {
            int p = gt.relations[gi].predicate;
            ++total[p];
            if (matches_per_scene[i].count(static_cast<int>(gi))) ++matched[p];
        }
    }
    if (per_class != nullptr) per_class->assign(num_predicates, -1.0);
    double sum = 0.0;
    int present = 0;
    for (int p = 0; p < num_predicates; ++p) {
        if (total[p] == 0) continue;  // absent classes excluded
        double r = 100.0 * static_cast<double>(matched[p]) / static_cast<double>(total[p]);
        if (per_class != nullptr) (*per_class)[p] = r;
        sum += r;
        ++present;
    }
    if (present == 0) throw std::invalid_argument("mean_recall_at_k: zero ground-truth triplets");
    return sum / present;
}

double f1_at_k(double recall, double mean_recall) {
    if (recall < 0.0 || mean_recall < 0.0) throw std::invalid_argument("f1_at_k: negative input");
    if (recall == 0.0 && mean_recall == 0.0) return 0.0;
    return 2.0 * recall * mean_recall / (recall + mean_recall);
}

MetricReport evaluate_scene_graphs(const std::vector<SceneGraphPrediction>& predictions,
                                   const std::vector<const SceneSpec*>& ground_truth,
                                   const std::vector<int>& k_values, double iou_thresh,
                                   int num_predicates) {
    if (predictions.size() != ground_truth.size())
        throw std::invalid_argument("evaluate_scene_graphs: scene count mismatch");
    MetricReport report;
    report.k_values = k_values;
    for (const SceneSpec* gt : ground_truth)
        report.num_gt_triplets += static_cast<long long>(gt->relations.size());

    double r_sum = 0.0, mr_sum = 0.0;
    for (int k : k_values) {
        std::vector<std::set<int>> matches(predictions.size());
        parallel_for(predictions.size(), [&](size_t i) {
            matches[i] = match_triplets(predictions[i], *ground_truth[i], iou_thresh, k);
        });
        double r = recall_at_k(matches, ground_truth);
        std::vector<double> per_class;
        double mr = mean_recall_at_k(matches, ground_truth, num_predicates, &per_class);
        report.recall.push_back(r);
        report.mean_recall.push_back(mr);
        report.f1.push_back(f1_at_k(r, mr));
        report.per_predicate_recall.push_back(std::move(per_class));
        r_sum += r;
        mr_sum += mr;
    }
    double nk = static_cast<double>(k_values.size());
    for (double f : report.f1) report.f1_mean_of_f1s += f / nk;
    report.f1_of_mean_r_mr = f1_at_k(r_sum / nk, mr_sum / nk);
    return report;
}

std::string metric_report_to_csv(const MetricReport& report) {
    std::ostringstream out;
    out << "metric";
    for (int k : report.k_values) out << ",K" << k;
    out << "\n";
    auto row = [&](const char* name, const std::vector<double>& vals) {
        out << name;
        for (double v : vals) out << "," << format_double(v);
        out << "\n";
    };
    row("recall", report.recall);
    row("mean_recall", report.mean_recall);
    row("f1", report.f1);
    size_t num_preds = report.per_predicate_recall.empty() ? 0 : report.per_predicate_recall[0].size();
    for (size_t p = 0; p < num_preds; ++p) {
        out << "recall_" << predicate_names()[p];
        for (size_t ki = 0; ki < report.k_values.size(); ++ki)
            out << "," << format_double(report.per_predicate_recall[ki][p]);
        out << "\n";
    }
    out << "f1_mean_of_f1s," << format_double(report.f1_mean_of_f1s) << "\n";
    out << "f1_of_mean_r_mr," << format_double(report.f1_of_mean_r_mr) << "\n";
    out << "num_gt_triplets," << report.num_gt_triplets << "\n";
    return out.str();
}

std::string metric_report_to_text(const MetricReport& report) {
    std::ostringstream out;
    out << "        ";
    for (int k : report.k_values) out << "      @" << k;
    out << "\n";
    auto row = [&](const char* name, const std::vector<double>& vals) {
        char buf[64];
        out << name;
        for (double v : vals) {
            std::snprintf(buf, sizeof(buf), " %8.2f", v);
            out << buf;
        }
        out << "\n";
    };
    row("R       ", report.recall);
    row("mR      ", report.mean_recall);
    row("F1      ", report.f1);
    out << "avg F1 (mean of F1s): " << format_double(report.f1_mean_of_f1s) << "\n";
    out << "avg F1 (F1 of means): " << format_double(report.f1_of_mean_r_mr) << "\n";
    out << "ground-truth triplets: " << report.num_gt_triplets << "\n";
    return out.str();
}

}  // namespace rxpp
