#include "rxpp/ablate.hpp"

#include <sstream>

namespace rxpp {

std::vector<AblateCell> run_ablation(const RunConfig& base, const Dataset* data) {
    std::vector<AblateCell> cells;
    for (GatherVariant v : {GatherVariant::RoiAlign, GatherVariant::DA, GatherVariant::DAP,
                            GatherVariant::DAM, GatherVariant::DAMP})
        for (HeadKind h : {HeadKind::Carpe, HeadKind::Gated})
            for (bool ctx : {true, false})
                for (bool rope : {true, false}) {
                    AblateCell cell;
                    cell.extractor = v;
                    cell.head = h;
                    cell.context = ctx;
                    cell.rope = rope;
                    cells.push_back(cell);
                }

    parallel_for(cells.size(), [&](size_t i) {
        AblateCell& cell = cells[i];
        RunConfig cfg = base;  // identical seeds and budgets per cell
        cfg.extractor = gather_variant_name(cell.extractor);
        cfg.head = head_kind_name(cell.head);
        cfg.global_context = cell.context;
        cfg.rope = cell.rope;
        RelationModel model = build_model(cfg);
        cell.params = model.trainable_parameter_count();
        cell.gathers_per_100 = gather_count(cell.extractor, 100);
        if (data == nullptr) return;
        TrainConfig tc = cfg.train;
        tc.seed = cfg.seed;
        tc.iou_thresh = cfg.iou_thresh;
        tc.k_values = cfg.k_values;
        tc.eval_every = 0;  // final metrics only
        TrainResult result = train(model, *data, tc);
        cell.trained = true;
        cell.metrics = result.history.back().train_metrics;
        cell.final_loss = result.history.back().mean_loss;
    });
    return cells;
}

std::string ablation_csv(const std::vector<AblateCell>& cells, const std::vector<int>& k_values) {
    std::ostringstream out;
    out << "extractor,head,global_context,rope,params,gather_count_per_100";
    for (int k : k_values) out << ",R@" << k << ",mR@" << k << ",F1@" << k;
    out << ",f1_mean_of_f1s,loss\n";
    for (const AblateCell& cell : cells) {
        out << gather_variant_name(cell.extractor) << "," << head_kind_name(cell.head) << ","
            << (cell.context ? 1 : 0) << "," << (cell.rope ? 1 : 0) << "," << cell.params << ","
            << cell.gathers_per_100;
        if (cell.trained) {
            for (size_t i = 0; i < k_values.size(); ++i)
                out << "," << format_double(cell.metrics.recall[i]) << ","
                    << format_double(cell.metrics.mean_recall[i]) << ","
                    << format_double(cell.metrics.f1[i]);
            out << "," << format_double(cell.metrics.f1_mean_of_f1s) << ","
                << format_double(cell.final_loss);
        } else {
            for (size_t i = 0; i < 3 * k_values.size() + 2; ++i) out << ",";
        }
        out << "\n";
    }
    return out.str();
}

}  // namespace rxpp
