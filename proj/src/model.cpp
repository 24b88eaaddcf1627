#include "rxpp/model.hpp"

#include <algorithm>
#include <stdexcept>

namespace rxpp {

RelationModel::RelationModel(const ModelConfig& config, const Tensor* obj_embeddings,
                             const Tensor* pred_embeddings)
    : config_(config),
      bank_(PrototypeBank::create(config.carpe.k_pred, config.carpe.d)) {
    damp_ = DampWeights::create(params_, config.extractor, config.c_p3, config.c_p4, config.c_p5,
                                config.carpe.d, mix64(config.init_seed, hash_str("damp")));
    if (config.use_global_context) {
        aifi_ = AifiWeights::create(params_, config.c_p5, config.d_ctx, config.h_ctx,
                                    config.carpe.d, mix64(config.init_seed, hash_str("aifi")));
    }
    carpe_ = CarpeWeights::create(params_, config.carpe, config.head, config.use_rope,
                                  mix64(config.init_seed, hash_str("carpe")), obj_embeddings,
                                  pred_embeddings);
}

RelationModel::SceneContext RelationModel::encode_scene(Tape& tape, ParamBinding& params,
                                                        const FeaturePyramid& pyramid,
                                                        const std::vector<Detection>& dets) const {
    SceneContext ctx;

    Var pooled{};
    if (config_.use_global_context) {
        Var grid = aifi_encode(tape, params, aifi_, pyramid.level(Level::P5));
        pooled = pool_context(tape, grid);
    }
    ctx.node_features.reserve(dets.size());
    for (const Detection& det : dets) {
        Var feat = extract(tape, params, pyramid, det, config_.extractor, damp_);
        if (config_.use_global_context) feat = fuse_context(tape, params, aifi_, feat, pooled);
        ctx.node_features.push_back(feat);
    }

    Var emb_pred = params(carpe_.emb_pred);
    for (size_t k = 0; k < config_.carpe.k_pred; ++k)
        ctx.lifted_pred.push_back(swiglu_lift(tape, params, carpe_.lift_pred, tape.row(emb_pred, k)));

    if (config_.head == HeadKind::Carpe) {
        Var emb_obj = params(carpe_.emb_obj);
        std::vector<Var> lifted_obj;
        lifted_obj.reserve(config_.carpe.k_obj);
        for (size_t k = 0; k < config_.carpe.k_obj; ++k)
            lifted_obj.push_back(swiglu_lift(tape, params, carpe_.lift_obj, tape.row(emb_obj, k)));
        Var bank_matrix = tape.stack_rows(lifted_obj);
        ctx.attend = make_attend_context(tape, params, carpe_, bank_matrix);
    }
    return ctx;
}

RelationModel::PairOutput RelationModel::score_pair(Tape& tape, ParamBinding& params,
                                                    const SceneContext& ctx,
                                                    const std::vector<Detection>& dets, int si,
                                                    int oi) const {
    Var s_hat, o_hat;
    if (config_.head == HeadKind::Carpe) {
        Var b_s{}, b_o{};
        if (config_.use_rope) {
            // each endpoint sees the pair geometry from its own perspective
            b_s = geom_rope(tape, params, carpe_,
                            tape.constant(geom_encode(dets[si].box, dets[oi].box)));
            b_o = geom_rope(tape, params, carpe_,
                            tape.constant(geom_encode(dets[oi].box, dets[si].box)));
        }
        s_hat = cross_attend(tape, params, carpe_, ctx.node_features[si], ctx.attend, b_s);
        o_hat = cross_attend(tape, params, carpe_, ctx.node_features[oi], ctx.attend, b_o);
    } else {
        Var emb_obj = params(carpe_.emb_obj);
        Var t_s = tape.row(emb_obj, static_cast<size_t>(dets[si].class_id));
        Var t_o = tape.row(emb_obj, static_cast<size_t>(dets[oi].class_id));
        s_hat = gated_fusion_baseline(tape, params, carpe_, t_s, ctx.node_features[si], true);
        o_hat = gated_fusion_baseline(tape, params, carpe_, t_o, ctx.node_features[oi], false);
    }
    PairOutput out;
    out.subject_index = si;
    out.object_index = oi;
    out.rep = compose_relation(tape, params, carpe_, s_hat, o_hat);
    out.logits = score_predicates(tape, out.rep, ctx.lifted_pred, bank_, config_.carpe.tau_s);
    return out;
}

RelationModel::SceneForward RelationModel::forward_scene(Tape& tape, ParamBinding& params,
                                                         const FeaturePyramid& pyramid,
                                                         const std::vector<Detection>& dets) const {
    SceneForward fwd;
    SceneContext ctx = encode_scene(tape, params, pyramid, dets);
    double flops_before = tape.flops();
    for (auto [si, oi] : enumerate_pairs(static_cast<int>(dets.size())))
        fwd.pairs.push_back(score_pair(tape, params, ctx, dets, si, oi));
    fwd.relation_head_flops = tape.flops() - flops_before;
    return fwd;
}

std::vector<RelationCandidate> RelationModel::score_scene(const FeaturePyramid& pyramid,
                                                          const std::vector<Detection>& dets,
                                                          double* relation_head_flops) const {
    // Grad-free encode pass, then pair scoring in bounded chunks so huge
    // proposal budgets do not hold the whole tape in memory.
    auto& self = const_cast<RelationModel&>(*this);
    Tape enc_tape(false);
    ParamBinding enc_params(enc_tape, self.params_);
    SceneContext enc = encode_scene(enc_tape, enc_params, pyramid, dets);

    std::vector<Tensor> feats;
    feats.reserve(enc.node_features.size());
    for (Var v : enc.node_features) feats.push_back(enc_tape.val(v));
    std::vector<Tensor> lifted;
    for (Var v : enc.lifted_pred) lifted.push_back(enc_tape.val(v));
    Tensor k_proj, v_proj;
    if (config_.head == HeadKind::Carpe) {
        k_proj = enc_tape.val(enc.attend.k_proj);
        v_proj = enc_tape.val(enc.attend.v_proj);
    }

    auto pairs = enumerate_pairs(static_cast<int>(dets.size()));
    std::vector<RelationCandidate> candidates;
    candidates.reserve(pairs.size());
    double head_flops = 0.0;

    constexpr size_t kChunk = 512;
    for (size_t start = 0; start < pairs.size(); start += kChunk) {
        size_t end = std::min(pairs.size(), start + kChunk);
        Tape tape(false);
        ParamBinding params(tape, self.params_);
        SceneContext ctx;
        for (const Tensor& f : feats) ctx.node_features.push_back(tape.constant(f));
        for (const Tensor& l : lifted) ctx.lifted_pred.push_back(tape.constant(l));
        if (config_.head == HeadKind::Carpe) {
            ctx.attend.k_proj = tape.constant(k_proj);
            ctx.attend.v_proj = tape.constant(v_proj);
        }
        double before = tape.flops();
        for (size_t i = start; i < end; ++i) {
            auto [si, oi] = pairs[i];
            PairOutput out = score_pair(tape, params, ctx, dets, si, oi);
            RelationCandidate cand;
            cand.subject_index = si;
            cand.object_index = oi;
            cand.predicate_logits = tape.val(out.logits).data;
            cand.theta_subj = dets[si].confidence;
            cand.theta_obj = dets[oi].confidence;
            candidates.push_back(std::move(cand));
        }
        head_flops += tape.flops() - before;
    }
    if (relation_head_flops != nullptr) *relation_head_flops = head_flops;
    return candidates;
}

std::vector<int> map_detections_to_objects(const std::vector<Detection>& detections,
                                           const SceneSpec& scene, double iou_thresh) {
    std::vector<int> mapping(detections.size(), -1);
    std::vector<char> taken(scene.objects.size(), 0);
    for (size_t d = 0; d < detections.size(); ++d) {
        double best = iou_thresh;
        int best_obj = -1;
        for (size_t o = 0; o < scene.objects.size(); ++o) {
            if (taken[o] || scene.objects[o].class_id != detections[d].class_id) continue;
            double v = iou(detections[d].box, scene.objects[o].box);
            if (v >= best) {
                best = v;
                best_obj = static_cast<int>(o);
            }
        }
        if (best_obj >= 0) {
            mapping[d] = best_obj;
            taken[best_obj] = 1;
        }
    }
    return mapping;
}

}  // namespace rxpp
