#include "rxpp/carpe.hpp"

#include <cmath>
#include <stdexcept>

namespace rxpp {

const char* head_kind_name(HeadKind h) { return h == HeadKind::Carpe ? "carpe" : "gated"; }

HeadKind parse_head_kind(const std::string& name) {
    if (name == "carpe") return HeadKind::Carpe;
    if (name == "gated") return HeadKind::Gated;
    throw std::runtime_error("unknown head: " + name);
}

namespace {

SwigluWeights make_swiglu(ParamStore& store, const std::string& prefix, size_t in_dim,
                          size_t hidden, size_t out_dim, uint64_t seed) {
    SwigluWeights w;
    w.gate_w = store.add(prefix + ".gate_w", init_matrix(hidden, in_dim, mix64(seed, 1)), true);
    w.gate_b = store.add(prefix + ".gate_b", Tensor::vec(hidden), false);
    w.val_w = store.add(prefix + ".val_w", init_matrix(hidden, in_dim, mix64(seed, 2)), true);
    w.val_b = store.add(prefix + ".val_b", Tensor::vec(hidden), false);
    w.out_w = store.add(prefix + ".out_w", init_matrix(out_dim, hidden, mix64(seed, 3)), true);
    w.out_b = store.add(prefix + ".out_b", Tensor::vec(out_dim), false);
    return w;
}

}  // namespace

CarpeWeights CarpeWeights::create(ParamStore& store, const CarpeDims& dims, HeadKind head,
                                  bool use_rope, uint64_t seed, const Tensor* obj_embeddings,
                                  const Tensor* pred_embeddings) {
    if (dims.d % static_cast<size_t>(dims.heads) != 0)
        throw std::runtime_error("CarpeWeights: D must be divisible by head count");
    if (dims.d_rope % 2 != 0) throw std::runtime_error("CarpeWeights: d_rope must be even");
    if (dims.tau_s <= 0.0) throw std::runtime_error("CarpeWeights: tau_s must be positive");

    CarpeWeights w;
    w.dims = dims;
    auto s = [&](const char* tag) { return mix64(seed, hash_str(tag)); };

    Tensor obj_emb = obj_embeddings != nullptr
                         ? *obj_embeddings
                         : init_matrix(dims.k_obj, dims.d_e, s("emb_obj"));
    Tensor pred_emb = pred_embeddings != nullptr
                          ? *pred_embeddings
                          : init_matrix(dims.k_pred, dims.d_e, s("emb_pred"));
    if (obj_emb.rows() != dims.k_obj || obj_emb.cols() != dims.d_e)
        throw std::runtime_error("CarpeWeights: object embedding shape mismatch");
    if (pred_emb.rows() != dims.k_pred || pred_emb.cols() != dims.d_e)
        throw std::runtime_error("CarpeWeights: predicate embedding shape mismatch");
    w.emb_obj = store.add("carpe.emb_obj", std::move(obj_emb), false);
    w.emb_pred = store.add("carpe.emb_pred", std::move(pred_emb), false);

    w.lift_pred = make_swiglu(store, "carpe.lift_pred", dims.d_e, dims.d_h, dims.d, s("lift_pred"));

    if (head == HeadKind::Carpe) {
        w.lift_obj = make_swiglu(store, "carpe.lift_obj", dims.d_e, dims.d_h, dims.d, s("lift_obj"));
        w.attn_wq = store.add("carpe.attn_wq", init_matrix(dims.d, dims.d, s("wq")), true);
        w.attn_wk = store.add("carpe.attn_wk", init_matrix(dims.d, dims.d, s("wk")), true);
        w.attn_wv = store.add("carpe.attn_wv", init_matrix(dims.d, dims.d, s("wv")), true);
        // zero init: cross_attend is the identity at a fresh start
        w.attn_wo = store.add("carpe.attn_wo", Tensor::mat(dims.d, dims.d), true);
        if (use_rope) {
            size_t half = dims.d_rope / 2;
            w.f1_w1 = store.add("carpe.f1_w1", init_matrix(dims.rope_hidden, 9, s("f1_w1")), true);
            w.f1_b1 = store.add("carpe.f1_b1", Tensor::vec(dims.rope_hidden), false);
            w.f1_w2 = store.add("carpe.f1_w2", init_matrix(half, dims.rope_hidden, s("f1_w2")), true);
            w.f1_b2 = store.add("carpe.f1_b2", Tensor::vec(half), false);
            w.f2_w1 = store.add("carpe.f2_w1", init_matrix(dims.rope_hidden, 9, s("f2_w1")), true);
            w.f2_b1 = store.add("carpe.f2_b1", Tensor::vec(dims.rope_hidden), false);
            w.f2_w2 = store.add("carpe.f2_w2", init_matrix(half, dims.rope_hidden, s("f2_w2")), true);
            w.f2_b2 = store.add("carpe.f2_b2", Tensor::vec(half), false);
            w.head_bias_proj = store.add("carpe.head_bias_proj",
                                         Tensor::mat(static_cast<size_t>(dims.heads), dims.d_rope), true);
        }
    } else {
        size_t mid = dims.d / 2;
        w.gsub_w1 = store.add("gated.sub_w1", init_matrix(mid, dims.d_e, s("gsub_w1")), true);
        w.gsub_b1 = store.add("gated.sub_b1", Tensor::vec(mid), false);
        w.gsub_w2 = store.add("gated.sub_w2", init_matrix(dims.d, mid, s("gsub_w2")), true);
        w.gsub_b2 = store.add("gated.sub_b2", Tensor::vec(dims.d), false);
        w.gobj_w1 = store.add("gated.obj_w1", init_matrix(mid, dims.d_e, s("gobj_w1")), true);
        w.gobj_b1 = store.add("gated.obj_b1", Tensor::vec(mid), false);
        w.gobj_w2 = store.add("gated.obj_w2", init_matrix(dims.d, mid, s("gobj_w2")), true);
        w.gobj_b2 = store.add("gated.obj_b2", Tensor::vec(dims.d), false);
        w.gate_sub_w = store.add("gated.gate_sub_w", init_matrix(1, dims.d_e + dims.d, s("gate_sub")), true);
        w.gate_sub_b = store.add("gated.gate_sub_b", Tensor::vec(1), false);
        w.gate_obj_w = store.add("gated.gate_obj_w", init_matrix(1, dims.d_e + dims.d, s("gate_obj")), true);
        w.gate_obj_b = store.add("gated.gate_obj_b", Tensor::vec(1), false);
    }

    w.comp_w = store.add("carpe.comp_w", init_matrix(dims.d, 2 * dims.d, s("comp_w")), true);
    w.comp_b = store.add("carpe.comp_b", Tensor::vec(dims.d), false);
    w.comp_ln_g = store.add("carpe.comp_ln_g", ones(dims.d), false);
    w.comp_ln_b = store.add("carpe.comp_ln_b", Tensor::vec(dims.d), false);
    return w;
}

Var swiglu_lift(Tape& tape, ParamBinding& params, const SwigluWeights& w, Var x) {
    Var gate = tape.silu(tape.linear(params(w.gate_w), x, params(w.gate_b)));
    Var val = tape.linear(params(w.val_w), x, params(w.val_b));
    return tape.linear(params(w.out_w), tape.hadamard(gate, val), params(w.out_b));
}

Tensor geom_encode(const Box& box_s, const Box& box_o) {
    require_valid_box(box_s, "geom_encode");
    require_valid_box(box_o, "geom_encode");
    constexpr double eps = 1e-8;
    Tensor b = Tensor::vec(9);
    b.data[0] = box_s.width();
    b.data[1] = box_s.height();
    b.data[2] = box_s.cx();
    b.data[3] = box_s.cy();
    b.data[4] = box_o.width();
    b.data[5] = box_o.height();
    b.data[6] = box_o.cx();
    b.data[7] = box_o.cy();
    // difference of logs so the subject/object swap negates this exactly
    b.data[8] = std::log(box_s.area() + eps) - std::log(box_o.area() + eps);
    return b;
}

Var geom_rope(Tape& tape, ParamBinding& params, const CarpeWeights& w, Var b) {
    Var h1 = tape.tanh_(tape.linear(params(w.f1_w1), b, params(w.f1_b1)));
    Var s = tape.sin_(tape.linear(params(w.f1_w2), h1, params(w.f1_b2)));
    Var h2 = tape.tanh_(tape.linear(params(w.f2_w1), b, params(w.f2_b1)));
    Var c = tape.cos_(tape.linear(params(w.f2_w2), h2, params(w.f2_b2)));
    const Var parts[2] = {s, c};
    return tape.concat(parts);
}

AttendContext make_attend_context(Tape& tape, ParamBinding& params, const CarpeWeights& w,
                                  Var bank_matrix) {
    AttendContext ctx;
    ctx.k_proj = tape.linear_rows(params(w.attn_wk), bank_matrix);
    ctx.v_proj = tape.linear_rows(params(w.attn_wv), bank_matrix);
    return ctx;
}

Var cross_attend(Tape& tape, ParamBinding& params, const CarpeWeights& w, Var x,
                 const AttendContext& ctx, Var b_geo, AttentionProbe* probe) {
    Var q = tape.linear(params(w.attn_wq), x);
    Var beta{};
    if (b_geo.ok() && w.head_bias_proj >= 0) beta = tape.linear(params(w.head_bias_proj), b_geo);
    if (probe != nullptr) {
        const Tensor& qv = tape.val(q);
        const Tensor& kv = tape.val(ctx.k_proj);
        size_t D = qv.size();
        size_t dh = D / static_cast<size_t>(w.dims.heads);
        size_t kn = kv.rows();
        double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
        probe->weights = Tensor::mat(static_cast<size_t>(w.dims.heads), kn);
        for (int a = 0; a < w.dims.heads; ++a) {
            size_t off = static_cast<size_t>(a) * dh;
            double mx = -1e300;
            for (size_t k = 0; k < kn; ++k) {
                double sv = 0.0;
                for (size_t j = 0; j < dh; ++j) sv += qv.data[off + j] * kv.at(k, off + j);
                sv = sv * inv_sqrt + (beta.ok() ? tape.val(beta).data[a] : 0.0);
                probe->weights.at(a, k) = sv;
                mx = std::max(mx, sv);
            }
            double z = 0.0;
            for (size_t k = 0; k < kn; ++k) {
                double e = std::exp(probe->weights.at(a, k) - mx);
                probe->weights.at(a, k) = e;
                z += e;
            }
            for (size_t k = 0; k < kn; ++k) probe->weights.at(a, k) /= z;
        }
    }
    Var attended = tape.bank_attention(q, ctx.k_proj, ctx.v_proj, beta, w.dims.heads);
    return tape.add(x, tape.linear(params(w.attn_wo), attended));
}

Var compose_relation(Tape& tape, ParamBinding& params, const CarpeWeights& w, Var s_hat, Var o_hat) {
    const Var parts[2] = {s_hat, o_hat};
    Var cat = tape.concat(parts);
    Var lin = tape.linear(params(w.comp_w), cat, params(w.comp_b));
    Var normed = tape.layernorm(lin, params(w.comp_ln_g), params(w.comp_ln_b));
    return tape.l2_normalize(normed);
}

Var score_predicates(Tape& tape, Var r, const std::vector<Var>& lifted_prototypes,
                     const PrototypeBank& bank, double tau_s) {
    if (tau_s <= 0.0) throw std::runtime_error("score_predicates: tau_s must be positive");
    size_t k_pred = bank.init_mask.size();
    if (lifted_prototypes.size() != k_pred)
        throw std::runtime_error("score_predicates: prototype count mismatch");
    std::vector<Var> logits;
    logits.reserve(k_pred);
    for (size_t k = 0; k < k_pred; ++k) {
        Var proto;
        if (bank.init_mask[k]) {
            Tensor row = Tensor::vec(bank.ema.cols());
            for (size_t j = 0; j < row.size(); ++j) row.data[j] = bank.ema.at(k, j);
            proto = tape.constant(std::move(row));  // EMA path carries no gradient
        } else {
            proto = lifted_prototypes[k];
        }
        logits.push_back(tape.cosine(r, proto));
    }
    return tape.scale(tape.stack_scalars(logits), 1.0 / tau_s);
}

void ema_update(PrototypeBank& bank, const std::vector<std::pair<Tensor, int>>& relation_reps,
                bool renormalize) {
    size_t k_pred = bank.init_mask.size();
    size_t dim = bank.ema.cols();
    std::vector<Tensor> sums(k_pred);
    std::vector<int> counts(k_pred, 0);
    for (const auto& [rep, label] : relation_reps) {
        if (label < 0 || static_cast<size_t>(label) >= k_pred)
            throw std::invalid_argument("ema_update: label out of range");
        if (rep.size() != dim) throw std::invalid_argument("ema_update: representation dim mismatch");
        if (counts[label] == 0) sums[label] = Tensor::vec(dim);
        for (size_t j = 0; j < dim; ++j) sums[label].data[j] += rep.data[j];
        ++counts[label];
    }
    for (size_t k = 0; k < k_pred; ++k) {
        if (counts[k] == 0) continue;
        double inv = 1.0 / counts[k];
        if (!bank.init_mask[k]) {
            for (size_t j = 0; j < dim; ++j) bank.ema.at(k, j) = sums[k].data[j] * inv;
            bank.init_mask[k] = 1;
        } else {
            double m = bank.momentum;
            for (size_t j = 0; j < dim; ++j)
                bank.ema.at(k, j) = m * bank.ema.at(k, j) + (1.0 - m) * sums[k].data[j] * inv;
        }
        if (renormalize) {
            double norm = 0.0;
            for (size_t j = 0; j < dim; ++j) norm += bank.ema.at(k, j) * bank.ema.at(k, j);
            norm = std::sqrt(norm);
            if (norm > 1e-12)
                for (size_t j = 0; j < dim; ++j) bank.ema.at(k, j) /= norm;
        }
    }
}

Var gated_fusion_baseline(Tape& tape, ParamBinding& params, const CarpeWeights& w, Var t, Var v,
                          bool subject) {
    int w1 = subject ? w.gsub_w1 : w.gobj_w1;
    int b1 = subject ? w.gsub_b1 : w.gobj_b1;
    int w2 = subject ? w.gsub_w2 : w.gobj_w2;
    int b2 = subject ? w.gsub_b2 : w.gobj_b2;
    int gw = subject ? w.gate_sub_w : w.gate_obj_w;
    int gb = subject ? w.gate_sub_b : w.gate_obj_b;
    Var lifted = tape.linear(params(w2), tape.relu(tape.linear(params(w1), t, params(b1))), params(b2));
    const Var parts[2] = {t, v};
    Var gate = tape.sigmoid(tape.linear(params(gw), tape.concat(parts), params(gb)));
    return tape.add(lifted, tape.scalar_mul(gate, v));
}

}  // namespace rxpp
