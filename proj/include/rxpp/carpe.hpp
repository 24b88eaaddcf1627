#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "rxpp/geometry.hpp"
#include "rxpp/global_context.hpp"
#include "rxpp/param_store.hpp"
#include "rxpp/tape.hpp"

namespace rxpp {

enum class HeadKind { Carpe, Gated };

const char* head_kind_name(HeadKind h);
HeadKind parse_head_kind(const std::string& name);

// Non-trainable prototype state: the EMA shadow buffer with its init mask.
// The learnable side (class embeddings, lifting weights) lives in the
// ParamStore; the buffer here is excluded from gradients and the optimizer.
struct PrototypeBank {
    Tensor ema;                      // K_pred x D
    std::vector<uint8_t> init_mask;  // per class: EMA initialized yet?
    double momentum = 0.999;

    static PrototypeBank create(size_t k_pred, size_t dim, double momentum = 0.999) {
        PrototypeBank b;
        b.ema = Tensor::mat(k_pred, dim);
        b.init_mask.assign(k_pred, 0);
        b.momentum = momentum;
        return b;
    }
};

struct SwigluWeights {
    int gate_w = -1, gate_b = -1, val_w = -1, val_b = -1, out_w = -1, out_b = -1;
};

struct CarpeDims {
    size_t d_e = 32;       // class-embedding dim
    size_t d_h = 512;      // SwiGLU hidden dim
    size_t d = 64;         // model dim D
    int heads = 4;
    size_t d_rope = 32;    // geometry encoding dim (even)
    size_t rope_hidden = 32;
    size_t k_obj = 12;
    size_t k_pred = 7;
    double tau_s = 0.1;    // cosine scoring temperature
};

struct CarpeWeights {
    CarpeDims dims;
    int emb_obj = -1;   // K_obj x d_e
    int emb_pred = -1;  // K_pred x d_e
    SwigluWeights lift_obj;   // tied subject/object lifting
    SwigluWeights lift_pred;  // separate predicate lifting
    int attn_wq = -1, attn_wk = -1, attn_wv = -1, attn_wo = -1;  // wo zero-init
    int f1_w1 = -1, f1_b1 = -1, f1_w2 = -1, f1_b2 = -1;          // geometry nets
    int f2_w1 = -1, f2_b1 = -1, f2_w2 = -1, f2_b2 = -1;
    int head_bias_proj = -1;  // d_rope -> heads, zero-init
    int comp_w = -1, comp_b = -1, comp_ln_g = -1, comp_ln_b = -1;
    // gated-fusion baseline branch (two-layer ReLU lifts + scalar gates)
    int gsub_w1 = -1, gsub_b1 = -1, gsub_w2 = -1, gsub_b2 = -1;
    int gobj_w1 = -1, gobj_b1 = -1, gobj_w2 = -1, gobj_b2 = -1;
    int gate_sub_w = -1, gate_sub_b = -1, gate_obj_w = -1, gate_obj_b = -1;

    static CarpeWeights create(ParamStore& store, const CarpeDims& dims, HeadKind head,
                               bool use_rope, uint64_t seed, const Tensor* obj_embeddings = nullptr,
                               const Tensor* pred_embeddings = nullptr);
};

// W_out (SiLU(W_gate x) . (W_val x))
Var swiglu_lift(Tape& tape, ParamBinding& params, const SwigluWeights& w, Var x);

// [w_s, h_s, cx_s, cy_s, w_o, h_o, cx_o, cy_o, log(area_s + eps) - log(area_o + eps)]
Tensor geom_encode(const Box& box_s, const Box& box_o);

// [sin(f1(b)), cos(f2(b))]
Var geom_rope(Tape& tape, ParamBinding& params, const CarpeWeights& w, Var b);

// Key/value projections of the lifted object-prototype bank, shared by every
// subject/object call on the same tape.
struct AttendContext {
    Var k_proj;
    Var v_proj;
};
AttendContext make_attend_context(Tape& tape, ParamBinding& params, const CarpeWeights& w,
                                  Var bank_matrix);

// x + W_o(multi-head attention of x over the prototype bank). b_geo (when
// valid) is projected to one additive scalar per head.
Var cross_attend(Tape& tape, ParamBinding& params, const CarpeWeights& w, Var x,
                 const AttendContext& ctx, Var b_geo = {}, AttentionProbe* probe = nullptr);

// L2-normalized LN(W_r (s_hat || o_hat)) - order-sensitive composition.
Var compose_relation(Tape& tape, ParamBinding& params, const CarpeWeights& w, Var s_hat, Var o_hat);

// logits_k = cos(r, effective prototype_k) / tau_s. The effective prototype
// is the EMA entry once initialized, the lifted learnable one otherwise.
Var score_predicates(Tape& tape, Var r, const std::vector<Var>& lifted_prototypes,
                     const PrototypeBank& bank, double tau_s);

// EMA shadow update from the batch's per-class mean normalized relation
// representations. First sighting of a class copies the mean and flips the
// init mask. Optionally renormalizes the buffer row after each update.
void ema_update(PrototypeBank& bank, const std::vector<std::pair<Tensor, int>>& relation_reps,
                bool renormalize = true);

// Scalar-gated fusion baseline: W_* t + sigmoid(W_gate [t; v]) * v with a
// two-layer ReLU lift. subject=true selects the subject branch weights.
Var gated_fusion_baseline(Tape& tape, ParamBinding& params, const CarpeWeights& w, Var t, Var v,
                          bool subject);

}  // namespace rxpp
