#include <cmath>
#include <functional>
#include <stdexcept>

#include "rxpp/trainer.hpp"

namespace rxpp {

namespace {

struct CheckCase {
    ParamStore store;
    std::function<Var(Tape&, ParamBinding&)> run;
    double tolerance = 1e-4;
};

Tensor rand_vec(size_t n, uint64_t seed) { return init_vector(n, seed, 1.0); }

// Objective directions are kept small so finite-difference rounding noise on
// exactly-zero gradient directions (softmax-shift-invariant bias paths) stays
// below the relative-error floor.
Tensor dir_vec(size_t n, uint64_t seed) { return init_vector(n, seed, 0.003); }

Tensor dir_mat(size_t rows, size_t cols, uint64_t seed) {
    Tensor t = init_matrix(rows, cols, seed);
    for (double& d : t.data) d *= 0.003;
    return t;
}

int add_param(ParamStore& store, const char* name, Tensor t) { return store.add(name, std::move(t), false); }

CarpeDims tiny_dims() {
    CarpeDims d;
    d.d_e = 6;
    d.d_h = 8;
    d.d = 16;
    d.heads = 2;
    d.d_rope = 8;
    d.rope_hidden = 6;
    d.k_obj = 4;
    d.k_pred = 3;
    d.tau_s = 0.1;
    return d;
}

// Zero-initialized output projections would hide upstream gradient paths, so
// checks overwrite them with random values.
void randomize(ParamStore& store, int idx, uint64_t seed) {
    Tensor& t = store[idx].value;
    Rng rng(seed);
    for (double& d : t.data) d = rng.gaussian() * 0.3;
}

CheckCase case_swiglu(uint64_t seed) {
    CheckCase c;
    SwigluWeights w;
    w.gate_w = add_param(c.store, "gate_w", init_matrix(8, 6, mix64(seed, 1)));
    w.gate_b = add_param(c.store, "gate_b", rand_vec(8, mix64(seed, 2)));
    w.val_w = add_param(c.store, "val_w", init_matrix(8, 6, mix64(seed, 3)));
    w.val_b = add_param(c.store, "val_b", rand_vec(8, mix64(seed, 4)));
    w.out_w = add_param(c.store, "out_w", init_matrix(10, 8, mix64(seed, 5)));
    w.out_b = add_param(c.store, "out_b", rand_vec(10, mix64(seed, 6)));
    int x = add_param(c.store, "x", rand_vec(6, mix64(seed, 7)));
    Tensor dir = dir_vec(10, mix64(seed, 8));
    c.run = [w, x, dir](Tape& tape, ParamBinding& params) {
        Var y = swiglu_lift(tape, params, w, params(x));
        return tape.dot(y, tape.constant(dir));
    };
    return c;
}

CheckCase case_cross_attend(uint64_t seed) {
    CheckCase c;
    CarpeDims dims = tiny_dims();
    CarpeWeights w = CarpeWeights::create(c.store, dims, HeadKind::Carpe, true, mix64(seed, 11));
    randomize(c.store, w.attn_wo, mix64(seed, 12));
    randomize(c.store, w.head_bias_proj, mix64(seed, 13));
    int x = add_param(c.store, "x", rand_vec(dims.d, mix64(seed, 14)));
    Tensor b = rand_vec(9, mix64(seed, 15));
    Tensor dir = dir_vec(dims.d, mix64(seed, 16));
    c.run = [w, x, b, dir, dims](Tape& tape, ParamBinding& params) {
        std::vector<Var> lifted;
        Var emb = params(w.emb_obj);
        for (size_t k = 0; k < dims.k_obj; ++k)
            lifted.push_back(swiglu_lift(tape, params, w.lift_obj, tape.row(emb, k)));
        Var bank_matrix = tape.stack_rows(lifted);
        AttendContext ctx = make_attend_context(tape, params, w, bank_matrix);
        Var b_geo = geom_rope(tape, params, w, tape.constant(b));
        Var out = cross_attend(tape, params, w, params(x), ctx, b_geo);
        return tape.dot(out, tape.constant(dir));
    };
    return c;
}

CheckCase case_geom_rope(uint64_t seed) {
    CheckCase c;
    CarpeDims dims = tiny_dims();
    CarpeWeights w = CarpeWeights::create(c.store, dims, HeadKind::Carpe, true, mix64(seed, 21));
    Tensor b = rand_vec(9, mix64(seed, 22));
    Tensor dir = dir_vec(dims.d_rope, mix64(seed, 23));
    c.run = [w, b, dir](Tape& tape, ParamBinding& params) {
        Var out = geom_rope(tape, params, w, tape.constant(b));
        return tape.dot(out, tape.constant(dir));
    };
    return c;
}

CheckCase case_compose(uint64_t seed) {
    CheckCase c;
    CarpeDims dims = tiny_dims();
    CarpeWeights w = CarpeWeights::create(c.store, dims, HeadKind::Carpe, false, mix64(seed, 31));
    int s = add_param(c.store, "s_hat", rand_vec(dims.d, mix64(seed, 32)));
    int o = add_param(c.store, "o_hat", rand_vec(dims.d, mix64(seed, 33)));
    Tensor dir = dir_vec(dims.d, mix64(seed, 34));
    c.run = [w, s, o, dir](Tape& tape, ParamBinding& params) {
        Var r = compose_relation(tape, params, w, params(s), params(o));
        return tape.dot(r, tape.constant(dir));
    };
    return c;
}

CheckCase case_score(uint64_t seed) {
    CheckCase c;
    size_t d = 12, k_pred = 4;
    int r = add_param(c.store, "r", rand_vec(d, mix64(seed, 41)));
    std::vector<int> protos;
    for (size_t k = 0; k < k_pred; ++k)
        protos.push_back(add_param(c.store, ("proto_" + std::to_string(k)).c_str(),
                                   rand_vec(d, mix64(seed, 42 + k))));
    Tensor dir = dir_vec(k_pred, mix64(seed, 47));
    PrototypeBank bank = PrototypeBank::create(k_pred, d);
    c.run = [r, protos, dir, bank](Tape& tape, ParamBinding& params) {
        std::vector<Var> lifted;
        for (int p : protos) lifted.push_back(params(p));
        Var logits = score_predicates(tape, params(r), lifted, bank, 0.1);
        return tape.dot(logits, tape.constant(dir));
    };
    return c;
}

CheckCase case_gated(uint64_t seed) {
    CheckCase c;
    CarpeDims dims = tiny_dims();
    CarpeWeights w = CarpeWeights::create(c.store, dims, HeadKind::Gated, false, mix64(seed, 51));
    int t = add_param(c.store, "t", rand_vec(dims.d_e, mix64(seed, 52)));
    int v = add_param(c.store, "v", rand_vec(dims.d, mix64(seed, 53)));
    Tensor d1 = dir_vec(dims.d, mix64(seed, 54));
    Tensor d2 = dir_vec(dims.d, mix64(seed, 55));
    c.run = [w, t, v, d1, d2](Tape& tape, ParamBinding& params) {
        Var s = gated_fusion_baseline(tape, params, w, params(t), params(v), true);
        Var o = gated_fusion_baseline(tape, params, w, params(t), params(v), false);
        const Var sums[2] = {tape.dot(s, tape.constant(d1)), tape.dot(o, tape.constant(d2))};
        return tape.sum_scalars(sums);
    };
    return c;
}

CheckCase case_aifi(uint64_t seed) {
    CheckCase c;
    size_t c5 = 6, d_ctx = 8, node_dim = 8;
    AifiWeights w = AifiWeights::create(c.store, c5, d_ctx, 2, node_dim, mix64(seed, 61));
    LevelGrid grid;
    grid.resize(c5, 2, 3);
    Rng rng(mix64(seed, 62));
    for (double& d : grid.data) d = rng.gaussian();
    Tensor dir = dir_mat(6, d_ctx, mix64(seed, 63));
    c.run = [w, grid, dir](Tape& tape, ParamBinding& params) {
        Var out = aifi_encode(tape, params, w, grid);
        return tape.dot(out, tape.constant(dir));
    };
    return c;
}

CheckCase case_fuse_context(uint64_t seed) {
    CheckCase c;
    size_t c5 = 6, d_ctx = 8, node_dim = 10;
    AifiWeights w = AifiWeights::create(c.store, c5, d_ctx, 2, node_dim, mix64(seed, 71));
    int node = add_param(c.store, "node", rand_vec(node_dim, mix64(seed, 72)));
    int g = add_param(c.store, "g", rand_vec(d_ctx, mix64(seed, 73)));
    Tensor dir = dir_vec(node_dim, mix64(seed, 74));
    c.run = [w, node, g, dir](Tape& tape, ParamBinding& params) {
        Var out = fuse_context(tape, params, w, params(node), params(g));
        return tape.dot(out, tape.constant(dir));
    };
    return c;
}

CheckCase case_damp(uint64_t seed) {
    CheckCase c;
    size_t out_dim = 8;
    DampWeights w = DampWeights::create(c.store, GatherVariant::DAMP, 5, 6, 7, out_dim,
                                        mix64(seed, 81));
    FeaturePyramid pyr = FeaturePyramid::make(64, 64, 5, 6, 7);
    Rng rng(mix64(seed, 82));
    for (Level l : kLevels)
        for (double& d : pyr.level(l).data) d = rng.gaussian();
    Detection det;
    det.box = Box{0.3, 0.4, 0.6, 0.7};
    det.source_level = Level::P4;
    auto [r, cc] = snap_anchor(det.box, Level::P4, pyr);
    det.r = r;
    det.c = cc;
    Tensor dir = dir_vec(out_dim, mix64(seed, 83));
    c.run = [w, pyr, det, dir](Tape& tape, ParamBinding& params) {
        Var out = extract(tape, params, pyr, det, GatherVariant::DAMP, w);
        return tape.dot(out, tape.constant(dir));
    };
    return c;
}

CheckCase case_loss(uint64_t seed) {
    CheckCase c;
    c.tolerance = 1e-6;
    size_t k = 5;
    int logits = add_param(c.store, "logits", rand_vec(k, mix64(seed, 91)));
    std::vector<double> priors = {0.4, 0.25, 0.2, 0.1, 0.05};
    c.run = [logits, priors](Tape& tape, ParamBinding& params) {
        return logit_adjusted_focal_loss(tape, params(logits), 2, priors, 1.0, 2.0);
    };
    return c;
}

CheckCase build_case(const std::string& op, uint64_t seed) {
    if (op == "swiglu_lift") return case_swiglu(seed);
    if (op == "geom_rope") return case_geom_rope(seed);
    if (op == "cross_attend") return case_cross_attend(seed);
    if (op == "compose_relation") return case_compose(seed);
    if (op == "score_predicates") return case_score(seed);
    if (op == "gated_fusion") return case_gated(seed);
    if (op == "aifi_encode") return case_aifi(seed);
    if (op == "fuse_context") return case_fuse_context(seed);
    if (op == "damp_extract") return case_damp(seed);
    if (op == "loss") return case_loss(seed);
    throw std::invalid_argument("grad_check: unknown op " + op);
}

}  // namespace

std::vector<std::string> gradcheck_ops() {
    return {"swiglu_lift",      "geom_rope",    "cross_attend", "compose_relation",
            "score_predicates", "gated_fusion", "aifi_encode",  "fuse_context",
            "damp_extract",     "loss"};
}

GradCheckResult grad_check(const std::string& op, uint64_t seed) {
    CheckCase c = build_case(op, seed);
    c.store.zero_grads();
    {
        Tape tape(true);
        ParamBinding binding(tape, c.store);
        Var out = c.run(tape, binding);
        tape.backward(out);
        binding.accumulate_grads(1.0);
    }
    std::vector<Tensor> analytic;
    analytic.reserve(c.store.count());
    for (const auto& e : c.store.entries()) analytic.push_back(e.grad);

    auto eval = [&]() {
        Tape tape(false);
        ParamBinding binding(tape, c.store);
        return tape.scalar(c.run(tape, binding));
    };

    GradCheckResult result;
    result.op = op;
    result.tolerance = c.tolerance;
    const double h = 1e-5;
    for (size_t ei = 0; ei < c.store.count(); ++ei) {
        auto& entry = c.store[static_cast<int>(ei)];
        for (size_t j = 0; j < entry.value.size(); ++j) {
            double save = entry.value.data[j];
            entry.value.data[j] = save + h;
            double fp = eval();
            entry.value.data[j] = save - h;
            double fm = eval();
            entry.value.data[j] = save;
            double fd = (fp - fm) / (2.0 * h);
            double an = analytic[ei].data[j];
            double rel = std::fabs(an - fd) / std::max({std::fabs(an), std::fabs(fd), 1e-8});
            result.max_rel_error = std::max(result.max_rel_error, rel);
        }
    }
    result.pass = result.max_rel_error < result.tolerance;
    return result;
}

}  // namespace rxpp
