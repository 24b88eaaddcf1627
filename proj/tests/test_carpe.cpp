#include <cmath>

#include "doctest.h"
#include "rxpp/carpe.hpp"

using namespace rxpp;

namespace {

CarpeDims tiny_dims() {
    CarpeDims d;
    d.d_e = 6;
    d.d_h = 10;
    d.d = 16;
    d.heads = 2;
    d.d_rope = 8;
    d.rope_hidden = 5;
    d.k_obj = 4;
    d.k_pred = 3;
    d.tau_s = 0.1;
    return d;
}

std::vector<double> matvec(const Tensor& w, const std::vector<double>& x,
                           const Tensor* b = nullptr) {
    std::vector<double> y(w.rows(), 0.0);
    for (size_t i = 0; i < w.rows(); ++i) {
        for (size_t j = 0; j < w.cols(); ++j) y[i] += w.at(i, j) * x[j];
        if (b != nullptr) y[i] += b->data[i];
    }
    return y;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("swiglu_lift identities and reference evaluation") {
    ParamStore store;
    CarpeWeights w = CarpeWeights::create(store, tiny_dims(), HeadKind::Carpe, true, 5);

    SUBCASE("zero input with zero biases gives zero") {
        Tape tape(false);
        ParamBinding params(tape, store);
        Var out = swiglu_lift(tape, params, w.lift_obj, tape.constant(Tensor::vec(6)));
        for (double v : tape.val(out).data) CHECK(v == 0.0);
    }

    SUBCASE("saturated gate reduces to the pure linear path") {
        // bias the gate so SiLU output ~= 1 for every unit
        ParamStore s2;
        CarpeWeights w2 = CarpeWeights::create(s2, tiny_dims(), HeadKind::Carpe, true, 6);
        s2[w2.lift_obj.gate_w].value.zero();
        for (double& d : s2[w2.lift_obj.gate_b].value.data) d = 40.0;  // SiLU(40) ~ 40
        Tape tape(false);
        ParamBinding params(tape, s2);
        Tensor x = init_vector(6, 7, 1.0);
        Var out = swiglu_lift(tape, params, w2.lift_obj, tape.constant(x));
        // expected: W_out(40 * W_val x + 40 * b_val)  (gate constant 40)
        std::vector<double> xv(x.data.begin(), x.data.end());
        auto val = matvec(s2[w2.lift_obj.val_w].value, xv, &s2[w2.lift_obj.val_b].value);
        for (double& v : val) v *= 40.0 * sigmoid(40.0);
        auto expected = matvec(s2[w2.lift_obj.out_w].value, val, &s2[w2.lift_obj.out_b].value);
        for (size_t i = 0; i < expected.size(); ++i)
            CHECK(tape.val(out).data[i] == doctest::Approx(expected[i]).epsilon(1e-9));
    }

    SUBCASE("random input matches the reference formula") {
        Tape tape(false);
        ParamBinding params(tape, store);
        Tensor x = init_vector(6, 8, 1.0);
        Var out = swiglu_lift(tape, params, w.lift_pred, tape.constant(x));
        std::vector<double> xv(x.data.begin(), x.data.end());
        auto gate = matvec(store[w.lift_pred.gate_w].value, xv, &store[w.lift_pred.gate_b].value);
        auto val = matvec(store[w.lift_pred.val_w].value, xv, &store[w.lift_pred.val_b].value);
        std::vector<double> hidden(gate.size());
        for (size_t i = 0; i < gate.size(); ++i) hidden[i] = gate[i] * sigmoid(gate[i]) * val[i];
        auto expected = matvec(store[w.lift_pred.out_w].value, hidden, &store[w.lift_pred.out_b].value);
        for (size_t i = 0; i < expected.size(); ++i)
            CHECK(tape.val(out).data[i] == doctest::Approx(expected[i]).epsilon(1e-10));
    }
}

TEST_CASE("geom_encode layout, swap antisymmetry, and errors") {
    Box s{0.1, 0.2, 0.4, 0.6};
    Box o{0.3, 0.1, 0.9, 0.5};
    Tensor b = geom_encode(s, o);
    CHECK(b.data[0] == doctest::Approx(0.3));   // w_s
    CHECK(b.data[1] == doctest::Approx(0.4));   // h_s
    CHECK(b.data[2] == doctest::Approx(0.25));  // cx_s
    CHECK(b.data[3] == doctest::Approx(0.4));   // cy_s
    CHECK(b.data[4] == doctest::Approx(0.6));   // w_o
    CHECK(b.data[5] == doctest::Approx(0.4));   // h_o
    CHECK(b.data[6] == doctest::Approx(0.6));   // cx_o
    CHECK(b.data[7] == doctest::Approx(0.3));   // cy_o
    CHECK(b.data[8] == doctest::Approx(std::log((0.12 + 1e-8) / (0.24 + 1e-8))));

    Tensor swapped = geom_encode(o, s);
    for (size_t i = 0; i < 4; ++i) {
        CHECK(swapped.data[i] == b.data[i + 4]);
        CHECK(swapped.data[i + 4] == b.data[i]);
    }
    CHECK(swapped.data[8] == -b.data[8]);  // exact negation by construction

    CHECK(geom_encode(s, s).data[8] == 0.0);
    CHECK_THROWS_AS(geom_encode(Box{0.5, 0.5, 0.5, 0.9}, o), std::invalid_argument);
}

TEST_CASE("geom_rope range, zero-weight identity, and reference evaluation") {
    ParamStore store;
    CarpeWeights w = CarpeWeights::create(store, tiny_dims(), HeadKind::Carpe, true, 9);

    SUBCASE("components lie in [-1, 1]") {
        Tape tape(false);
        ParamBinding params(tape, store);
        Var out = geom_rope(tape, params, w, tape.constant(init_vector(9, 10, 2.0)));
        for (double v : tape.val(out).data) {
            CHECK(v >= -1.0);
            CHECK(v <= 1.0);
        }
    }

    SUBCASE("zero nets give sin(0)=0 and cos(0)=1") {
        ParamStore s2;
        CarpeWeights w2 = CarpeWeights::create(s2, tiny_dims(), HeadKind::Carpe, true, 11);
        for (int idx : {w2.f1_w1, w2.f1_w2, w2.f2_w1, w2.f2_w2}) s2[idx].value.zero();
        Tape tape(false);
        ParamBinding params(tape, s2);
        Var out = geom_rope(tape, params, w2, tape.constant(init_vector(9, 12, 1.0)));
        const Tensor& v = tape.val(out);
        REQUIRE(v.size() == 8);
        for (size_t i = 0; i < 4; ++i) CHECK(v.data[i] == 0.0);
        for (size_t i = 4; i < 8; ++i) CHECK(v.data[i] == 1.0);
    }

    SUBCASE("random input matches the reference formula") {
        Tape tape(false);
        ParamBinding params(tape, store);
        Tensor b = init_vector(9, 13, 1.0);
        Var out = geom_rope(tape, params, w, tape.constant(b));
        std::vector<double> bv(b.data.begin(), b.data.end());
        auto h1 = matvec(store[w.f1_w1].value, bv, &store[w.f1_b1].value);
        for (double& v : h1) v = std::tanh(v);
        auto f1 = matvec(store[w.f1_w2].value, h1, &store[w.f1_b2].value);
        auto h2 = matvec(store[w.f2_w1].value, bv, &store[w.f2_b1].value);
        for (double& v : h2) v = std::tanh(v);
        auto f2 = matvec(store[w.f2_w2].value, h2, &store[w.f2_b2].value);
        for (size_t i = 0; i < f1.size(); ++i)
            CHECK(tape.val(out).data[i] == doctest::Approx(std::sin(f1[i])).epsilon(1e-12));
        for (size_t i = 0; i < f2.size(); ++i)
            CHECK(tape.val(out).data[4 + i] == doctest::Approx(std::cos(f2[i])).epsilon(1e-12));
    }
}

namespace {

struct AttendFixture {
    ParamStore store;
    CarpeWeights w;
    AttendFixture(uint64_t seed, bool randomize_out = true)
        : w(CarpeWeights::create(store, tiny_dims(), HeadKind::Carpe, true, seed)) {
        if (randomize_out) {
            store[w.attn_wo].value = init_matrix(16, 16, mix64(seed, 100));
            store[w.head_bias_proj].value = init_matrix(2, 8, mix64(seed, 101));
        }
    }
    AttendContext context(Tape& tape, ParamBinding& params, size_t k_obj) {
        std::vector<Var> lifted;
        Var emb = params(w.emb_obj);
        for (size_t k = 0; k < k_obj; ++k)
            lifted.push_back(swiglu_lift(tape, params, w.lift_obj, tape.row(emb, k)));
        return make_attend_context(tape, params, w, tape.stack_rows(lifted));
    }
};

}  // namespace

TEST_CASE("cross_attend is the identity with zero output projection") {
    AttendFixture f(21, false);  // fresh create keeps attn_wo at zero
    Tape tape(false);
    ParamBinding params(tape, f.store);
    AttendContext ctx = f.context(tape, params, 4);
    Tensor x = init_vector(16, 22, 1.0);
    Var out = cross_attend(tape, params, f.w, tape.constant(x), ctx);
    for (size_t i = 0; i < x.size(); ++i) CHECK(tape.val(out).data[i] == x.data[i]);
}

TEST_CASE("cross_attend with a single key gives softmax weight 1 regardless of bias") {
    AttendFixture f(23);
    Tape tape(false);
    ParamBinding params(tape, f.store);
    AttendContext ctx = f.context(tape, params, 1);
    Tensor x = init_vector(16, 24, 1.0);
    AttentionProbe probe;
    Var b_geo = geom_rope(tape, params, f.w, tape.constant(init_vector(9, 25, 1.0)));
    cross_attend(tape, params, f.w, tape.constant(x), ctx, b_geo, &probe);
    REQUIRE(probe.weights.rows() == 2);
    REQUIRE(probe.weights.cols() == 1);
    CHECK(probe.weights.at(0, 0) == 1.0);
    CHECK(probe.weights.at(1, 0) == 1.0);
}

TEST_CASE("per-head additive bias never changes the attention output (softmax shift invariance)") {
    AttendFixture f(26);
    Tape tape(false);
    ParamBinding params(tape, f.store);
    AttendContext ctx = f.context(tape, params, 4);
    Tensor x = init_vector(16, 27, 1.0);
    Var b_geo = geom_rope(tape, params, f.w, tape.constant(init_vector(9, 28, 1.0)));
    Var with_bias = cross_attend(tape, params, f.w, tape.constant(x), ctx, b_geo);
    Var without = cross_attend(tape, params, f.w, tape.constant(x), ctx);
    for (size_t i = 0; i < 16; ++i)
        CHECK(tape.val(with_bias).data[i] == doctest::Approx(tape.val(without).data[i]).epsilon(1e-12));
}

TEST_CASE("cross_attend softmax rows sum to 1 in every head") {
    AttendFixture f(29);
    Tape tape(false);
    ParamBinding params(tape, f.store);
    AttendContext ctx = f.context(tape, params, 4);
    AttentionProbe probe;
    Var b_geo = geom_rope(tape, params, f.w, tape.constant(init_vector(9, 30, 1.0)));
    cross_attend(tape, params, f.w, tape.constant(init_vector(16, 31, 1.0)), ctx, b_geo, &probe);
    for (size_t a = 0; a < probe.weights.rows(); ++a) {
        double sum = 0.0;
        for (size_t k = 0; k < probe.weights.cols(); ++k) sum += probe.weights.at(a, k);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("compose_relation is unit-norm, order-sensitive, and matches reference") {
    ParamStore store;
    CarpeWeights w = CarpeWeights::create(store, tiny_dims(), HeadKind::Carpe, false, 33);
    Tape tape(false);
    ParamBinding params(tape, store);
    Tensor a = init_vector(16, 34, 1.0);
    Tensor b = init_vector(16, 35, 1.0);
    Var rab = compose_relation(tape, params, w, tape.constant(a), tape.constant(b));
    Var rba = compose_relation(tape, params, w, tape.constant(b), tape.constant(a));

    double norm = 0.0, diff = 0.0;
    for (size_t i = 0; i < 16; ++i) {
        norm += tape.val(rab).data[i] * tape.val(rab).data[i];
        diff += std::fabs(tape.val(rab).data[i] - tape.val(rba).data[i]);
    }
    CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(diff > 1e-3);

    // reference: concat -> linear -> layernorm -> l2 normalize
    std::vector<double> cat(a.data.begin(), a.data.end());
    cat.insert(cat.end(), b.data.begin(), b.data.end());
    auto lin = matvec(store[w.comp_w].value, cat, &store[w.comp_b].value);
    double mu = 0.0;
    for (double v : lin) mu += v;
    mu /= lin.size();
    double var = 0.0;
    for (double v : lin) var += (v - mu) * (v - mu);
    var /= lin.size();
    std::vector<double> normed(lin.size());
    for (size_t i = 0; i < lin.size(); ++i) {
        normed[i] = store[w.comp_ln_g].value.data[i] * (lin[i] - mu) / std::sqrt(var + 1e-5) +
                    store[w.comp_ln_b].value.data[i];
    }
    double n2 = 0.0;
    for (double v : normed) n2 += v * v;
    n2 = std::sqrt(n2);
    for (size_t i = 0; i < normed.size(); ++i)
        CHECK(tape.val(rab).data[i] == doctest::Approx(normed[i] / n2).epsilon(1e-9));
}

TEST_CASE("score_predicates cosine scoring identities") {
    size_t d = 8, k_pred = 3;
    PrototypeBank bank = PrototypeBank::create(k_pred, d);

    Tape tape(false);
    std::vector<Var> protos;
    for (size_t k = 0; k < k_pred; ++k) protos.push_back(tape.constant(init_vector(d, 40 + k, 1.0)));

    SUBCASE("r equal to a unit prototype scores 1/tau as the max") {
        Tensor unit = init_vector(d, 44, 1.0);
        double norm = 0.0;
        for (double v : unit.data) norm += v * v;
        for (double& v : unit.data) v /= std::sqrt(norm);
        std::vector<Var> ps = protos;
        ps[1] = tape.constant(unit);
        Var logits = score_predicates(tape, tape.constant(unit), ps, bank, 1.0);
        CHECK(tape.val(logits).data[1] == doctest::Approx(1.0).epsilon(1e-12));
        for (size_t k = 0; k < k_pred; ++k) CHECK(tape.val(logits).data[k] <= 1.0 + 1e-12);
    }

    SUBCASE("positive scaling of r leaves logits unchanged; halving tau doubles them") {
        Tensor r = init_vector(d, 45, 1.0);
        Tensor r3 = r;
        for (double& v : r3.data) v *= 3.0;
        Var l1 = score_predicates(tape, tape.constant(r), protos, bank, 0.2);
        Var l2 = score_predicates(tape, tape.constant(r3), protos, bank, 0.2);
        Var l3 = score_predicates(tape, tape.constant(r), protos, bank, 0.1);
        for (size_t k = 0; k < k_pred; ++k) {
            CHECK(tape.val(l1).data[k] == doctest::Approx(tape.val(l2).data[k]).epsilon(1e-12));
            CHECK(tape.val(l3).data[k] == doctest::Approx(2.0 * tape.val(l1).data[k]).epsilon(1e-12));
        }
    }

    SUBCASE("initialized EMA entries are used instead of the lifted prototypes") {
        PrototypeBank b2 = PrototypeBank::create(k_pred, d);
        std::vector<std::pair<Tensor, int>> reps;
        Tensor target = init_vector(d, 46, 1.0);
        reps.emplace_back(target, 1);
        ema_update(b2, reps, false);
        Tensor r = init_vector(d, 47, 1.0);
        Var with_ema = score_predicates(tape, tape.constant(r), protos, b2, 1.0);
        // reference cosine against the EMA row
        double na = 0, nb = 0, ab = 0;
        for (size_t i = 0; i < d; ++i) {
            na += r.data[i] * r.data[i];
            nb += target.data[i] * target.data[i];
            ab += r.data[i] * target.data[i];
        }
        CHECK(tape.val(with_ema).data[1] ==
              doctest::Approx(ab / std::sqrt(na * nb)).epsilon(1e-12));
    }

    SUBCASE("zero-norm prototype is a configuration error") {
        std::vector<Var> ps = protos;
        ps[0] = tape.constant(Tensor::vec(d));
        CHECK_THROWS_AS(score_predicates(tape, tape.constant(init_vector(d, 48, 1.0)), ps, bank, 0.1),
                        std::runtime_error);
    }
}

TEST_CASE("ema_update initialization, default momentum step, and closed form") {
    size_t d = 6;
    PrototypeBank bank = PrototypeBank::create(3, d);

    Tensor v = init_vector(d, 50, 1.0);
    ema_update(bank, {{v, 2}}, false);
    CHECK(bank.init_mask[2] == 1);
    CHECK(bank.init_mask[0] == 0);
    for (size_t i = 0; i < d; ++i) CHECK(bank.ema.at(2, i) == v.data[i]);

    SUBCASE("single step blends with m = 0.999") {
        Tensor w = init_vector(d, 51, 1.0);
        Tensor before = bank.ema;
        ema_update(bank, {{w, 2}}, false);
        for (size_t i = 0; i < d; ++i)
            CHECK(bank.ema.at(2, i) ==
                  doctest::Approx(0.999 * before.at(2, i) + 0.001 * w.data[i]).epsilon(1e-12));
    }

    SUBCASE("constant target: |ema - w| decays as m^T") {
        Tensor w = init_vector(d, 52, 1.0);
        Tensor start = bank.ema;
        const int T = 50;
        for (int t = 0; t < T; ++t) ema_update(bank, {{w, 2}}, false);
        double decay = std::pow(0.999, T);
        for (size_t i = 0; i < d; ++i) {
            double expect = w.data[i] + decay * (start.at(2, i) - w.data[i]);
            CHECK(bank.ema.at(2, i) == doctest::Approx(expect).epsilon(1e-9));
        }
    }

    SUBCASE("classes absent from the batch stay untouched") {
        Tensor before = bank.ema;
        ema_update(bank, {{init_vector(d, 53, 1.0), 0}}, false);
        for (size_t i = 0; i < d; ++i) CHECK(bank.ema.at(2, i) == before.at(2, i));
    }

    SUBCASE("renormalization keeps prototypes unit-norm") {
        PrototypeBank b2 = PrototypeBank::create(2, d);
        Rng rng(54);
        for (int step = 0; step < 100; ++step) {
            Tensor r = Tensor::vec(d);
            double norm = 0.0;
            for (double& x : r.data) {
                x = rng.gaussian();
                norm += x * x;
            }
            for (double& x : r.data) x /= std::sqrt(norm);
            ema_update(b2, {{r, step % 2}}, true);
        }
        for (size_t k = 0; k < 2; ++k) {
            double norm = 0.0;
            for (size_t i = 0; i < d; ++i) norm += b2.ema.at(k, i) * b2.ema.at(k, i);
            CHECK(std::sqrt(norm) == doctest::Approx(1.0).epsilon(1e-9));
        }
    }

    SUBCASE("label out of range is an input error") {
        CHECK_THROWS_AS(ema_update(bank, {{v, 7}}), std::invalid_argument);
    }
}

TEST_CASE("gated_fusion_baseline saturation and reference evaluation") {
    ParamStore store;
    CarpeWeights w = CarpeWeights::create(store, tiny_dims(), HeadKind::Gated, false, 60);
    Tensor t = init_vector(6, 61, 1.0);
    Tensor v = init_vector(16, 62, 1.0);
    std::vector<double> tv(t.data.begin(), t.data.end());
    auto h = matvec(store[w.gsub_w1].value, tv, &store[w.gsub_b1].value);
    for (double& x : h) x = std::max(0.0, x);
    auto lift = matvec(store[w.gsub_w2].value, h, &store[w.gsub_b2].value);

    SUBCASE("large negative gate bias shuts the visual path off") {
        store[w.gate_sub_b].value.data[0] = -1000.0;
        store[w.gate_sub_w].value.zero();
        Tape tape(false);
        ParamBinding params(tape, store);
        Var out = gated_fusion_baseline(tape, params, w, tape.constant(t), tape.constant(v), true);
        for (size_t i = 0; i < 16; ++i)
            CHECK(tape.val(out).data[i] == doctest::Approx(lift[i]).epsilon(1e-10));
    }

    SUBCASE("large positive gate bias passes the visual path through") {
        store[w.gate_sub_b].value.data[0] = 1000.0;
        store[w.gate_sub_w].value.zero();
        Tape tape(false);
        ParamBinding params(tape, store);
        Var out = gated_fusion_baseline(tape, params, w, tape.constant(t), tape.constant(v), true);
        for (size_t i = 0; i < 16; ++i)
            CHECK(tape.val(out).data[i] == doctest::Approx(lift[i] + v.data[i]).epsilon(1e-10));
    }

    SUBCASE("random inputs match the gate formula") {
        Tape tape(false);
        ParamBinding params(tape, store);
        Var out = gated_fusion_baseline(tape, params, w, tape.constant(t), tape.constant(v), true);
        std::vector<double> cat(t.data.begin(), t.data.end());
        cat.insert(cat.end(), v.data.begin(), v.data.end());
        auto gate_pre = matvec(store[w.gate_sub_w].value, cat, &store[w.gate_sub_b].value);
        double g = sigmoid(gate_pre[0]);
        for (size_t i = 0; i < 16; ++i)
            CHECK(tape.val(out).data[i] == doctest::Approx(lift[i] + g * v.data[i]).epsilon(1e-10));
    }
}
