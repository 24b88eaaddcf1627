#include "rxpp/global_context.hpp"

#include <cmath>
#include <stdexcept>

namespace rxpp {

AifiWeights AifiWeights::create(ParamStore& store, size_t c5, size_t d_ctx, int heads,
                                size_t node_dim, uint64_t seed) {
    if (heads <= 0 || d_ctx % static_cast<size_t>(heads) != 0)
        throw std::runtime_error("AifiWeights: d_ctx must be divisible by heads");
    if (d_ctx % 4 != 0) throw std::runtime_error("AifiWeights: d_ctx must be divisible by 4");
    AifiWeights w;
    w.d_ctx = d_ctx;
    w.heads = heads;
    auto s = [&](const char* tag) { return mix64(seed, hash_str(tag)); };
    w.in_w = store.add("aifi.in_w", init_matrix(d_ctx, c5, s("in_w")), true);
    w.in_b = store.add("aifi.in_b", Tensor::vec(d_ctx), false);
    w.wq = store.add("aifi.wq", init_matrix(d_ctx, d_ctx, s("wq")), true);
    w.bq = store.add("aifi.bq", Tensor::vec(d_ctx), false);
    w.wk = store.add("aifi.wk", init_matrix(d_ctx, d_ctx, s("wk")), true);
    w.wv = store.add("aifi.wv", init_matrix(d_ctx, d_ctx, s("wv")), true);
    w.bv = store.add("aifi.bv", Tensor::vec(d_ctx), false);
    w.wo = store.add("aifi.wo", init_matrix(d_ctx, d_ctx, s("wo")), true);
    w.bo = store.add("aifi.bo", Tensor::vec(d_ctx), false);
    w.ln1_g = store.add("aifi.ln1_g", ones(d_ctx), false);
    w.ln1_b = store.add("aifi.ln1_b", Tensor::vec(d_ctx), false);
    w.ln2_g = store.add("aifi.ln2_g", ones(d_ctx), false);
    w.ln2_b = store.add("aifi.ln2_b", Tensor::vec(d_ctx), false);
    w.ffn_w1 = store.add("aifi.ffn_w1", init_matrix(2 * d_ctx, d_ctx, s("ffn_w1")), true);
    w.ffn_b1 = store.add("aifi.ffn_b1", Tensor::vec(2 * d_ctx), false);
    w.ffn_w2 = store.add("aifi.ffn_w2", init_matrix(d_ctx, 2 * d_ctx, s("ffn_w2")), true);
    w.ffn_b2 = store.add("aifi.ffn_b2", Tensor::vec(d_ctx), false);
    w.fuse_w = store.add("aifi.fuse_w", init_matrix(node_dim, node_dim + d_ctx, s("fuse_w")), true);
    w.fuse_b = store.add("aifi.fuse_b", Tensor::vec(node_dim), false);
    return w;
}

Tensor position_embedding_2d(size_t height, size_t width, size_t dim) {
    if (dim % 4 != 0) throw std::invalid_argument("position_embedding_2d: dim % 4 != 0");
    Tensor pe = Tensor::mat(height * width, dim);
    size_t quarter = dim / 4;
    for (size_t r = 0; r < height; ++r) {
        for (size_t c = 0; c < width; ++c) {
            double* row = &pe.data[(r * width + c) * dim];
            for (size_t i = 0; i < quarter; ++i) {
                double freq = std::pow(10000.0, -2.0 * static_cast<double>(i) / (static_cast<double>(dim) / 2.0));
                row[2 * i] = std::sin(static_cast<double>(r) * freq);
                row[2 * i + 1] = std::cos(static_cast<double>(r) * freq);
                row[dim / 2 + 2 * i] = std::sin(static_cast<double>(c) * freq);
                row[dim / 2 + 2 * i + 1] = std::cos(static_cast<double>(c) * freq);
            }
        }
    }
    return pe;
}

Var aifi_encode(Tape& tape, ParamBinding& params, const AifiWeights& w, const LevelGrid& p5,
                bool use_position_embedding, AttentionProbe* probe) {
    size_t T = p5.height * p5.width;
    if (T == 0) throw std::invalid_argument("aifi_encode: empty grid");

    Tensor cells = Tensor::mat(T, p5.channels);
    cells.data = p5.data;  // row-major cells match token order
    Var tokens = tape.linear_rows(params(w.in_w), tape.constant(std::move(cells)), params(w.in_b));
    if (use_position_embedding) {
        tokens = tape.add(tokens, tape.constant(position_embedding_2d(p5.height, p5.width, w.d_ctx)));
    }

    Var normed = tape.layernorm_rows(tokens, params(w.ln1_g), params(w.ln1_b));
    Var q = tape.linear_rows(params(w.wq), normed, params(w.bq));
    Var k = tape.linear_rows(params(w.wk), normed);
    Var vv = tape.linear_rows(params(w.wv), normed, params(w.bv));
    if (probe != nullptr) {
        // recompute softmax rows from the same Q/K values for inspection
        const Tensor& qv = tape.val(q);
        const Tensor& kv = tape.val(k);
        size_t D = w.d_ctx, dh = D / static_cast<size_t>(w.heads);
        double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
        probe->weights = Tensor::mat(static_cast<size_t>(w.heads) * T, T);
        for (int a = 0; a < w.heads; ++a) {
            size_t off = static_cast<size_t>(a) * dh;
            for (size_t t = 0; t < T; ++t) {
                double* row = &probe->weights.data[(static_cast<size_t>(a) * T + t) * T];
                double mx = -1e300;
                for (size_t u = 0; u < T; ++u) {
                    double s = 0.0;
                    for (size_t j = 0; j < dh; ++j) s += qv.at(t, off + j) * kv.at(u, off + j);
                    row[u] = s * inv_sqrt;
                    mx = std::max(mx, row[u]);
                }
                double z = 0.0;
                for (size_t u = 0; u < T; ++u) {
                    row[u] = std::exp(row[u] - mx);
                    z += row[u];
                }
                for (size_t u = 0; u < T; ++u) row[u] /= z;
            }
        }
    }
    Var attended = tape.mhsa_rows(q, k, vv, w.heads);
    Var attn_out = tape.linear_rows(params(w.wo), attended, params(w.bo));
    Var mid = tape.add(tokens, attn_out);

    Var normed2 = tape.layernorm_rows(mid, params(w.ln2_g), params(w.ln2_b));
    Var hidden = tape.silu(tape.linear_rows(params(w.ffn_w1), normed2, params(w.ffn_b1)));
    Var ffn_out = tape.linear_rows(params(w.ffn_w2), hidden, params(w.ffn_b2));
    return tape.add(mid, ffn_out);
}

Var pool_context(Tape& tape, Var grid) {
    return tape.mean_rows(grid);
}

Var fuse_context(Tape& tape, ParamBinding& params, const AifiWeights& w, Var node, Var g) {
    const Var parts[2] = {node, g};
    Var cat = tape.concat(parts);
    return tape.add(node, tape.linear(params(w.fuse_w), cat, params(w.fuse_b)));
}

}  // namespace rxpp
