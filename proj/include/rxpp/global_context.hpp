#pragma once

#include <cstdint>

#include "rxpp/param_store.hpp"
#include "rxpp/pyramid.hpp"
#include "rxpp/tape.hpp"

namespace rxpp {

// One pre-norm encoder layer over the flattened coarsest level, plus the
// context-fusion map into node space.
struct AifiWeights {
    int in_w = -1, in_b = -1;
    // no key bias: a uniform shift of every key cancels in the softmax
    int wq = -1, bq = -1, wk = -1, wv = -1, bv = -1, wo = -1, bo = -1;
    int ln1_g = -1, ln1_b = -1, ln2_g = -1, ln2_b = -1;
    int ffn_w1 = -1, ffn_b1 = -1, ffn_w2 = -1, ffn_b2 = -1;
    int fuse_w = -1, fuse_b = -1;
    size_t d_ctx = 0;
    int heads = 0;

    static AifiWeights create(ParamStore& store, size_t c5, size_t d_ctx, int heads,
                              size_t node_dim, uint64_t seed);
};

// Fixed 2D sinusoidal position embedding for an H*W token grid (dim % 4 == 0).
Tensor position_embedding_2d(size_t height, size_t width, size_t dim);

// Filled when a probe pointer is passed to aifi_encode: one row of softmax
// weights per (head, query token).
struct AttentionProbe {
    Tensor weights;  // (heads * T) x T
};

// Tokens = projected P5 cells + position embedding, one self-attention /
// feed-forward layer with residuals. Returns the contextualized T x d_ctx
// grid (row-major over cells).
Var aifi_encode(Tape& tape, ParamBinding& params, const AifiWeights& weights, const LevelGrid& p5,
                bool use_position_embedding = true, AttentionProbe* probe = nullptr);

// Arithmetic mean over tokens.
Var pool_context(Tape& tape, Var grid);

// node + W_fuse (node || g) + b
Var fuse_context(Tape& tape, ParamBinding& params, const AifiWeights& weights, Var node, Var g);

}  // namespace rxpp
