#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rxpp/param_store.hpp"
#include "rxpp/pyramid.hpp"
#include "rxpp/tape.hpp"

namespace rxpp {

enum class GatherVariant { RoiAlign, DA, DAP, DAM, DAMP };

const char* gather_variant_name(GatherVariant v);
GatherVariant parse_gather_variant(const std::string& name);

// Parameter handles for the extraction head. Only the entries a variant
// needs are allocated; the rest stay -1 so parameter counts reflect the
// configuration actually trained.
struct DampWeights {
    int w_p3 = -1, w_p4 = -1, w_p5 = -1;  // per-level projections C_i -> D
    int ln_gamma = -1, ln_beta = -1;      // layer norm over the 3D concat
    int w_fuse = -1;                      // 3D -> D
    int w_roi = -1;                       // (C3+C4+C5) -> D, RoiAlign baseline only
    size_t out_dim = 0;

    static DampWeights create(ParamStore& store, GatherVariant variant, size_t c3, size_t c4,
                              size_t c5, size_t out_dim, uint64_t seed);
};

// Gaussian-weighted window gather around an anchor cell. Out-of-range
// neighbours are index-clamped so the weights always sum to exactly 1.
std::vector<double> gather_gaussian(const FeaturePyramid& pyramid, Level level,
                                    std::pair<int, int> anchor, int radius);

// grid x grid bilinear samples per level at half-cell offsets inside the box,
// average-pooled per level and concatenated across levels.
std::vector<double> roi_align_baseline(const FeaturePyramid& pyramid, const Detection& det,
                                       int grid);

// Variant-dispatched feature extraction onto the tape (the gathers are
// constants; only the projections train).
Var extract(Tape& tape, ParamBinding& params, const FeaturePyramid& pyramid, const Detection& det,
            GatherVariant variant, const DampWeights& weights);

// Gather-op accounting per the variant definitions (per object: DAMP 27,
// RoiAlign 147, DA 1, DAP 9, DAM 3).
long long gather_count(GatherVariant variant, long long n_objects);

}  // namespace rxpp
