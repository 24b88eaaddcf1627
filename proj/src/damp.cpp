#include "rxpp/damp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rxpp {

const char* gather_variant_name(GatherVariant v) {
    switch (v) {
        case GatherVariant::RoiAlign: return "roialign";
        case GatherVariant::DA: return "da";
        case GatherVariant::DAP: return "dap";
        case GatherVariant::DAM: return "dam";
        default: return "damp";
    }
}

GatherVariant parse_gather_variant(const std::string& name) {
    if (name == "roialign") return GatherVariant::RoiAlign;
    if (name == "da") return GatherVariant::DA;
    if (name == "dap") return GatherVariant::DAP;
    if (name == "dam") return GatherVariant::DAM;
    if (name == "damp") return GatherVariant::DAMP;
    throw std::runtime_error("unknown extractor variant: " + name);
}

DampWeights DampWeights::create(ParamStore& store, GatherVariant variant, size_t c3, size_t c4,
                                size_t c5, size_t out_dim, uint64_t seed) {
    DampWeights w;
    w.out_dim = out_dim;
    auto s = [&](const char* tag) { return mix64(seed, hash_str(tag)); };
    if (variant == GatherVariant::RoiAlign) {
        w.w_roi = store.add("extract.w_roi", init_matrix(out_dim, c3 + c4 + c5, s("w_roi")), true);
        return w;
    }
    w.w_p3 = store.add("extract.w_p3", init_matrix(out_dim, c3, s("w_p3")), true);
    w.w_p4 = store.add("extract.w_p4", init_matrix(out_dim, c4, s("w_p4")), true);
    w.w_p5 = store.add("extract.w_p5", init_matrix(out_dim, c5, s("w_p5")), true);
    if (variant == GatherVariant::DAM || variant == GatherVariant::DAMP) {
        w.ln_gamma = store.add("extract.ln_gamma", ones(3 * out_dim), false);
        w.ln_beta = store.add("extract.ln_beta", Tensor::vec(3 * out_dim), false);
        w.w_fuse = store.add("extract.w_fuse", init_matrix(out_dim, 3 * out_dim, s("w_fuse")), true);
    }
    return w;
}

std::vector<double> gather_gaussian(const FeaturePyramid& pyramid, Level level,
                                    std::pair<int, int> anchor, int radius) {
    if (radius < 0) throw std::invalid_argument("gather_gaussian: radius must be >= 0");
    const LevelGrid& grid = pyramid.level(level);
    auto [r, c] = anchor;
    if (r < 0 || c < 0 || static_cast<size_t>(r) >= grid.height || static_cast<size_t>(c) >= grid.width)
        throw std::invalid_argument("gather_gaussian: anchor out of bounds");

    double z = 0.0;
    for (int dr = -radius; dr <= radius; ++dr)
        for (int dc = -radius; dc <= radius; ++dc) z += std::exp(-static_cast<double>(dr * dr + dc * dc));

    std::vector<double> out(grid.channels, 0.0);
    int hmax = static_cast<int>(grid.height) - 1;
    int wmax = static_cast<int>(grid.width) - 1;
    for (int dr = -radius; dr <= radius; ++dr) {
        for (int dc = -radius; dc <= radius; ++dc) {
            double w = std::exp(-static_cast<double>(dr * dr + dc * dc)) / z;
            const double* cell = grid.cell(static_cast<size_t>(std::clamp(r + dr, 0, hmax)),
                                           static_cast<size_t>(std::clamp(c + dc, 0, wmax)));
            for (size_t ch = 0; ch < grid.channels; ++ch) out[ch] += w * cell[ch];
        }
    }
    return out;
}

namespace {

// Bilinear sample at continuous grid coordinates (cell centers at integers),
// clamped at the borders.
void bilinear_sample(const LevelGrid& grid, double gy, double gx, std::vector<double>& acc) {
    int hmax = static_cast<int>(grid.height) - 1;
    int wmax = static_cast<int>(grid.width) - 1;
    gy = std::clamp(gy, 0.0, static_cast<double>(hmax));
    gx = std::clamp(gx, 0.0, static_cast<double>(wmax));
    int y0 = static_cast<int>(std::floor(gy));
    int x0 = static_cast<int>(std::floor(gx));
    int y1 = std::min(y0 + 1, hmax);
    int x1 = std::min(x0 + 1, wmax);
    double fy = gy - y0, fx = gx - x0;
    const double* c00 = grid.cell(y0, x0);
    const double* c01 = grid.cell(y0, x1);
    const double* c10 = grid.cell(y1, x0);
    const double* c11 = grid.cell(y1, x1);
    for (size_t ch = 0; ch < grid.channels; ++ch) {
        double top = c00[ch] * (1.0 - fx) + c01[ch] * fx;
        double bot = c10[ch] * (1.0 - fx) + c11[ch] * fx;
        acc[ch] += top * (1.0 - fy) + bot * fy;
    }
}

}  // namespace

std::vector<double> roi_align_baseline(const FeaturePyramid& pyramid, const Detection& det,
                                       int grid) {
    if (grid < 1) throw std::invalid_argument("roi_align_baseline: grid must be >= 1");
    require_valid_box(det.box, "roi_align_baseline");
    std::vector<double> out;
    for (Level l : kLevels) {
        const LevelGrid& lg = pyramid.level(l);
        std::vector<double> acc(lg.channels, 0.0);
        for (int i = 0; i < grid; ++i) {
            for (int j = 0; j < grid; ++j) {
                // half-cell offsets inside the box, in normalized coords
                double ny = det.box.y1 + (i + 0.5) * det.box.height() / grid;
                double nx = det.box.x1 + (j + 0.5) * det.box.width() / grid;
                // continuous grid coords: cell centers at (idx + 0.5) / extent
                bilinear_sample(lg, ny * static_cast<double>(lg.height) - 0.5,
                                nx * static_cast<double>(lg.width) - 0.5, acc);
            }
        }
        double inv = 1.0 / (static_cast<double>(grid) * grid);
        for (double& d : acc) d *= inv;
        out.insert(out.end(), acc.begin(), acc.end());
    }
    return out;
}

namespace {

Tensor to_tensor(std::vector<double> v) {
    Tensor t;
    t.shape = {v.size()};
    t.data = std::move(v);
    return t;
}

Var project_level(Tape& tape, ParamBinding& params, const DampWeights& w, Level level, Var gathered) {
    int idx = level == Level::P3 ? w.w_p3 : (level == Level::P4 ? w.w_p4 : w.w_p5);
    return tape.linear(params(idx), gathered);
}

}  // namespace

Var extract(Tape& tape, ParamBinding& params, const FeaturePyramid& pyramid, const Detection& det,
            GatherVariant variant, const DampWeights& weights) {
    if (weights.out_dim == 0) throw std::runtime_error("extract: weights not initialized");
    switch (variant) {
        case GatherVariant::DA: {
            Var g = tape.constant(to_tensor(gather_gaussian(pyramid, det.source_level, {det.r, det.c}, 0)));
            return project_level(tape, params, weights, det.source_level, g);
        }
        case GatherVariant::DAP: {
            Var g = tape.constant(to_tensor(gather_gaussian(pyramid, det.source_level, {det.r, det.c}, 1)));
            return project_level(tape, params, weights, det.source_level, g);
        }
        case GatherVariant::DAM:
        case GatherVariant::DAMP: {
            int radius = variant == GatherVariant::DAMP ? 1 : 0;
            std::vector<Var> projected;
            for (Level l : kLevels) {
                // re-snap the box center on every level
                auto anchor = snap_anchor(det.box, l, pyramid);
                Var g = tape.constant(to_tensor(gather_gaussian(pyramid, l, anchor, radius)));
                projected.push_back(project_level(tape, params, weights, l, g));
            }
            Var cat = tape.concat(projected);
            Var normed = tape.layernorm(cat, params(weights.ln_gamma), params(weights.ln_beta));
            return tape.linear(params(weights.w_fuse), normed);
        }
        case GatherVariant::RoiAlign: {
            Var g = tape.constant(to_tensor(roi_align_baseline(pyramid, det, 7)));
            return tape.linear(params(weights.w_roi), g);
        }
    }
    throw std::runtime_error("extract: unknown variant");
}

long long gather_count(GatherVariant variant, long long n_objects) {
    if (n_objects < 0) throw std::invalid_argument("gather_count: n_objects must be >= 0");
    switch (variant) {
        case GatherVariant::DAMP: return 27 * n_objects;
        case GatherVariant::RoiAlign: return 147 * n_objects;
        case GatherVariant::DA: return n_objects;
        case GatherVariant::DAP: return 9 * n_objects;
        case GatherVariant::DAM: return 3 * n_objects;
    }
    throw std::runtime_error("gather_count: unknown variant");
}

}  // namespace rxpp
