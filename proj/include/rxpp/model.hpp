#pragma once

#include <memory>
#include <vector>

#include "rxpp/carpe.hpp"
#include "rxpp/damp.hpp"
#include "rxpp/global_context.hpp"
#include "rxpp/graph_engine.hpp"
#include "rxpp/param_store.hpp"
#include "rxpp/scene_synth.hpp"

namespace rxpp {

struct ModelConfig {
    CarpeDims carpe;
    size_t d_ctx = 64;
    int h_ctx = 4;
    GatherVariant extractor = GatherVariant::DAMP;
    HeadKind head = HeadKind::Carpe;
    bool use_global_context = true;
    bool use_rope = true;
    size_t c_p3 = 32, c_p4 = 48, c_p5 = 64;
    uint64_t init_seed = 0;
};

// The full relation-prediction model: extraction projections, the global
// context encoder, the relation head, and the prototype bank. Parameters are
// allocated only for the configured variant so counts reflect what trains.
class RelationModel {
  public:
    explicit RelationModel(const ModelConfig& config, const Tensor* obj_embeddings = nullptr,
                           const Tensor* pred_embeddings = nullptr);

    const ModelConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    PrototypeBank& bank() { return bank_; }
    const PrototypeBank& bank() const { return bank_; }
    const CarpeWeights& carpe_weights() const { return carpe_; }
    const DampWeights& damp_weights() const { return damp_; }
    const AifiWeights& aifi_weights() const { return aifi_; }

    size_t trainable_parameter_count() const { return params_.total_scalars(); }

    struct PairOutput {
        int subject_index = 0;
        int object_index = 0;
        Var logits;  // K_pred
        Var rep;     // normalized relation representation
    };
    struct SceneForward {
        std::vector<PairOutput> pairs;
        double relation_head_flops = 0.0;
    };

    // Training path: every pair of the (already truncated) detection list on
    // one shared tape.
    SceneForward forward_scene(Tape& tape, ParamBinding& params, const FeaturePyramid& pyramid,
                               const std::vector<Detection>& detections) const;

    // Inference path: chunked grad-free tapes; returns candidates with logits
    // and endpoint confidences filled (theta_pred/theta_rel are computed by
    // score_and_rank).
    std::vector<RelationCandidate> score_scene(const FeaturePyramid& pyramid,
                                               const std::vector<Detection>& detections,
                                               double* relation_head_flops = nullptr) const;

  private:
    struct SceneContext {
        std::vector<Var> node_features;    // per detection, dim D
        std::vector<Var> lifted_pred;      // K_pred lifted predicate prototypes
        AttendContext attend;              // projected bank keys/values (carpe)
    };
    SceneContext encode_scene(Tape& tape, ParamBinding& params, const FeaturePyramid& pyramid,
                              const std::vector<Detection>& detections) const;
    PairOutput score_pair(Tape& tape, ParamBinding& params, const SceneContext& ctx,
                          const std::vector<Detection>& detections, int si, int oi) const;

    ModelConfig config_;
    ParamStore params_;
    PrototypeBank bank_;
    DampWeights damp_;
    AifiWeights aifi_;
    CarpeWeights carpe_;
};

// Greedy one-to-one mapping of detections to ground-truth objects (class
// equality + IoU threshold), -1 where unmatched. Used for training labels.
std::vector<int> map_detections_to_objects(const std::vector<Detection>& detections,
                                           const SceneSpec& scene, double iou_thresh);

}  // namespace rxpp
