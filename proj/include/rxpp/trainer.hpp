#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rxpp/metrics.hpp"
#include "rxpp/model.hpp"

namespace rxpp {

struct Dataset {
    SynthConfig synth;
    uint64_t seed = 0;  // pyramid noise derives from this, never serialized
    std::vector<SceneSpec> scenes;
};

struct TrainConfig {
    double lr = 1e-4;
    double weight_decay = 0.01;
    int epochs = 10;
    int micro_batch = 2;   // scenes per micro-batch
    int grad_accum = 4;    // micro-batches per optimizer step
    double focal_gamma = 2.0;
    double tau_la = 1.0;
    bool ema_enabled = true;
    double det_jitter = 0.0;
    double det_fp_rate = 0.0;
    int proposals = 100;
    double iou_thresh = 0.5;
    std::vector<int> k_values = {20, 50, 100};
    int eval_every = 1;  // train-split metric cadence in epochs (0 = final only)
    uint64_t seed = 0;

    void validate() const;
};

// Train-split predicate frequencies with add-one smoothing (strictly
// positive, sums to 1).
std::vector<double> predicate_priors(const Dataset& data, int num_predicates);

// Adjusted logits z + tau_la * log(prior), then focal loss on the softmax.
Var logit_adjusted_focal_loss(Tape& tape, Var logits, int label, const std::vector<double>& priors,
                              double tau_la, double gamma);

// Decoupled-weight-decay adaptive optimizer (decay on weight matrices only).
class AdamW {
  public:
    AdamW(double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : beta1_(beta1), beta2_(beta2), eps_(eps) {}
    void step(ParamStore& params, double lr, double weight_decay);
    long long steps_taken() const { return t_; }

  private:
    double beta1_, beta2_, eps_;
    long long t_ = 0;
    std::vector<Tensor> m_, v_;
};

// Half-cosine from lr0 at step 0 to exactly 0 at the final step.
double cosine_lr(double lr0, long long step, long long total_steps);

struct EpochStats {
    int epoch = 0;
    double mean_loss = 0.0;
    double lr_last = 0.0;
    bool has_metrics = false;
    MetricReport train_metrics;
};

struct TrainResult {
    std::vector<EpochStats> history;
    long long optimizer_steps = 0;
};

TrainResult train(RelationModel& model, const Dataset& data, const TrainConfig& config);

struct EvalOptions {
    int proposals = 100;
    double iou_thresh = 0.5;
    std::vector<int> k_values = {20, 50, 100};
    double det_jitter = 0.0;
    double det_fp_rate = 0.0;
    uint64_t seed = 0;
    bool collect_flops = false;
    bool expand_all_predicates = false;  // one ranked candidate per predicate
};

struct EvalOutput {
    MetricReport report;
    std::vector<SceneGraphPrediction> predictions;
    double relation_head_flops = 0.0;
};

EvalOutput evaluate_model(const RelationModel& model, const Dataset& data,
                          const EvalOptions& options);

// Finite-difference validation of every registered differentiable operation.
struct GradCheckResult {
    std::string op;
    double max_rel_error = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

std::vector<std::string> gradcheck_ops();
GradCheckResult grad_check(const std::string& op, uint64_t seed);

}  // namespace rxpp
