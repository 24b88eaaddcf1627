#include "rxpp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace rxpp {

void TrainConfig::validate() const {
    if (grad_accum < 1) throw std::runtime_error("TrainConfig: grad_accum must be >= 1");
    if (micro_batch < 1) throw std::runtime_error("TrainConfig: micro_batch must be >= 1");
    if (epochs < 1) throw std::runtime_error("TrainConfig: epochs must be >= 1");
    if (focal_gamma < 0.0) throw std::runtime_error("TrainConfig: focal_gamma must be >= 0");
    if (tau_la < 0.0) throw std::runtime_error("TrainConfig: tau_la must be >= 0");
    if (lr <= 0.0) throw std::runtime_error("TrainConfig: lr must be positive");
}

std::vector<double> predicate_priors(const Dataset& data, int num_predicates) {
    std::vector<long long> counts(num_predicates, 0);
    long long total = 0;
    for (const SceneSpec& s : data.scenes) {
        for (const Relation& r : s.relations) {
            ++counts[r.predicate];
            ++total;
        }
    }
    std::vector<double> priors(num_predicates);
    double denom = static_cast<double>(total + num_predicates);
    for (int p = 0; p < num_predicates; ++p)
        priors[p] = static_cast<double>(counts[p] + 1) / denom;
    return priors;
}

Var logit_adjusted_focal_loss(Tape& tape, Var logits, int label, const std::vector<double>& priors,
                              double tau_la, double gamma) {
    const Tensor& lv = tape.val(logits);
    if (label < 0 || static_cast<size_t>(label) >= lv.size())
        throw std::invalid_argument("logit_adjusted_focal_loss: label out of range");
    if (priors.size() != lv.size())
        throw std::invalid_argument("logit_adjusted_focal_loss: prior size mismatch");
    double psum = 0.0;
    for (double p : priors) {
        if (p <= 0.0) throw std::invalid_argument("logit_adjusted_focal_loss: priors must be positive");
        psum += p;
    }
    if (std::fabs(psum - 1.0) > 1e-6)
        throw std::invalid_argument("logit_adjusted_focal_loss: priors must sum to 1");
    Tensor adjust = Tensor::vec(priors.size());
    for (size_t i = 0; i < priors.size(); ++i) adjust.data[i] = tau_la * std::log(priors[i]);
    Var adjusted = tape.add(logits, tape.constant(std::move(adjust)));
    Var p = tape.pick(tape.softmax(adjusted), static_cast<size_t>(label));
    return tape.focal_nll(p, gamma);
}

void AdamW::step(ParamStore& params, double lr, double weight_decay) {
    auto& entries = params.entries();
    if (m_.empty()) {
        for (const auto& e : entries) {
            Tensor z = e.value;
            m_.push_back(z.zero());
            v_.push_back(z);
        }
    }
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < entries.size(); ++i) {
        auto& e = entries[i];
        for (size_t j = 0; j < e.value.size(); ++j) {
            double gj = e.grad.data[j];
            m_[i].data[j] = beta1_ * m_[i].data[j] + (1.0 - beta1_) * gj;
            v_[i].data[j] = beta2_ * v_[i].data[j] + (1.0 - beta2_) * gj * gj;
            double mhat = m_[i].data[j] / bc1;
            double vhat = v_[i].data[j] / bc2;
            e.value.data[j] -= lr * mhat / (std::sqrt(vhat) + eps_);
            if (e.decay) e.value.data[j] -= lr * weight_decay * e.value.data[j];
        }
    }
}

double cosine_lr(double lr0, long long step, long long total_steps) {
    if (total_steps <= 1) return lr0;
    double frac = static_cast<double>(step) / static_cast<double>(total_steps - 1);
    return lr0 * 0.5 * (1.0 + std::cos(M_PI * frac));
}

namespace {

struct LabeledScene {
    const SceneSpec* scene;
    FeaturePyramid pyramid;
    std::vector<Detection> detections;
    // predicate label per ordered detection pair (flat n*n, -1 = no relation)
    std::vector<int> pair_labels;
    int n = 0;
};

LabeledScene prepare_scene(const SceneSpec& scene, const Dataset& data, const TrainConfig& cfg) {
    LabeledScene ls;
    ls.scene = &scene;
    ls.pyramid = render_pyramid(scene, data.synth, data.seed);
    auto dets = simulate_detections(scene, ls.pyramid, cfg.det_jitter, cfg.det_fp_rate,
                                    mix64(cfg.seed, hash_str("train_det")));
    ls.detections = rank_and_truncate(std::move(dets), cfg.proposals);
    ls.n = static_cast<int>(ls.detections.size());

    std::vector<int> to_obj = map_detections_to_objects(ls.detections, scene, 0.5);
    std::map<std::pair<int, int>, int> gt;
    for (const Relation& r : scene.relations) gt[{r.subject, r.object}] = r.predicate;
    ls.pair_labels.assign(static_cast<size_t>(ls.n) * ls.n, -1);
    for (int i = 0; i < ls.n; ++i) {
        for (int j = 0; j < ls.n; ++j) {
            if (i == j || to_obj[i] < 0 || to_obj[j] < 0) continue;
            auto it = gt.find({to_obj[i], to_obj[j]});
            if (it != gt.end()) ls.pair_labels[static_cast<size_t>(i) * ls.n + j] = it->second;
        }
    }
    return ls;
}

double grad_norm(const ParamStore& params) {
    double acc = 0.0;
    for (const auto& e : params.entries())
        for (double g : e.grad.data) acc += g * g;
    return std::sqrt(acc);
}

}  // namespace

TrainResult train(RelationModel& model, const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    if (data.scenes.empty()) throw std::runtime_error("train: dataset is empty");

    int num_pred = static_cast<int>(model.config().carpe.k_pred);
    std::vector<double> priors = predicate_priors(data, num_pred);

    size_t scenes_per_step = static_cast<size_t>(cfg.micro_batch) * cfg.grad_accum;
    long long steps_per_epoch =
        static_cast<long long>((data.scenes.size() + scenes_per_step - 1) / scenes_per_step);
    long long total_steps = steps_per_epoch * cfg.epochs;

    AdamW optimizer;
    TrainResult result;
    long long step_index = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<size_t> order(data.scenes.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng(mix64(cfg.seed, hash_str("shuffle"), static_cast<uint64_t>(epoch)));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.uniform_int(0, static_cast<int>(i) - 1)]);

        double epoch_loss_sum = 0.0;
        long long epoch_pair_count = 0;
        double last_lr = 0.0;

        for (size_t group = 0; group < order.size(); group += scenes_per_step) {
            size_t group_end = std::min(order.size(), group + scenes_per_step);
            size_t num_micros = (group_end - group + cfg.micro_batch - 1) / cfg.micro_batch;
            model.params().zero_grads();
            std::vector<std::pair<Tensor, int>> step_reps;

            for (size_t m = 0; m < num_micros; ++m) {
                size_t mb_begin = group + m * cfg.micro_batch;
                size_t mb_end = std::min(group_end, mb_begin + cfg.micro_batch);

                Tape tape(true);
                ParamBinding binding(tape, model.params());
                std::vector<Var> losses;
                std::vector<std::pair<Var, int>> micro_reps;

                for (size_t s = mb_begin; s < mb_end; ++s) {
                    LabeledScene ls = prepare_scene(data.scenes[order[s]], data, cfg);
                    if (ls.n < 2) continue;
                    auto fwd = model.forward_scene(tape, binding, ls.pyramid, ls.detections);
                    for (const auto& pair : fwd.pairs) {
                        int label = ls.pair_labels[static_cast<size_t>(pair.subject_index) * ls.n +
                                                   pair.object_index];
                        if (label < 0) continue;
                        losses.push_back(logit_adjusted_focal_loss(tape, pair.logits, label, priors,
                                                                   cfg.tau_la, cfg.focal_gamma));
                        micro_reps.emplace_back(pair.rep, label);
                    }
                }
                if (losses.empty()) continue;
                Var loss = tape.scale(tape.sum_scalars(losses), 1.0 / static_cast<double>(losses.size()));
                double loss_value = tape.scalar(loss);
                if (!std::isfinite(loss_value)) {
                    std::ostringstream msg;
                    msg << "train: non-finite loss at step " << step_index << " (lr="
                        << cosine_lr(cfg.lr, step_index, total_steps)
                        << ", grad_norm=" << grad_norm(model.params()) << ")";
                    throw std::runtime_error(msg.str());
                }
                tape.backward(loss);
                binding.accumulate_grads(1.0 / static_cast<double>(num_micros));
                epoch_loss_sum += loss_value * static_cast<double>(losses.size());
                epoch_pair_count += static_cast<long long>(losses.size());
                for (auto& [rep, label] : micro_reps) step_reps.emplace_back(tape.val(rep), label);
            }

            last_lr = cosine_lr(cfg.lr, step_index, total_steps);
            optimizer.step(model.params(), last_lr, cfg.weight_decay);
            if (cfg.ema_enabled && !step_reps.empty()) ema_update(model.bank(), step_reps);
            ++step_index;
        }

        EpochStats stats;
        stats.epoch = epoch;
        stats.mean_loss = epoch_pair_count > 0
                              ? epoch_loss_sum / static_cast<double>(epoch_pair_count)
                              : 0.0;
        stats.lr_last = last_lr;
        bool want_metrics = (cfg.eval_every > 0 && (epoch + 1) % cfg.eval_every == 0) ||
                            epoch + 1 == cfg.epochs;
        if (want_metrics) {
            EvalOptions opt;
            opt.proposals = cfg.proposals;
            opt.iou_thresh = cfg.iou_thresh;
            opt.k_values = cfg.k_values;
            opt.det_jitter = cfg.det_jitter;
            opt.det_fp_rate = cfg.det_fp_rate;
            opt.seed = mix64(cfg.seed, hash_str("train_eval"));
            stats.train_metrics = evaluate_model(model, data, opt).report;
            stats.has_metrics = true;
        }
        result.history.push_back(std::move(stats));
    }
    result.optimizer_steps = step_index;
    return result;
}

EvalOutput evaluate_model(const RelationModel& model, const Dataset& data,
                          const EvalOptions& options) {
    if (data.scenes.empty()) throw std::runtime_error("evaluate_model: dataset is empty");
    EvalOutput out;
    out.predictions.resize(data.scenes.size());
    std::vector<double> flops(data.scenes.size(), 0.0);

    int max_k = 0;
    for (int k : options.k_values) max_k = std::max(max_k, k);

    parallel_for(data.scenes.size(), [&](size_t i) {
        const SceneSpec& scene = data.scenes[i];
        FeaturePyramid pyr = render_pyramid(scene, data.synth, data.seed);
        auto dets = simulate_detections(scene, pyr, options.det_jitter, options.det_fp_rate,
                                        mix64(options.seed, hash_str("det")));
        dets = rank_and_truncate(std::move(dets), options.proposals);
        SceneGraphPrediction pred;
        pred.detections = dets;
        double scene_flops = 0.0;
        auto candidates = model.score_scene(pyr, dets, options.collect_flops ? &scene_flops : nullptr);
        pred.candidates = score_and_rank(std::move(candidates), max_k, options.expand_all_predicates);
        out.predictions[i] = std::move(pred);
        flops[i] = scene_flops;
    });

    std::vector<const SceneSpec*> gt;
    gt.reserve(data.scenes.size());
    for (const SceneSpec& s : data.scenes) gt.push_back(&s);
    out.report = evaluate_scene_graphs(out.predictions, gt, options.k_values, options.iou_thresh,
                                       static_cast<int>(model.config().carpe.k_pred));
    for (double f : flops) out.relation_head_flops += f;
    return out;
}

}  // namespace rxpp
