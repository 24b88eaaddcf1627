#pragma once

#include <string>
#include <vector>

#include "rxpp/dataset.hpp"
#include "rxpp/model.hpp"
#include "rxpp/trainer.hpp"

namespace rxpp {

// The single layered run configuration: every field has a default, JSON
// config files override defaults, CLI flags override the file.
struct RunConfig {
    uint64_t seed = 0;
    SynthConfig synth;
    int num_scenes = 200;

    // model dims
    size_t d_e = 32, d_h = 512, d = 64, d_ctx = 64, d_rope = 32, rope_hidden = 32;
    int heads = 4, h_ctx = 4;
    double tau_s = 0.1;
    std::string extractor = "damp";
    std::string head = "carpe";
    bool global_context = true;
    bool rope = true;

    TrainConfig train;

    // eval
    int eval_proposals = 100;
    double iou_thresh = 0.5;
    std::vector<int> k_values = {20, 50, 100};

    // dcs
    double dcs_epsilon = 1e-5;
    int dcs_k_min = 0, dcs_k_max = 150, dcs_k_step = 5;
    bool dcs_smooth = false;
    std::string dcs_metric = "f1@100";

    std::string embeddings_path;
    std::string data_path, checkpoint_path, out_dir = "out";

    static RunConfig load(const std::string& path);  // JSON file
    static RunConfig from_json_text(const std::string& text);
    std::string to_json_text() const;

    ModelConfig model_config() const;
    void validate() const;
};

// Builds the model for a config, wiring class embeddings from the configured
// file (with seeded Gaussian fallback per group).
RelationModel build_model(const RunConfig& config);

// Metric selector for DCS sweeps: "f1@K", "r@K" or "mr@K".
double metric_from_report(const MetricReport& report, const std::string& metric_name);

}  // namespace rxpp
