#include "rxpp/config.hpp"

#include <fstream>
#include <sstream>

#include "json.hpp"

namespace rxpp {

using ordered_json = nlohmann::ordered_json;

namespace {

template <typename T>
void get_if(const ordered_json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
    RunConfig c;
    ordered_json j = ordered_json::parse(text);
    get_if(j, "seed", c.seed);
    if (j.contains("synth")) {
        const auto& js = j.at("synth");
        get_if(js, "num_object_classes", c.synth.num_object_classes);
        get_if(js, "num_predicate_classes", c.synth.num_predicate_classes);
        get_if(js, "objects_min", c.synth.objects_min);
        get_if(js, "objects_max", c.synth.objects_max);
        get_if(js, "noise_std", c.synth.noise_std);
        get_if(js, "pattern_seed", c.synth.pattern_seed);
        get_if(js, "skew", c.synth.skew);
        get_if(js, "image_width", c.synth.image_width);
        get_if(js, "image_height", c.synth.image_height);
        get_if(js, "c_p3", c.synth.c_p3);
        get_if(js, "c_p4", c.synth.c_p4);
        get_if(js, "c_p5", c.synth.c_p5);
        get_if(js, "num_scenes", c.num_scenes);
    }
    if (j.contains("model")) {
        const auto& jm = j.at("model");
        get_if(jm, "d_e", c.d_e);
        get_if(jm, "d_h", c.d_h);
        get_if(jm, "d", c.d);
        get_if(jm, "d_ctx", c.d_ctx);
        get_if(jm, "d_rope", c.d_rope);
        get_if(jm, "rope_hidden", c.rope_hidden);
        get_if(jm, "heads", c.heads);
        get_if(jm, "h_ctx", c.h_ctx);
        get_if(jm, "tau_s", c.tau_s);
        get_if(jm, "extractor", c.extractor);
        get_if(jm, "head", c.head);
        get_if(jm, "global_context", c.global_context);
        get_if(jm, "rope", c.rope);
    }
    if (j.contains("train")) {
        const auto& jt = j.at("train");
        get_if(jt, "lr", c.train.lr);
        get_if(jt, "weight_decay", c.train.weight_decay);
        get_if(jt, "epochs", c.train.epochs);
        get_if(jt, "micro_batch", c.train.micro_batch);
        get_if(jt, "grad_accum", c.train.grad_accum);
        get_if(jt, "focal_gamma", c.train.focal_gamma);
        get_if(jt, "tau_la", c.train.tau_la);
        get_if(jt, "ema", c.train.ema_enabled);
        get_if(jt, "det_jitter", c.train.det_jitter);
        get_if(jt, "det_fp_rate", c.train.det_fp_rate);
        get_if(jt, "proposals", c.train.proposals);
        get_if(jt, "eval_every", c.train.eval_every);
    }
    if (j.contains("eval")) {
        const auto& je = j.at("eval");
        get_if(je, "proposals", c.eval_proposals);
        get_if(je, "iou_thresh", c.iou_thresh);
        get_if(je, "k_values", c.k_values);
    }
    if (j.contains("dcs")) {
        const auto& jd = j.at("dcs");
        get_if(jd, "epsilon", c.dcs_epsilon);
        get_if(jd, "k_min", c.dcs_k_min);
        get_if(jd, "k_max", c.dcs_k_max);
        get_if(jd, "k_step", c.dcs_k_step);
        get_if(jd, "smooth", c.dcs_smooth);
        get_if(jd, "metric", c.dcs_metric);
    }
    get_if(j, "embeddings_path", c.embeddings_path);
    if (j.contains("paths")) {
        const auto& jp = j.at("paths");
        get_if(jp, "data", c.data_path);
        get_if(jp, "checkpoint", c.checkpoint_path);
        get_if(jp, "out", c.out_dir);
    }
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot read " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return from_json_text(buf.str());
}

std::string RunConfig::to_json_text() const {
    ordered_json j;
    j["seed"] = seed;
    ordered_json js;
    js["num_object_classes"] = synth.num_object_classes;
    js["num_predicate_classes"] = synth.num_predicate_classes;
    js["objects_min"] = synth.objects_min;
    js["objects_max"] = synth.objects_max;
    js["noise_std"] = synth.noise_std;
    js["pattern_seed"] = synth.pattern_seed;
    js["skew"] = synth.skew;
    js["image_width"] = synth.image_width;
    js["image_height"] = synth.image_height;
    js["c_p3"] = synth.c_p3;
    js["c_p4"] = synth.c_p4;
    js["c_p5"] = synth.c_p5;
    js["num_scenes"] = num_scenes;
    j["synth"] = std::move(js);
    ordered_json jm;
    jm["d_e"] = d_e;
    jm["d_h"] = d_h;
    jm["d"] = d;
    jm["d_ctx"] = d_ctx;
    jm["d_rope"] = d_rope;
    jm["rope_hidden"] = rope_hidden;
    jm["heads"] = heads;
    jm["h_ctx"] = h_ctx;
    jm["tau_s"] = tau_s;
    jm["extractor"] = extractor;
    jm["head"] = head;
    jm["global_context"] = global_context;
    jm["rope"] = rope;
    j["model"] = std::move(jm);
    ordered_json jt;
    jt["lr"] = train.lr;
    jt["weight_decay"] = train.weight_decay;
    jt["epochs"] = train.epochs;
    jt["micro_batch"] = train.micro_batch;
    jt["grad_accum"] = train.grad_accum;
    jt["focal_gamma"] = train.focal_gamma;
    jt["tau_la"] = train.tau_la;
    jt["ema"] = train.ema_enabled;
    jt["det_jitter"] = train.det_jitter;
    jt["det_fp_rate"] = train.det_fp_rate;
    jt["proposals"] = train.proposals;
    jt["eval_every"] = train.eval_every;
    j["train"] = std::move(jt);
    ordered_json je;
    je["proposals"] = eval_proposals;
    je["iou_thresh"] = iou_thresh;
    je["k_values"] = k_values;
    j["eval"] = std::move(je);
    ordered_json jd;
    jd["epsilon"] = dcs_epsilon;
    jd["k_min"] = dcs_k_min;
    jd["k_max"] = dcs_k_max;
    jd["k_step"] = dcs_k_step;
    jd["smooth"] = dcs_smooth;
    jd["metric"] = dcs_metric;
    j["dcs"] = std::move(jd);
    j["embeddings_path"] = embeddings_path;
    ordered_json jp;
    jp["data"] = data_path;
    jp["checkpoint"] = checkpoint_path;
    jp["out"] = out_dir;
    j["paths"] = std::move(jp);
    return j.dump(2) + "\n";
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m;
    m.carpe.d_e = d_e;
    m.carpe.d_h = d_h;
    m.carpe.d = d;
    m.carpe.heads = heads;
    m.carpe.d_rope = d_rope;
    m.carpe.rope_hidden = rope_hidden;
    m.carpe.k_obj = static_cast<size_t>(synth.num_object_classes);
    m.carpe.k_pred = static_cast<size_t>(synth.num_predicate_classes);
    m.carpe.tau_s = tau_s;
    m.d_ctx = d_ctx;
    m.h_ctx = h_ctx;
    m.extractor = parse_gather_variant(extractor);
    m.head = parse_head_kind(head);
    m.use_global_context = global_context;
    m.use_rope = rope;
    m.c_p3 = static_cast<size_t>(synth.c_p3);
    m.c_p4 = static_cast<size_t>(synth.c_p4);
    m.c_p5 = static_cast<size_t>(synth.c_p5);
    m.init_seed = mix64(seed, hash_str("model_init"));
    return m;
}

void RunConfig::validate() const {
    synth.validate();
    train.validate();
    parse_gather_variant(extractor);
    parse_head_kind(head);
    if (dcs_k_step <= 0 || dcs_k_max <= dcs_k_min)
        throw std::runtime_error("config: bad dcs grid");
    if (k_values.empty()) throw std::runtime_error("config: k_values must not be empty");
}

RelationModel build_model(const RunConfig& config) {
    ModelConfig mc = config.model_config();
    Tensor obj_emb, pred_emb;
    const Tensor* obj_ptr = nullptr;
    const Tensor* pred_ptr = nullptr;
    if (!config.embeddings_path.empty()) {
        auto obj_names = object_class_names(config.synth.num_object_classes);
        obj_emb = load_embeddings(config.embeddings_path, obj_names, config.d_e);
        obj_ptr = &obj_emb;
        // predicate rows are optional in the file; fall back when absent
        try {
            pred_emb = load_embeddings(config.embeddings_path, predicate_names(), config.d_e);
            pred_ptr = &pred_emb;
        } catch (const std::invalid_argument&) {
            pred_ptr = nullptr;
        }
    }
    return RelationModel(mc, obj_ptr, pred_ptr);
}

double metric_from_report(const MetricReport& report, const std::string& metric_name) {
    auto at = metric_name.find('@');
    if (at == std::string::npos) throw std::runtime_error("unknown metric: " + metric_name);
    std::string kind = metric_name.substr(0, at);
    int k = std::stoi(metric_name.substr(at + 1));
    for (size_t i = 0; i < report.k_values.size(); ++i) {
        if (report.k_values[i] != k) continue;
        if (kind == "f1") return report.f1[i];
        if (kind == "r") return report.recall[i];
        if (kind == "mr") return report.mean_recall[i];
    }
    throw std::runtime_error("metric not in report: " + metric_name);
}

}  // namespace rxpp
