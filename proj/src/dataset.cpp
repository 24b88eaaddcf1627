#include "rxpp/dataset.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"

namespace rxpp {

using ordered_json = nlohmann::ordered_json;

Split split_of(int64_t scene_id) {
    uint64_t h = mix64(static_cast<uint64_t>(scene_id), hash_str("split"));
    uint64_t bucket = h % 10;
    if (bucket < 8) return Split::Train;
    return bucket == 8 ? Split::Val : Split::Test;
}

namespace {

ordered_json synth_to_json(const SynthConfig& c) {
    ordered_json j;
    j["num_object_classes"] = c.num_object_classes;
    j["num_predicate_classes"] = c.num_predicate_classes;
    j["objects_min"] = c.objects_min;
    j["objects_max"] = c.objects_max;
    j["noise_std"] = c.noise_std;
    j["pattern_seed"] = c.pattern_seed;
    j["skew"] = c.skew;
    j["image_width"] = c.image_width;
    j["image_height"] = c.image_height;
    j["c_p3"] = c.c_p3;
    j["c_p4"] = c.c_p4;
    j["c_p5"] = c.c_p5;
    return j;
}

SynthConfig synth_from_json(const ordered_json& j) {
    SynthConfig c;
    c.num_object_classes = j.at("num_object_classes").get<int>();
    c.num_predicate_classes = j.at("num_predicate_classes").get<int>();
    c.objects_min = j.at("objects_min").get<int>();
    c.objects_max = j.at("objects_max").get<int>();
    c.noise_std = j.at("noise_std").get<double>();
    c.pattern_seed = j.at("pattern_seed").get<uint64_t>();
    c.skew = j.at("skew").get<double>();
    c.image_width = j.at("image_width").get<int>();
    c.image_height = j.at("image_height").get<int>();
    c.c_p3 = j.at("c_p3").get<int>();
    c.c_p4 = j.at("c_p4").get<int>();
    c.c_p5 = j.at("c_p5").get<int>();
    return c;
}

}  // namespace

std::string dataset_to_json(const Dataset& data) {
    ordered_json j;
    j["config"] = synth_to_json(data.synth);
    j["config"]["seed"] = data.seed;
    ordered_json scenes = ordered_json::array();
    for (const SceneSpec& s : data.scenes) {
        ordered_json js;
        js["scene_id"] = s.scene_id;
        js["image_size"] = {s.image_width, s.image_height};
        ordered_json objs = ordered_json::array();
        for (const SceneObject& o : s.objects) {
            ordered_json jo;
            jo["class_id"] = o.class_id;
            jo["box"] = {o.box.x1, o.box.y1, o.box.x2, o.box.y2};
            objs.push_back(std::move(jo));
        }
        js["objects"] = std::move(objs);
        ordered_json rels = ordered_json::array();
        for (const Relation& r : s.relations) rels.push_back({r.subject, r.predicate, r.object});
        js["relations"] = std::move(rels);
        scenes.push_back(std::move(js));
    }
    j["scenes"] = std::move(scenes);
    return j.dump(2) + "\n";
}

Dataset dataset_from_json(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    Dataset data;
    data.synth = synth_from_json(j.at("config"));
    data.seed = j.at("config").at("seed").get<uint64_t>();
    for (const auto& js : j.at("scenes")) {
        SceneSpec s;
        s.scene_id = js.at("scene_id").get<int64_t>();
        s.image_width = js.at("image_size")[0].get<int>();
        s.image_height = js.at("image_size")[1].get<int>();
        for (const auto& jo : js.at("objects")) {
            SceneObject o;
            o.class_id = jo.at("class_id").get<int>();
            const auto& b = jo.at("box");
            o.box = Box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
            s.objects.push_back(o);
        }
        for (const auto& jr : js.at("relations"))
            s.relations.push_back({jr[0].get<int>(), jr[1].get<int>(), jr[2].get<int>()});
        data.scenes.push_back(std::move(s));
    }
    return data;
}

void save_dataset(const Dataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_dataset: cannot write " + path);
    out << dataset_to_json(data);
}

Dataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_dataset: cannot read " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return dataset_from_json(buf.str());
}

DatasetSplits synthesize_splits(const SynthConfig& synth, int num_scenes, uint64_t seed) {
    synth.validate();
    DatasetSplits splits;
    for (Dataset* d : {&splits.train, &splits.val, &splits.test}) {
        d->synth = synth;
        d->seed = seed;
    }
    for (int i = 0; i < num_scenes; ++i) {
        SceneSpec scene = generate_scene(mix64(seed, static_cast<uint64_t>(i)), synth);
        switch (split_of(scene.scene_id)) {
            case Split::Train: splits.train.scenes.push_back(std::move(scene)); break;
            case Split::Val: splits.val.scenes.push_back(std::move(scene)); break;
            case Split::Test: splits.test.scenes.push_back(std::move(scene)); break;
        }
    }
    return splits;
}

Tensor load_embeddings(const std::string& path, const std::vector<std::string>& class_names,
                       size_t d_e) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_embeddings: cannot read " + path);
    std::map<std::string, std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string name;
        ls >> name;
        std::vector<double> vals;
        double v;
        while (ls >> v) vals.push_back(v);
        if (vals.size() != d_e)
            throw std::invalid_argument("load_embeddings: row '" + name + "' has " +
                                        std::to_string(vals.size()) + " values, expected " +
                                        std::to_string(d_e));
        rows[name] = std::move(vals);
    }
    Tensor emb = Tensor::mat(class_names.size(), d_e);
    for (size_t k = 0; k < class_names.size(); ++k) {
        auto it = rows.find(class_names[k]);
        if (it == rows.end())
            throw std::invalid_argument("load_embeddings: missing class '" + class_names[k] + "'");
        for (size_t j = 0; j < d_e; ++j) emb.at(k, j) = it->second[j];
    }
    return emb;
}

Tensor fallback_embeddings(size_t num_classes, size_t d_e, uint64_t seed) {
    return init_matrix(num_classes, d_e, mix64(seed, hash_str("embeddings")));
}

std::vector<std::string> object_class_names(int num_classes) {
    std::vector<std::string> names;
    names.reserve(num_classes);
    for (int k = 0; k < num_classes; ++k) names.push_back("obj_" + std::to_string(k));
    return names;
}

std::string predictions_to_json(const std::vector<SceneGraphPrediction>& predictions) {
    ordered_json out = ordered_json::array();
    for (const auto& pred : predictions) {
        ordered_json jp;
        ordered_json dets = ordered_json::array();
        for (const Detection& d : pred.detections) {
            ordered_json jd;
            jd["box"] = {d.box.x1, d.box.y1, d.box.x2, d.box.y2};
            jd["class_id"] = d.class_id;
            jd["confidence"] = d.confidence;
            jd["level"] = level_name(d.source_level);
            jd["grid_index"] = {d.r, d.c};
            dets.push_back(std::move(jd));
        }
        jp["detections"] = std::move(dets);
        ordered_json cands = ordered_json::array();
        for (const RelationCandidate& c : pred.candidates) {
            ordered_json jc;
            jc["subject"] = c.subject_index;
            jc["object"] = c.object_index;
            jc["predicate"] = c.top_predicate;
            jc["theta_subj"] = c.theta_subj;
            jc["theta_obj"] = c.theta_obj;
            jc["theta_pred"] = c.theta_pred;
            jc["theta_rel"] = c.theta_rel;
            jc["logits"] = c.predicate_logits;
            cands.push_back(std::move(jc));
        }
        jp["candidates"] = std::move(cands);
        out.push_back(std::move(jp));
    }
    return out.dump(2) + "\n";
}

std::vector<SceneGraphPrediction> predictions_from_json(const std::string& text) {
    ordered_json j = ordered_json::parse(text);
    std::vector<SceneGraphPrediction> preds;
    for (const auto& jp : j) {
        SceneGraphPrediction pred;
        for (const auto& jd : jp.at("detections")) {
            Detection d;
            const auto& b = jd.at("box");
            d.box = Box{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
            d.class_id = jd.at("class_id").get<int>();
            d.confidence = jd.at("confidence").get<double>();
            std::string lvl = jd.at("level").get<std::string>();
            d.source_level = lvl == "P3" ? Level::P3 : (lvl == "P4" ? Level::P4 : Level::P5);
            d.r = jd.at("grid_index")[0].get<int>();
            d.c = jd.at("grid_index")[1].get<int>();
            pred.detections.push_back(d);
        }
        for (const auto& jc : jp.at("candidates")) {
            RelationCandidate c;
            c.subject_index = jc.at("subject").get<int>();
            c.object_index = jc.at("object").get<int>();
            c.top_predicate = jc.at("predicate").get<int>();
            c.theta_subj = jc.at("theta_subj").get<double>();
            c.theta_obj = jc.at("theta_obj").get<double>();
            c.theta_pred = jc.at("theta_pred").get<double>();
            c.theta_rel = jc.at("theta_rel").get<double>();
            c.predicate_logits = jc.at("logits").get<std::vector<double>>();
            pred.candidates.push_back(std::move(c));
        }
        preds.push_back(std::move(pred));
    }
    return preds;
}

}  // namespace rxpp
