#pragma once

#include <string>
#include <vector>

#include "rxpp/tensor.hpp"
#include "rxpp/trainer.hpp"

namespace rxpp {

// Split by scene_id hash: 80/10/10 (stable under dataset regeneration).
enum class Split { Train = 0, Val = 1, Test = 2 };
Split split_of(int64_t scene_id);

// One JSON document per split: {"config": {...}, "scenes": [...]}. Pyramids
// are regenerated from the stored seed, never serialized.
std::string dataset_to_json(const Dataset& data);
Dataset dataset_from_json(const std::string& text);

void save_dataset(const Dataset& data, const std::string& path);
Dataset load_dataset(const std::string& path);

// Builds num_scenes scenes seeded from (seed, index) and partitions them by
// scene_id hash into train/val/test.
struct DatasetSplits {
    Dataset train, val, test;
};
DatasetSplits synthesize_splits(const SynthConfig& synth, int num_scenes, uint64_t seed);

// Text embedding file: one row per class, first token the class name, then
// d_e whitespace-separated reals. Every requested name must be present.
Tensor load_embeddings(const std::string& path, const std::vector<std::string>& class_names,
                       size_t d_e);

// Seeded Gaussian fallback when no file is configured.
Tensor fallback_embeddings(size_t num_classes, size_t d_e, uint64_t seed);

std::vector<std::string> object_class_names(int num_classes);

// JSON interchange mirroring SceneGraphPrediction.
std::string predictions_to_json(const std::vector<SceneGraphPrediction>& predictions);
std::vector<SceneGraphPrediction> predictions_from_json(const std::string& text);

}  // namespace rxpp
