#pragma once

#include <string>
#include <vector>

#include "rxpp/config.hpp"

namespace rxpp {

// One cell of the extractor x head x context x rope matrix.
struct AblateCell {
    GatherVariant extractor;
    HeadKind head;
    bool context = true;
    bool rope = true;
    size_t params = 0;
    long long gathers_per_100 = 0;
    bool trained = false;
    MetricReport metrics;
    double final_loss = 0.0;
};

// Builds every cell with identical seeds and budgets. Passing data = nullptr
// is a dry run: structure columns (parameter and gather counts) only.
std::vector<AblateCell> run_ablation(const RunConfig& base, const Dataset* data);

std::string ablation_csv(const std::vector<AblateCell>& cells, const std::vector<int>& k_values);

}  // namespace rxpp
