#pragma once

// Prompt diagnostics: task-by-task similarity of the fused prompt vectors
// and the activation distribution of the spectral prompt patterns.

#include "mphsir/hsicube.hpp"
#include "mphsir/net.hpp"

#include <string>
#include <vector>

namespace mphsir::prompts {

// Cosine similarity between fused prompt vectors (post cross-attention, pre
// concatenation) for the given task ids at one skip-connection level, using
// ground-truth labels. Symmetric with unit diagonal.
std::vector<std::vector<double>> prompt_similarity_matrix(const WeightStore<float>& store,
                                                          const net::ModelConfig& cfg, int level,
                                                          const std::vector<int>& task_ids);

struct Region {
    int y0 = 0;
    int x0 = 0;
    int height = 0;
    int width = 0;
};

// Mean spectral-prompt activation (softmax(M W1), length L) over the
// level-0 patches that overlap the region, computed at the first encoder
// block's spectral-attention input.
std::vector<double> spectral_prompt_activations(const WeightStore<float>& store,
                                                const net::ModelConfig& cfg,
                                                const hsi::HSICube& cube, const Region& region);

}  // namespace mphsir::prompts
