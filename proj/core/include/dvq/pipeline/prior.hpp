#pragma once

#include <array>
#include <vector>

#include "dvq/net/store.hpp"
#include "dvq/net/tape.hpp"
#include "dvq/vq/codebook.hpp"

namespace dvq::pipeline {

// Fixed-length causal categorical model over the six hand-part codebook
// indices, conditioned on the object index. Step t sees the object
// embedding plus the embeddings of tokens 1..t-1.
struct PriorConfig {
  std::size_t entries = 64;  // codebook entries per token
  std::size_t embed_dim = 16;
  std::size_t hidden = 64;
};

struct IndexSequence {
  int object = 0;
  std::array<int, vq::kHandParts> tokens{};
};

void prior_register(net::ParamStore& store, const PriorConfig& cfg);

// logits for step `t` given the object index and tokens 0..t-1
net::Var prior_logits(net::Tape& tape, net::ParamStore& store, const PriorConfig& cfg,
                      int object_index, const std::vector<int>& prefix, int step);

// per-step categorical distribution (softmax of logits / temperature > 0)
std::vector<double> prior_step_probs(net::ParamStore& store, const PriorConfig& cfg,
                                     int object_index, const std::vector<int>& prefix, int step,
                                     double temperature = 1.0);

struct PriorFitResult {
  std::vector<double> epoch_nll;  // mean per-token negative log likelihood
};

PriorFitResult prior_fit(net::ParamStore& store, const std::vector<IndexSequence>& corpus,
                         const PriorConfig& cfg, double lr, int epochs, int batch,
                         std::uint64_t seed);

// Ancestral sampling; temperature 0 takes the per-step argmax with ties to
// the lowest index.
std::array<int, vq::kHandParts> prior_sample(net::ParamStore& store, const PriorConfig& cfg,
                                             int object_index, double temperature,
                                             net::Rng& rng);

double sequence_log_prob(net::ParamStore& store, const PriorConfig& cfg,
                         const IndexSequence& seq);

}  // namespace dvq::pipeline
