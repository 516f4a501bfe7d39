#pragma once

#include <array>
#include <string>
#include <vector>

#include "dvq/net/mlp.hpp"
#include "dvq/net/store.hpp"
#include "dvq/net/tape.hpp"

namespace dvq::vq {

inline constexpr int kHandParts = 6;  // five fingers plus the palm

struct CodebookConfig {
  std::size_t entries = 64;
  std::size_t dim = 64;
};

inline std::string object_codebook_name() { return "codebook.object"; }
inline std::string hand_codebook_name(int part) {
  return "codebook.hand" + std::to_string(part);
}

// Entries start uniform in [-1/entries, 1/entries] and train by gradient
// through the codebook loss (no EMA, no dead-entry reseeding).
void codebooks_register(net::ParamStore& store, const CodebookConfig& cfg);

struct NearestEntry {
  int index = -1;
  double dist_sq = 0;
  std::vector<double> entry;
};

// Exhaustive scan, ties to the lowest index.
NearestEntry nearest_entry(const net::DenseArray& codebook, const double* z, std::size_t dim);
NearestEntry nearest_entry(const net::DenseArray& codebook, const std::vector<double>& z);

struct QuantizeResult {
  int object_index = -1;
  std::array<int, kHandParts> hand_indices{};
  net::Var object_entry;                 // e_m as a tape row, grads reach the codebook
  net::Var object_st;                    // straight-through: value e_m, grads to z_t
  std::vector<net::Var> hand_entries;    // e_k per part
  std::vector<net::Var> hand_st;         // straight-through per part
};

// Per-codebook nearest lookup on current values; z_t is [1,dim] and
// z_parts holds exactly kHandParts rows of the same width.
QuantizeResult quantize(net::Tape& tape, net::ParamStore& store, net::Var z_t,
                        const std::vector<net::Var>& z_parts, const CodebookConfig& cfg);

// L_E = lambda_e * (L_h + L_o) with the stop-gradient placement that sends
// the first term to the encoders and the commitment term to the codebooks.
net::Var codebook_loss(net::Var z_t, net::Var object_entry, const std::vector<net::Var>& z_parts,
                       const std::vector<net::Var>& hand_entries, double beta_commit,
                       double lambda_e);

}  // namespace dvq::vq
