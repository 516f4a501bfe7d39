#include "dvq/vq/codebook.hpp"

#include <memory>
#include <stdexcept>

namespace dvq::vq {

using net::DenseArray;
using net::Tape;
using net::Var;

void codebooks_register(net::ParamStore& store, const CodebookConfig& cfg) {
  auto reg = [&](const std::string& name) {
    if (store.has(name)) return;
    DenseArray& e = store.ensure(name, cfg.entries, cfg.dim, net::Init::Uniform);
    const double scale = 1.0 / static_cast<double>(cfg.entries);
    for (double& v : e.data) v *= scale;
  };
  reg(object_codebook_name());
  for (int p = 0; p < kHandParts; ++p) reg(hand_codebook_name(p));
}

NearestEntry nearest_entry(const DenseArray& codebook, const double* z, std::size_t dim) {
  if (dim != codebook.cols) throw std::runtime_error("nearest_entry: query dim mismatch");
  NearestEntry best;
  for (std::size_t j = 0; j < codebook.rows; ++j) {
    double d = 0;
    const double* row = &codebook.data[j * codebook.cols];
    for (std::size_t k = 0; k < dim; ++k) {
      const double diff = z[k] - row[k];
      d += diff * diff;
    }
    if (best.index < 0 || d < best.dist_sq) {
      best.index = static_cast<int>(j);
      best.dist_sq = d;
    }
  }
  const double* row = &codebook.data[best.index * codebook.cols];
  best.entry.assign(row, row + dim);
  return best;
}

NearestEntry nearest_entry(const DenseArray& codebook, const std::vector<double>& z) {
  return nearest_entry(codebook, z.data(), z.size());
}

namespace {
// Looks up the nearest entry, then exposes it twice on the tape: as a
// gathered codebook row (training the entries) and as a straight-through
// output whose forward value is that row bit-for-bit.
std::pair<Var, Var> lookup(Tape& tape, net::ParamStore& store, const std::string& name, Var z,
                           int& index_out) {
  const DenseArray& zv = tape.val(z);
  if (zv.rows != 1) throw std::runtime_error("quantize: encoder output must be a [1,dim] row");
  const NearestEntry n = nearest_entry(store.value(name), zv.data.data(), zv.cols);
  index_out = n.index;
  Var book = tape.param(store, name);
  auto idx = std::make_shared<const std::vector<int>>(std::vector<int>{n.index});
  Var entry = net::gather_rows(book, idx);
  Var st = net::straight_through(z, entry);
  return {entry, st};
}
}  // namespace

QuantizeResult quantize(Tape& tape, net::ParamStore& store, Var z_t,
                        const std::vector<Var>& z_parts, const CodebookConfig& cfg) {
  if (static_cast<int>(z_parts.size()) != kHandParts)
    throw std::runtime_error("quantize: expected " + std::to_string(kHandParts) +
                             " hand part features, got " + std::to_string(z_parts.size()));
  codebooks_register(store, cfg);
  QuantizeResult r;
  auto [oe, ost] = lookup(tape, store, object_codebook_name(), z_t, r.object_index);
  r.object_entry = oe;
  r.object_st = ost;
  for (int p = 0; p < kHandParts; ++p) {
    int idx = -1;
    auto [he, hst] = lookup(tape, store, hand_codebook_name(p), z_parts[p], idx);
    r.hand_indices[p] = idx;
    r.hand_entries.push_back(he);
    r.hand_st.push_back(hst);
  }
  return r;
}

net::Var codebook_loss(Var z_t, Var object_entry, const std::vector<Var>& z_parts,
                       const std::vector<Var>& hand_entries, double beta_commit,
                       double lambda_e) {
  if (z_parts.size() != hand_entries.size())
    throw std::runtime_error("codebook_loss: part/entry count mismatch");
  auto pair_loss = [&](Var z, Var entry) {
    // ||sg(e) - z||^2 trains the encoder, beta * ||sg(z) - e||^2 the codebook
    Var to_encoder = net::sum_sq(net::sub(net::stop_grad(entry), z));
    Var to_codebook = net::sum_sq(net::sub(net::stop_grad(z), entry));
    return net::add(to_encoder, net::scale(to_codebook, beta_commit));
  };
  Var total = pair_loss(z_t, object_entry);
  for (std::size_t p = 0; p < z_parts.size(); ++p)
    total = net::add(total, pair_loss(z_parts[p], hand_entries[p]));
  return net::scale(total, lambda_e);
}

}  // namespace dvq::vq
