#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <stdexcept>

#include "dvq/pipeline/prior.hpp"

#include "dvq/net/mlp.hpp"

namespace dvq::pipeline {

using net::DenseArray;
using net::Tape;
using net::Var;

namespace {
std::string head_name(int step) { return "prior.head" + std::to_string(step); }

net::MlpSpec head_spec(const PriorConfig& cfg, int step) {
  return net::MlpSpec{{cfg.embed_dim * (1 + step), cfg.hidden, cfg.entries}};
}
}  // namespace

void prior_register(net::ParamStore& store, const PriorConfig& cfg) {
  store.ensure("prior.embed.obj", cfg.entries, cfg.embed_dim, net::Init::Xavier);
  for (int t = 0; t < vq::kHandParts; ++t) {
    store.ensure("prior.embed.h" + std::to_string(t), cfg.entries, cfg.embed_dim,
                 net::Init::Xavier);
    net::mlp_register(store, head_name(t), head_spec(cfg, t));
  }
}

Var prior_logits(Tape& tape, net::ParamStore& store, const PriorConfig& cfg, int object_index,
                 const std::vector<int>& prefix, int step) {
  if (step < 0 || step >= vq::kHandParts) throw std::runtime_error("prior: bad step");
  if (static_cast<int>(prefix.size()) != step)
    throw std::runtime_error("prior: prefix length must equal step");
  prior_register(store, cfg);

  std::vector<Var> parts;
  auto oid = std::make_shared<const std::vector<int>>(std::vector<int>{object_index});
  parts.push_back(net::gather_rows(tape.param(store, "prior.embed.obj"), oid));
  for (int t = 0; t < step; ++t) {
    auto tid = std::make_shared<const std::vector<int>>(std::vector<int>{prefix[t]});
    parts.push_back(
        net::gather_rows(tape.param(store, "prior.embed.h" + std::to_string(t)), tid));
  }
  Var cat = parts.size() == 1 ? parts[0] : net::concat_cols(parts);
  return net::mlp_forward(tape, store, head_name(step), cat, head_spec(cfg, step));
}

std::vector<double> prior_step_probs(net::ParamStore& store, const PriorConfig& cfg,
                                     int object_index, const std::vector<int>& prefix, int step,
                                     double temperature) {
  Tape tape;
  const Var logits = prior_logits(tape, store, cfg, object_index, prefix, step);
  const DenseArray& lv = tape.val(logits);
  std::vector<double> probs(lv.size());
  const double t = std::max(temperature, 1e-12);
  double mx = -1e300;
  for (std::size_t i = 0; i < lv.size(); ++i) mx = std::max(mx, lv[i] / t);
  double denom = 0;
  for (std::size_t i = 0; i < lv.size(); ++i) {
    probs[i] = std::exp(lv[i] / t - mx);
    denom += probs[i];
  }
  for (double& p : probs) p /= denom;
  return probs;
}

PriorFitResult prior_fit(net::ParamStore& store, const std::vector<IndexSequence>& corpus,
                         const PriorConfig& cfg, double lr, int epochs, int batch,
                         std::uint64_t seed) {
  if (corpus.empty()) throw std::runtime_error("prior_fit: empty corpus");
  for (const IndexSequence& seq : corpus) {
    if (seq.object < 0 || seq.object >= static_cast<int>(cfg.entries))
      throw std::runtime_error("prior_fit: object index out of range");
    for (int t : seq.tokens)
      if (t < 0 || t >= static_cast<int>(cfg.entries))
        throw std::runtime_error("prior_fit: token index out of range");
  }
  prior_register(store, cfg);
  PriorFitResult result;

  net::Rng shuffle_rng(net::Rng::derive(seed, 401));
  std::vector<int> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(i + 1)]);
    double epoch_nll = 0;
    std::size_t token_count = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(order.size(), begin + batch);
      Tape tape;
      Var loss;
      bool first = true;
      for (std::size_t k = begin; k < end; ++k) {
        const IndexSequence& seq = corpus[order[k]];
        std::vector<int> prefix;
        for (int t = 0; t < vq::kHandParts; ++t) {
          Var logits = prior_logits(tape, store, cfg, seq.object, prefix, t);
          Var logp = net::logv(net::rows_softmax(logits));
          auto pick = std::make_shared<const std::vector<int>>(
              std::vector<int>{seq.tokens[t]});
          // NLL of the realized token
          Var row = net::transpose(logp);
          Var nll = net::neg(net::sum(net::gather_rows(row, pick)));
          loss = first ? nll : net::add(loss, nll);
          first = false;
          prefix.push_back(seq.tokens[t]);
          ++token_count;
        }
      }
      epoch_nll += tape.val(loss).item();
      Var scaled = net::scale(loss, 1.0 / static_cast<double>((end - begin) * vq::kHandParts));
      tape.backward(scaled);
      store.adam_step(lr);
    }
    result.epoch_nll.push_back(epoch_nll / static_cast<double>(token_count));
  }
  return result;
}

std::array<int, vq::kHandParts> prior_sample(net::ParamStore& store, const PriorConfig& cfg,
                                             int object_index, double temperature,
                                             net::Rng& rng) {
  if (temperature < 0) throw std::runtime_error("prior_sample: negative temperature");
  std::array<int, vq::kHandParts> tokens{};
  std::vector<int> prefix;
  for (int t = 0; t < vq::kHandParts; ++t) {
    int pick = 0;
    if (temperature == 0.0) {
      Tape tape;
      const DenseArray& logits =
          tape.val(prior_logits(tape, store, cfg, object_index, prefix, t));
      for (std::size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[pick]) pick = static_cast<int>(i);
    } else {
      const std::vector<double> probs =
          prior_step_probs(store, cfg, object_index, prefix, t, temperature);
      const double u = rng.uniform();
      double acc = 0;
      pick = static_cast<int>(probs.size()) - 1;
      for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) {
          pick = static_cast<int>(i);
          break;
        }
      }
    }
    tokens[t] = pick;
    prefix.push_back(pick);
  }
  return tokens;
}

double sequence_log_prob(net::ParamStore& store, const PriorConfig& cfg,
                         const IndexSequence& seq) {
  double logp = 0;
  std::vector<int> prefix;
  for (int t = 0; t < vq::kHandParts; ++t) {
    const std::vector<double> probs = prior_step_probs(store, cfg, seq.object, prefix, t);
    logp += std::log(std::max(probs[seq.tokens[t]], 1e-300));
    prefix.push_back(seq.tokens[t]);
  }
  return logp;
}

}  // namespace dvq::pipeline
