#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "dvq/pipeline/pipeline.hpp"

namespace dvq::pipeline {

namespace {
double lr_for_epoch(const TrainConfig& cfg, int epoch) {
  double lr = cfg.lr;
  for (int h : cfg.lr_halve_epochs)
    if (epoch >= h) lr *= 0.5;
  return lr;
}

void accumulate(LossBreakdown& acc, const LossBreakdown& v) {
  acc.total += v.total;
  acc.l_posture += v.l_posture;
  acc.l_position += v.l_position;
  acc.l_v += v.l_v;
  acc.l_e += v.l_e;
  acc.l_c += v.l_c;
  acc.l_m += v.l_m;
  acc.l_p += v.l_p;
  acc.l_contact += v.l_contact;
}

void divide(LossBreakdown& acc, double n) {
  acc.total /= n;
  acc.l_posture /= n;
  acc.l_position /= n;
  acc.l_v /= n;
  acc.l_e /= n;
  acc.l_c /= n;
  acc.l_m /= n;
  acc.l_p /= n;
  acc.l_contact /= n;
}
}  // namespace

double reconstruction_error(net::ParamStore& store, const PipelineConfig& cfg,
                            const TrainConfig& tcfg, const hand::HandModel& model,
                            const TrainSample& sample) {
  net::Tape tape;
  net::Rng rng(net::Rng::derive(tcfg.seed, 7001));
  const SampleForward fwd =
      forward_sample(tape, store, cfg, tcfg, model, sample, rng, /*training=*/false);
  const net::DenseArray& pred = tape.val(fwd.reconstructed_vertices);
  double total = 0;
  for (size_t i = 0; i < sample.gt_vertices.size(); ++i) {
    const geom::Vec3 p{pred(i, 0), pred(i, 1), pred(i, 2)};
    total += norm(p - sample.gt_vertices[i]);
  }
  return total / static_cast<double>(sample.gt_vertices.size());
}

double holdout_vertex_error(net::ParamStore& store, const std::vector<TrainSample>& samples,
                            const PipelineConfig& cfg, const TrainConfig& tcfg,
                            const hand::HandModel& model) {
  if (samples.empty()) return 0;
  double total = 0;
  for (const TrainSample& s : samples)
    total += reconstruction_error(store, cfg, tcfg, model, s);
  return total / static_cast<double>(samples.size());
}

TrainResult train_grasp_model(net::ParamStore& store, const std::vector<TrainSample>& train_set,
                              const std::vector<TrainSample>& holdout,
                              const PipelineConfig& cfg, const TrainConfig& tcfg) {
  if (train_set.empty()) throw std::runtime_error("train: empty training set");
  const hand::HandModel model = hand::HandModel::build(cfg.hand);
  TrainResult result;

  net::Rng shuffle_rng(net::Rng::derive(tcfg.seed, 811));
  std::vector<int> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
    // Fisher-Yates with the dedicated stream keeps the trace reproducible
    for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
      std::swap(order[i], order[shuffle_rng.uniform_int(i + 1)]);

    const double lr = lr_for_epoch(tcfg, epoch);
    LossBreakdown epoch_acc;
    std::size_t batches = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += tcfg.batch) {
      const std::size_t end = std::min(order.size(), begin + tcfg.batch);
      net::Tape tape;
      net::Rng rng(net::Rng::derive(tcfg.seed, (epoch + 1) * 1000003ull + begin));
      net::Var batch_loss;
      LossBreakdown batch_acc;
      bool first = true;
      for (std::size_t k = begin; k < end; ++k) {
        const SampleForward fwd =
            forward_sample(tape, store, cfg, tcfg, model, train_set[order[k]], rng, true);
        accumulate(batch_acc, fwd.values);
        batch_loss = first ? fwd.loss : net::add(batch_loss, fwd.loss);
        first = false;
      }
      const double scale = 1.0 / static_cast<double>(end - begin);
      batch_loss = net::scale(batch_loss, scale);
      const double loss_value = tape.val(batch_loss).item();
      if (!std::isfinite(loss_value)) {
        LossBreakdown diag = batch_acc;
        divide(diag, static_cast<double>(end - begin));
        throw std::runtime_error(
            "train: non-finite loss at epoch " + std::to_string(epoch) +
            " (posture=" + std::to_string(diag.l_posture) +
            " position=" + std::to_string(diag.l_position) + " v=" + std::to_string(diag.l_v) +
            " e=" + std::to_string(diag.l_e) + " contact=" + std::to_string(diag.l_contact) +
            ")");
      }
      tape.backward(batch_loss);
      store.adam_step(lr);

      divide(batch_acc, static_cast<double>(end - begin));
      accumulate(epoch_acc, batch_acc);
      ++batches;
    }
    divide(epoch_acc, static_cast<double>(batches));
    result.epochs.push_back({epoch, epoch_acc.total, epoch_acc});
  }

  result.holdout_vertex_error = holdout_vertex_error(store, holdout, cfg, tcfg, model);
  return result;
}

}  // namespace dvq::pipeline
