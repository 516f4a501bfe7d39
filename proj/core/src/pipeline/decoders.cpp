#include <stdexcept>

#include "dvq/pipeline/pipeline.hpp"

namespace dvq::pipeline {

using net::Tape;
using net::Var;

PostureDecode decode_posture(Tape& tape, net::ParamStore& store, const PipelineConfig& cfg,
                             const hand::HandModel& model,
                             const std::vector<Var>& quantized_parts, Var z_t) {
  if (static_cast<int>(quantized_parts.size()) != vq::kHandParts)
    throw std::runtime_error("decode_posture: expected 6 quantized part features");
  std::vector<Var> inputs = quantized_parts;
  inputs.push_back(z_t);
  Var cat = net::concat_cols(inputs);

  net::MlpSpec spec{{tape.val(cat).cols, cfg.posture_hidden, hand::kPostureParams}};
  Var raw = net::mlp_forward(tape, store, "dec.posture", cat, spec);

  // skeletal constraint pass: provisional keypoints -> joint angles -> gate
  Var keypoints = model.keypoints_tape(tape, raw);
  Var theta = hand::joint_angles_tape(tape, keypoints);
  Var corrected = hand::gated_correction(tape, store, "dec.correct", raw, theta, cfg.hand);
  return {corrected, theta};
}

PositionDecode decode_position(Tape& tape, net::ParamStore& store, const PipelineConfig& cfg,
                               Var posture_hat, Var z_p) {
  net::MlpSpec zh_spec{{hand::kPostureParams, cfg.zh_hidden, cfg.feature_dim}};
  Var z_h = net::mlp_forward(tape, store, "dec.zh", posture_hat, zh_spec);

  Var cat = net::concat_cols({net::stop_grad(z_h), z_p});
  net::MlpSpec spec{{tape.val(cat).cols, cfg.position_hidden, 6}};
  Var position = net::mlp_forward(tape, store, "dec.position", cat, spec);
  return {position, z_h};
}

}  // namespace dvq::pipeline
