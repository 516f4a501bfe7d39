#pragma once

#include <string>
#include <vector>

#include "dvq/net/store.hpp"
#include "dvq/net/tape.hpp"

namespace dvq::net {

enum class Activation { None, Relu, Sigmoid, Tanh, Softplus };

// Affine -> activation chain. widths = {in, h1, ..., out}; the hidden
// activation defaults to ReLU, the output layer stays linear unless asked.
struct MlpSpec {
  std::vector<std::size_t> widths;
  Activation hidden = Activation::Relu;
  Activation output = Activation::None;
  Init weight_init = Init::He;
  double final_bias = 0.0;  // applied once at parameter creation
};

// Creates the parameters <prefix>.w0/.b0, ... if missing.
void mlp_register(ParamStore& store, const std::string& prefix, const MlpSpec& spec);

Var mlp_forward(Tape& tape, ParamStore& store, const std::string& prefix, Var input,
                const MlpSpec& spec);

Var activate(Var v, Activation act);

Var affine(Tape& tape, ParamStore& store, const std::string& w, const std::string& b, Var input);

}  // namespace dvq::net
