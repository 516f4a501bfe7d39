#include "dvq/net/mlp.hpp"

#include <sstream>
#include <stdexcept>

namespace dvq::net {

Var activate(Var v, Activation act) {
  switch (act) {
    case Activation::None: return v;
    case Activation::Relu: return relu(v);
    case Activation::Sigmoid: return sigmoid(v);
    case Activation::Tanh: return tanhv(v);
    case Activation::Softplus: return softplus(v);
  }
  throw std::runtime_error("unknown activation");
}

void mlp_register(ParamStore& store, const std::string& prefix, const MlpSpec& spec) {
  if (spec.widths.size() < 2) throw std::runtime_error("mlp '" + prefix + "': need >= 2 widths");
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    store.ensure(prefix + ".w" + std::to_string(l), spec.widths[l], spec.widths[l + 1],
                 spec.weight_init);
    DenseArray& b =
        store.ensure(prefix + ".b" + std::to_string(l), 1, spec.widths[l + 1], Init::Zeros);
    if (l + 2 == spec.widths.size() && spec.final_bias != 0.0) {
      bool untouched = true;
      for (double x : b.data) untouched = untouched && x == 0.0;
      if (untouched) b.fill(spec.final_bias);
    }
  }
}

Var affine(Tape& tape, ParamStore& store, const std::string& w, const std::string& b, Var input) {
  return add_rowvec(matmul(input, tape.param(store, w)), tape.param(store, b));
}

Var mlp_forward(Tape& tape, ParamStore& store, const std::string& prefix, Var input,
                const MlpSpec& spec) {
  mlp_register(store, prefix, spec);
  const DenseArray& in = tape.val(input);
  if (in.cols != spec.widths.front()) {
    std::ostringstream os;
    os << "mlp '" << prefix << "': input has " << in.cols << " columns, layer 0 expects "
       << spec.widths.front();
    throw std::runtime_error(os.str());
  }
  Var h = input;
  const std::size_t layers = spec.widths.size() - 1;
  for (std::size_t l = 0; l < layers; ++l) {
    h = affine(tape, store, prefix + ".w" + std::to_string(l), prefix + ".b" + std::to_string(l),
               h);
    h = activate(h, l + 1 == layers ? spec.output : spec.hidden);
  }
  return h;
}

}  // namespace dvq::net
