#pragma once

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dvq/net/array.hpp"
#include "dvq/net/rng.hpp"

namespace dvq::net {

class Tape;
class ParamStore;

struct Var {
  Tape* tape = nullptr;
  int id = -1;
  bool valid() const { return tape != nullptr && id >= 0; }
};

// Pins all stop_grad inputs to their values from a recording pass.
// Finite differences of a forward rebuilt under a frozen SgFreeze equal the
// tape gradient exactly, because stop_grad otherwise hides value changes
// from the derivative on purpose. Values are matched by call order, so the
// rebuilt forward must be structurally identical.
struct SgFreeze {
  bool recording = true;
  std::vector<DenseArray> values;
  std::size_t cursor = 0;
};

// Reverse-mode tape over DenseArray operations. Each forward op records a
// closure that scatters the output adjoint back onto its inputs; backward()
// walks the nodes once in reverse and then flushes leaf adjoints into the
// parameter stores they were drawn from.
class Tape {
 public:
  Var leaf(DenseArray value, bool requires_grad = false);
  Var param(ParamStore& store, const std::string& name);

  const DenseArray& val(const Var& v) const { return nodes_[v.id].value; }
  const DenseArray& grad_of(const Var& v) const;

  void backward(const Var& scalar_loss);

  // --- used by op builders ---
  Var emplace(DenseArray value, std::vector<int> parents,
              std::function<void(Tape&, int)> back);
  DenseArray& grad_ref(int id);
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }
  void mark_no_grad(int id) { nodes_[id].requires_grad = false; }
  const DenseArray& value_of(int id) const { return nodes_[id].value; }

  std::size_t node_count() const { return nodes_.size(); }

  void set_sg_freeze(SgFreeze* freeze) { sg_freeze_ = freeze; }
  SgFreeze* sg_freeze() const { return sg_freeze_; }

 private:
  SgFreeze* sg_freeze_ = nullptr;
  struct Node {
    DenseArray value;
    DenseArray grad;  // allocated lazily
    std::function<void(Tape&, int)> back;
    bool requires_grad = false;
  };
  struct ParamLink {
    int node = -1;
    ParamStore* store = nullptr;
    std::string name;
  };
  std::deque<Node> nodes_;
  std::vector<ParamLink> links_;
};

// ----- op builders -----

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var divide(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var scale_by(Var a, Var s);             // s is 1x1
Var add_rowvec(Var a, Var row);         // [n,d] + [1,d]
Var mul_colvec(Var a, Var col);         // [n,d] * [n,1] per row
Var matmul(Var a, Var b);
Var transpose(Var a);

Var relu(Var a);
Var sigmoid(Var a);
Var softplus(Var a);
Var tanhv(Var a);
Var expv(Var a);
Var logv(Var a);
Var sqrtv(Var a);
Var squarev(Var a);
Var acosv(Var a);    // input clamped to [-1+1e-9, 1-1e-9]
Var sincsq(Var a);   // sin(sqrt(s))/sqrt(s), smooth in s through 0
Var coscsq(Var a);   // (1-cos(sqrt(s)))/s

Var sum(Var a);
Var mean(Var a);
Var sum_sq(Var a);
Var l2norm(Var a);   // Frobenius norm, sqrt guarded at 0

Var rows_softmax(Var a);
// per-row feature normalization with learnable gain/bias rows
Var rows_layer_norm(Var a, Var gain, Var bias, double eps = 1e-6);
Var dropout(Var a, double rate, Rng& rng, bool training);
// Rows sum to 1 before dropout; survivors are rescaled by 1/(1-rate).
Var softmax_dropout(Var scores, double rate, Rng& rng, bool training);

Var reshape(Var a, std::size_t rows, std::size_t cols);

Var concat_cols(const std::vector<Var>& parts);
Var concat_rows(const std::vector<Var>& parts);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
Var slice_rows(Var a, std::size_t begin, std::size_t end);

Var gather_rows(Var a, std::shared_ptr<const std::vector<int>> idx);
Var scatter_add_rows(Var a, std::shared_ptr<const std::vector<int>> idx, std::size_t out_rows);
Var scatter_mean_rows(Var a, std::shared_ptr<const std::vector<int>> mapping,
                      std::size_t coarse_count);

// out[i,:] = sum_k alpha[i,k] * values[idx[i,k],:]
Var attend(Var alpha, Var values, std::shared_ptr<const std::vector<int>> idx);

Var rows_norm(Var a, double eps = 1e-12);       // [n,d] -> [n,1]
Var normalize_rows(Var a, double eps = 1e-8);   // zero rows stay zero
Var rows_dot(Var a, Var b);                     // [n,d],[n,d] -> [n,1]
Var cross_rows(Var a, Var b);                   // [n,3]

Var stop_grad(Var a);
// Forward value is bit-identical to q; the adjoint is routed to z.
Var straight_through(Var z, Var q);

Var leaf_const(Tape& t, DenseArray v);

}  // namespace dvq::net
