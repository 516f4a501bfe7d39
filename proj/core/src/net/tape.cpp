#include "dvq/net/tape.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dvq/net/store.hpp"

namespace dvq::net {

namespace {
[[noreturn]] void shape_error(const char* op, const DenseArray& a, const DenseArray& b) {
  std::ostringstream os;
  os << op << ": shape mismatch [" << a.rows << "," << a.cols << "] vs [" << b.rows << ","
     << b.cols << "]";
  throw std::runtime_error(os.str());
}

void check_same(const char* op, const DenseArray& a, const DenseArray& b) {
  if (!a.same_shape(b)) shape_error(op, a, b);
}
}  // namespace

bool DenseArray::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

Var Tape::leaf(DenseArray value, bool requires_grad) {
  nodes_.push_back({std::move(value), {}, nullptr, requires_grad});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::param(ParamStore& store, const std::string& name) {
  Var v = leaf(store.value(name), true);
  links_.push_back({v.id, &store, name});
  return v;
}

Var Tape::emplace(DenseArray value, std::vector<int> parents,
                  std::function<void(Tape&, int)> back) {
  bool rg = false;
  for (int p : parents) rg = rg || nodes_[p].requires_grad;
  nodes_.push_back({std::move(value), {}, rg ? std::move(back) : nullptr, rg});
  return {this, static_cast<int>(nodes_.size()) - 1};
}

DenseArray& Tape::grad_ref(int id) {
  Node& n = nodes_[id];
  if (n.grad.data.empty()) n.grad = DenseArray(n.value.rows, n.value.cols);
  return n.grad;
}

const DenseArray& Tape::grad_of(const Var& v) const {
  static const DenseArray empty;
  const Node& n = nodes_[v.id];
  return n.grad.data.empty() ? empty : n.grad;
}

void Tape::backward(const Var& scalar_loss) {
  const Node& loss = nodes_[scalar_loss.id];
  if (loss.value.size() != 1) throw std::runtime_error("backward: loss is not a scalar");
  grad_ref(scalar_loss.id)[0] = 1.0;
  for (int id = scalar_loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (!n.requires_grad || !n.back || n.grad.data.empty()) continue;
    n.back(*this, id);
  }
  for (const ParamLink& link : links_) {
    const Node& n = nodes_[link.node];
    if (n.grad.data.empty()) continue;
    DenseArray& g = link.store->grad(link.name);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
  }
}

Var leaf_const(Tape& t, DenseArray v) { return t.leaf(std::move(v), false); }

// ---------------------------------------------------------------- basic ops

Var add(Var a, Var b) {
  Tape& t = *a.tape;
  const DenseArray& av = t.val(a);
  const DenseArray& bv = t.val(b);
  check_same("add", av, bv);
  DenseArray out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return t.emplace(std::move(out), {a.id, b.id}, [a, b](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    if (tp.requires_grad(a.id)) {
      DenseArray& ga = tp.grad_ref(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(b.id)) {
      DenseArray& gb = tp.grad_ref(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  Tape& t = *a.tape;
  const DenseArray& av = t.val(a);
  const DenseArray& bv = t.val(b);
  check_same("sub", av, bv);
  DenseArray out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return t.emplace(std::move(out), {a.id, b.id}, [a, b](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    if (tp.requires_grad(a.id)) {
      DenseArray& ga = tp.grad_ref(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(b.id)) {
      DenseArray& gb = tp.grad_ref(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = *a.tape;
  const DenseArray& av = t.val(a);
  const DenseArray& bv = t.val(b);
  check_same("mul", av, bv);
  DenseArray out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return t.emplace(std::move(out), {a.id, b.id}, [a, b](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    const DenseArray& av2 = tp.value_of(a.id);
    const DenseArray& bv2 = tp.value_of(b.id);
    if (tp.requires_grad(a.id)) {
      DenseArray& ga = tp.grad_ref(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv2[i];
    }
    if (tp.requires_grad(b.id)) {
      DenseArray& gb = tp.grad_ref(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av2[i];
    }
  });
}

Var divide(Var a, Var b) {
  Tape& t = *a.tape;
  const DenseArray& av = t.val(a);
  const DenseArray& bv = t.val(b);
  check_same("divide", av, bv);
  DenseArray out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= bv[i];
  return t.emplace(std::move(out), {a.id, b.id}, [a, b](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    const DenseArray& av2 = tp.value_of(a.id);
    const DenseArray& bv2 = tp.value_of(b.id);
    if (tp.requires_grad(a.id)) {
      DenseArray& ga = tp.grad_ref(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / bv2[i];
    }
    if (tp.requires_grad(b.id)) {
      DenseArray& gb = tp.grad_ref(b.id);
      for (std::size_t i = 0; i < g.size(); ++i)
        gb[i] -= g[i] * av2[i] / (bv2[i] * bv2[i]);
    }
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  DenseArray out = t.val(a);
  for (double& v : out.data) v *= s;
  return t.emplace(std::move(out), {a.id}, [a, s](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    DenseArray& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
  });
}

Var scale_by(Var a, Var s) {
  Tape& t = *a.tape;
  const double sv = t.val(s).item();
  DenseArray out = t.val(a);
  for (double& v : out.data) v *= sv;
  return t.emplace(std::move(out), {a.id, s.id}, [a, s](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    const DenseArray& av = tp.value_of(a.id);
    const double sv2 = tp.value_of(s.id).item();
    if (tp.requires_grad(a.id)) {
      DenseArray& ga = tp.grad_ref(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += sv2 * g[i];
    }
    if (tp.requires_grad(s.id)) {
      double acc = 0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
      tp.grad_ref(s.id)[0] += acc;
    }
  });
}

Var add_rowvec(Var a, Var row) {
  Tape& t = *a.tape;
  const DenseArray& av = t.val(a);
  const DenseArray& rv = t.val(row);
  if (rv.rows != 1 || rv.cols != av.cols) shape_error("add_rowvec", av, rv);
  DenseArray out = av;
  for (std::size_t i = 0; i < av.rows; ++i)
    for (std::size_t j = 0; j < av.cols; ++j) out(i, j) += rv[j];
  return t.emplace(std::move(out), {a.id, row.id}, [a, row](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    if (tp.requires_grad(a.id)) {
      DenseArray& ga = tp.grad_ref(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tp.requires_grad(row.id)) {
      DenseArray& gr = tp.grad_ref(row.id);
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) gr[j] += g(i, j);
    }
  });
}

Var mul_colvec(Var a, Var col) {
  Tape& t = *a.tape;
  const DenseArray& av = t.val(a);
  const DenseArray& cv = t.val(col);
  if (cv.cols != 1 || cv.rows != av.rows) shape_error("mul_colvec", av, cv);
  DenseArray out = av;
  for (std::size_t i = 0; i < av.rows; ++i)
    for (std::size_t j = 0; j < av.cols; ++j) out(i, j) *= cv[i];
  return t.emplace(std::move(out), {a.id, col.id}, [a, col](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    const DenseArray& av2 = tp.value_of(a.id);
    const DenseArray& cv2 = tp.value_of(col.id);
    if (tp.requires_grad(a.id)) {
      DenseArray& ga = tp.grad_ref(a.id);
      for (std::size_t i = 0; i < g.rows; ++i)
        for (std::size_t j = 0; j < g.cols; ++j) ga(i, j) += g(i, j) * cv2[i];
    }
    if (tp.requires_grad(col.id)) {
      DenseArray& gc = tp.grad_ref(col.id);
      for (std::size_t i = 0; i < g.rows; ++i) {
        double acc = 0;
        for (std::size_t j = 0; j < g.cols; ++j) acc += g(i, j) * av2(i, j);
        gc[i] += acc;
      }
    }
  });
}

namespace {
// C += A * B, all row-major, no aliasing
void gemm_acc(const DenseArray& a, const DenseArray& b, DenseArray& c) {
  const std::size_t n = a.rows, k = a.cols, m = b.cols;
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = &a.data[i * k];
    double* crow = &c.data[i * m];
    for (std::size_t p = 0; p < k; ++p) {
      const double av = arow[p];
      if (av == 0.0) continue;
      const double* brow = &b.data[p * m];
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}
// C += A * B^T
void gemm_bt_acc(const DenseArray& a, const DenseArray& b, DenseArray& c) {
  const std::size_t n = a.rows, k = a.cols, m = b.rows;
  for (std::size_t i = 0; i < n; ++i) {
    const double* arow = &a.data[i * k];
    double* crow = &c.data[i * m];
    for (std::size_t j = 0; j < m; ++j) {
      const double* brow = &b.data[j * k];
      double acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}
// C += A^T * B
void gemm_at_acc(const DenseArray& a, const DenseArray& b, DenseArray& c) {
  const std::size_t n = a.cols, k = a.rows, m = b.cols;
  for (std::size_t p = 0; p < k; ++p) {
    const double* arow = &a.data[p * n];
    const double* brow = &b.data[p * m];
    for (std::size_t i = 0; i < n; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = &c.data[i * m];
      for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
    }
  }
}
}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = *a.tape;
  const DenseArray& av = t.val(a);
  const DenseArray& bv = t.val(b);
  if (av.cols != bv.rows) shape_error("matmul", av, bv);
  DenseArray out(av.rows, bv.cols);
  gemm_acc(av, bv, out);
  return t.emplace(std::move(out), {a.id, b.id}, [a, b](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    if (tp.requires_grad(a.id)) gemm_bt_acc(g, tp.value_of(b.id), tp.grad_ref(a.id));
    if (tp.requires_grad(b.id)) gemm_at_acc(tp.value_of(a.id), g, tp.grad_ref(b.id));
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape;
  const DenseArray& av = t.val(a);
  DenseArray out(av.cols, av.rows);
  for (std::size_t i = 0; i < av.rows; ++i)
    for (std::size_t j = 0; j < av.cols; ++j) out(j, i) = av(i, j);
  return t.emplace(std::move(out), {a.id}, [a](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    DenseArray& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) ga(j, i) += g(i, j);
  });
}

// ---------------------------------------------------------------- unary ops

namespace {
template <typename F, typename DF>
Var unary(Var a, F f, DF df) {
  Tape& t = *a.tape;
  DenseArray out = t.val(a);
  for (double& v : out.data) v = f(v);
  return t.emplace(std::move(out), {a.id}, [a, df](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    const DenseArray& x = tp.value_of(a.id);
    const DenseArray& y = tp.value_of(self);
    DenseArray& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(x[i], y[i]);
  });
}
}  // namespace

Var relu(Var a) {
  return unary(
      a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
  return unary(
      a,
      [](double x) { return x > 30 ? x : std::log1p(std::exp(x)); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Var tanhv(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var expv(Var a) {
  return unary(
      a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var logv(Var a) {
  return unary(
      a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var sqrtv(Var a) {
  return unary(
      a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return y > 0 ? 0.5 / y : 0.0; });
}

Var squarev(Var a) {
  return unary(
      a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var acosv(Var a) {
  return unary(
      a,
      [](double x) {
        constexpr double lim = 1.0 - 1e-9;
        return std::acos(std::clamp(x, -lim, lim));
      },
      [](double x, double) {
        constexpr double lim = 1.0 - 1e-9;
        const double c = std::clamp(x, -lim, lim);
        return -1.0 / std::sqrt(1.0 - c * c);
      });
}

Var sincsq(Var a) {
  auto f = [](double s) {
    if (s < 1e-8) return 1.0 - s / 6.0 + s * s / 120.0;
    const double r = std::sqrt(s);
    return std::sin(r) / r;
  };
  auto df = [](double s, double) {
    if (s < 1e-8) return -1.0 / 6.0 + s / 60.0;
    const double r = std::sqrt(s);
    return (r * std::cos(r) - std::sin(r)) / (2.0 * s * r);
  };
  return unary(a, f, df);
}

Var coscsq(Var a) {
  auto f = [](double s) {
    if (s < 1e-8) return 0.5 - s / 24.0 + s * s / 720.0;
    return (1.0 - std::cos(std::sqrt(s))) / s;
  };
  auto df = [](double s, double) {
    if (s < 1e-8) return -1.0 / 24.0 + s / 360.0;
    const double r = std::sqrt(s);
    return (r * std::sin(r) - 2.0 * (1.0 - std::cos(r))) / (2.0 * s * s);
  };
  return unary(a, f, df);
}

// --------------------------------------------------------------- reductions

Var sum(Var a) {
  Tape& t = *a.tape;
  double acc = 0;
  for (double v : t.val(a).data) acc += v;
  return t.emplace(DenseArray::scalar(acc), {a.id}, [a](Tape& tp, int self) {
    const double g = tp.grad_ref(self)[0];
    DenseArray& ga = tp.grad_ref(a.id);
    for (double& v : ga.data) v += g;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.tape->val(a).size());
  return scale(sum(a), 1.0 / n);
}

Var sum_sq(Var a) {
  Tape& t = *a.tape;
  double acc = 0;
  for (double v : t.val(a).data) acc += v * v;
  return t.emplace(DenseArray::scalar(acc), {a.id}, [a](Tape& tp, int self) {
    const double g = tp.grad_ref(self)[0];
    const DenseArray& x = tp.value_of(a.id);
    DenseArray& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += 2.0 * g * x[i];
  });
}

Var l2norm(Var a) {
  Tape& t = *a.tape;
  double acc = 0;
  for (double v : t.val(a).data) acc += v * v;
  const double n = std::sqrt(acc);
  return t.emplace(DenseArray::scalar(n), {a.id}, [a, n](Tape& tp, int self) {
    const double g = tp.grad_ref(self)[0];
    const DenseArray& x = tp.value_of(a.id);
    DenseArray& ga = tp.grad_ref(a.id);
    const double inv = n > 1e-12 ? 1.0 / n : 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g * x[i] * inv;
  });
}

// ------------------------------------------------------------ softmax & co

Var rows_softmax(Var a) {
  Tape& t = *a.tape;
  DenseArray out = t.val(a);
  for (std::size_t i = 0; i < out.rows; ++i) {
    double mx = -1e300;
    for (std::size_t j = 0; j < out.cols; ++j) mx = std::max(mx, out(i, j));
    double denom = 0;
    for (std::size_t j = 0; j < out.cols; ++j) {
      out(i, j) = std::exp(out(i, j) - mx);
      denom += out(i, j);
    }
    for (std::size_t j = 0; j < out.cols; ++j) out(i, j) /= denom;
  }
  return t.emplace(std::move(out), {a.id}, [a](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    const DenseArray& y = tp.value_of(self);
    DenseArray& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < y.rows; ++i) {
      double dot = 0;
      for (std::size_t j = 0; j < y.cols; ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols; ++j) ga(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

Var rows_layer_norm(Var a, Var gain, Var bias, double eps) {
  Tape& t = *a.tape;
  const DenseArray& av = t.val(a);
  const DenseArray& gv = t.val(gain);
  const DenseArray& bv = t.val(bias);
  if (gv.rows != 1 || gv.cols != av.cols || !gv.same_shape(bv))
    shape_error("rows_layer_norm", av, gv);
  const std::size_t n = av.rows, d = av.cols;
  DenseArray out(n, d);
  auto inv_std = std::make_shared<std::vector<double>>(n);
  auto normed = std::make_shared<DenseArray>(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double mean = 0;
    for (std::size_t j = 0; j < d; ++j) mean += av(i, j);
    mean /= static_cast<double>(d);
    double var = 0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = av(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      (*normed)(i, j) = (av(i, j) - mean) * inv;
      out(i, j) = (*normed)(i, j) * gv[j] + bv[j];
    }
  }
  return t.emplace(std::move(out), {a.id, gain.id, bias.id},
                   [a, gain, bias, inv_std, normed](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    const DenseArray& gv2 = tp.value_of(gain.id);
    const std::size_t n2 = g.rows, d2 = g.cols;
    if (tp.requires_grad(gain.id)) {
      DenseArray& gg = tp.grad_ref(gain.id);
      for (std::size_t i = 0; i < n2; ++i)
        for (std::size_t j = 0; j < d2; ++j) gg[j] += g(i, j) * (*normed)(i, j);
    }
    if (tp.requires_grad(bias.id)) {
      DenseArray& gb = tp.grad_ref(bias.id);
      for (std::size_t i = 0; i < n2; ++i)
        for (std::size_t j = 0; j < d2; ++j) gb[j] += g(i, j);
    }
    if (tp.requires_grad(a.id)) {
      DenseArray& ga = tp.grad_ref(a.id);
      for (std::size_t i = 0; i < n2; ++i) {
        double mean_dy = 0, mean_dyx = 0;
        for (std::size_t j = 0; j < d2; ++j) {
          const double dy = g(i, j) * gv2[j];
          mean_dy += dy;
          mean_dyx += dy * (*normed)(i, j);
        }
        mean_dy /= static_cast<double>(d2);
        mean_dyx /= static_cast<double>(d2);
        for (std::size_t j = 0; j < d2; ++j) {
          const double dy = g(i, j) * gv2[j];
          ga(i, j) += (*inv_std)[i] * (dy - mean_dy - (*normed)(i, j) * mean_dyx);
        }
      }
    }
  });
}

Var dropout(Var a, double rate, Rng& rng, bool training) {
  if (!(rate >= 0.0 && rate < 1.0)) throw std::runtime_error("dropout: rate must be in [0,1)");
  if (!training || rate == 0.0) return a;
  Tape& t = *a.tape;
  DenseArray out = t.val(a);
  auto mask = std::make_shared<std::vector<std::uint8_t>>(out.size());
  const double keep = 1.0 - rate;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool alive = rng.uniform() >= rate;
    (*mask)[i] = alive;
    out[i] = alive ? out[i] / keep : 0.0;
  }
  return t.emplace(std::move(out), {a.id}, [a, mask, keep](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    DenseArray& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      if ((*mask)[i]) ga[i] += g[i] / keep;
  });
}

Var softmax_dropout(Var scores, double rate, Rng& rng, bool training) {
  return dropout(rows_softmax(scores), rate, rng, training);
}

// ------------------------------------------------------- concat/slice/index

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  Tape& t = *a.tape;
  const DenseArray& av = t.val(a);
  if (rows * cols != av.size()) throw std::runtime_error("reshape: element count mismatch");
  DenseArray out(rows, cols, av.data);
  return t.emplace(std::move(out), {a.id}, [a](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    DenseArray& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::runtime_error("concat_cols: no inputs");
  Tape& t = *parts[0].tape;
  const std::size_t rows = t.val(parts[0]).rows;
  std::size_t cols = 0;
  for (const Var& p : parts) {
    if (t.val(p).rows != rows) shape_error("concat_cols", t.val(parts[0]), t.val(p));
    cols += t.val(p).cols;
  }
  DenseArray out(rows, cols);
  std::size_t off = 0;
  std::vector<int> ids;
  for (const Var& p : parts) {
    const DenseArray& pv = t.val(p);
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < pv.cols; ++j) out(i, off + j) = pv(i, j);
    off += pv.cols;
    ids.push_back(p.id);
  }
  auto parts_copy = std::make_shared<std::vector<Var>>(parts);
  return t.emplace(std::move(out), std::move(ids), [parts_copy](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    std::size_t off2 = 0;
    for (const Var& p : *parts_copy) {
      const std::size_t c = tp.value_of(p.id).cols;
      if (tp.requires_grad(p.id)) {
        DenseArray& gp = tp.grad_ref(p.id);
        for (std::size_t i = 0; i < g.rows; ++i)
          for (std::size_t j = 0; j < c; ++j) gp(i, j) += g(i, off2 + j);
      }
      off2 += c;
    }
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::runtime_error("concat_rows: no inputs");
  Tape& t = *parts[0].tape;
  const std::size_t cols = t.val(parts[0]).cols;
  std::size_t rows = 0;
  for (const Var& p : parts) {
    if (t.val(p).cols != cols) shape_error("concat_rows", t.val(parts[0]), t.val(p));
    rows += t.val(p).rows;
  }
  DenseArray out(rows, cols);
  std::size_t off = 0;
  std::vector<int> ids;
  for (const Var& p : parts) {
    const DenseArray& pv = t.val(p);
    std::copy(pv.data.begin(), pv.data.end(), out.data.begin() + off * cols);
    off += pv.rows;
    ids.push_back(p.id);
  }
  auto parts_copy = std::make_shared<std::vector<Var>>(parts);
  return t.emplace(std::move(out), std::move(ids), [parts_copy](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    std::size_t off2 = 0;
    for (const Var& p : *parts_copy) {
      const DenseArray& pv = tp.value_of(p.id);
      if (tp.requires_grad(p.id)) {
        DenseArray& gp = tp.grad_ref(p.id);
        for (std::size_t i = 0; i < pv.size(); ++i) gp[i] += g.data[off2 * g.cols + i];
      }
      off2 += pv.rows;
    }
  });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& t = *a.tape;
  const DenseArray& av = t.val(a);
  if (end > av.cols || begin >= end) throw std::runtime_error("slice_cols: bad range");
  DenseArray out(av.rows, end - begin);
  for (std::size_t i = 0; i < av.rows; ++i)
    for (std::size_t j = begin; j < end; ++j) out(i, j - begin) = av(i, j);
  return t.emplace(std::move(out), {a.id}, [a, begin](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    DenseArray& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) ga(i, begin + j) += g(i, j);
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  Tape& t = *a.tape;
  const DenseArray& av = t.val(a);
  if (end > av.rows || begin >= end) throw std::runtime_error("slice_rows: bad range");
  DenseArray out(end - begin, av.cols);
  std::copy(av.data.begin() + begin * av.cols, av.data.begin() + end * av.cols,
            out.data.begin());
  return t.emplace(std::move(out), {a.id}, [a, begin](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    DenseArray& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < g.rows; ++i)
      for (std::size_t j = 0; j < g.cols; ++j) ga(begin + i, j) += g(i, j);
  });
}

Var gather_rows(Var a, std::shared_ptr<const std::vector<int>> idx) {
  Tape& t = *a.tape;
  const DenseArray& av = t.val(a);
  DenseArray out(idx->size(), av.cols);
  for (std::size_t i = 0; i < idx->size(); ++i) {
    const int src = (*idx)[i];
    std::copy(av.data.begin() + src * av.cols, av.data.begin() + (src + 1) * av.cols,
              out.data.begin() + i * av.cols);
  }
  return t.emplace(std::move(out), {a.id}, [a, idx](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    DenseArray& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < idx->size(); ++i) {
      const int src = (*idx)[i];
      for (std::size_t j = 0; j < g.cols; ++j) ga(src, j) += g(i, j);
    }
  });
}

Var scatter_add_rows(Var a, std::shared_ptr<const std::vector<int>> idx, std::size_t out_rows) {
  Tape& t = *a.tape;
  const DenseArray& av = t.val(a);
  if (idx->size() != av.rows) throw std::runtime_error("scatter_add_rows: index count mismatch");
  DenseArray out(out_rows, av.cols);
  for (std::size_t i = 0; i < av.rows; ++i) {
    const int dst = (*idx)[i];
    for (std::size_t j = 0; j < av.cols; ++j) out(dst, j) += av(i, j);
  }
  return t.emplace(std::move(out), {a.id}, [a, idx](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    DenseArray& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < ga.rows; ++i) {
      const int dst = (*idx)[i];
      for (std::size_t j = 0; j < g.cols; ++j) ga(i, j) += g(dst, j);
    }
  });
}

Var scatter_mean_rows(Var a, std::shared_ptr<const std::vector<int>> mapping,
                      std::size_t coarse_count) {
  Tape& t = *a.tape;
  const DenseArray& av = t.val(a);
  if (mapping->size() != av.rows)
    throw std::runtime_error("scatter_mean_rows: mapping is not total over input rows");
  auto counts = std::make_shared<std::vector<double>>(coarse_count, 0.0);
  for (int m : *mapping) {
    if (m < 0 || static_cast<std::size_t>(m) >= coarse_count)
      throw std::runtime_error("scatter_mean_rows: mapping index out of range");
    (*counts)[m] += 1.0;
  }
  for (std::size_t c = 0; c < coarse_count; ++c)
    if ((*counts)[c] == 0.0)
      throw std::runtime_error("scatter_mean_rows: coarse index " + std::to_string(c) +
                               " has no preimage");
  DenseArray out(coarse_count, av.cols);
  for (std::size_t i = 0; i < av.rows; ++i) {
    const int dst = (*mapping)[i];
    for (std::size_t j = 0; j < av.cols; ++j) out(dst, j) += av(i, j);
  }
  for (std::size_t c = 0; c < coarse_count; ++c)
    for (std::size_t j = 0; j < av.cols; ++j) out(c, j) /= (*counts)[c];
  return t.emplace(std::move(out), {a.id}, [a, mapping, counts](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    DenseArray& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < ga.rows; ++i) {
      const int dst = (*mapping)[i];
      const double inv = 1.0 / (*counts)[dst];
      for (std::size_t j = 0; j < g.cols; ++j) ga(i, j) += g(dst, j) * inv;
    }
  });
}

Var attend(Var alpha, Var values, std::shared_ptr<const std::vector<int>> idx) {
  Tape& t = *alpha.tape;
  const DenseArray& al = t.val(alpha);
  const DenseArray& vv = t.val(values);
  if (idx->size() != al.size()) throw std::runtime_error("attend: index/weight size mismatch");
  DenseArray out(al.rows, vv.cols);
  for (std::size_t i = 0; i < al.rows; ++i) {
    for (std::size_t k = 0; k < al.cols; ++k) {
      const double w = al(i, k);
      const int src = (*idx)[i * al.cols + k];
      const double* row = &vv.data[src * vv.cols];
      double* orow = &out.data[i * out.cols];
      for (std::size_t j = 0; j < vv.cols; ++j) orow[j] += w * row[j];
    }
  }
  return t.emplace(std::move(out), {alpha.id, values.id}, [alpha, values, idx](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    const DenseArray& al2 = tp.value_of(alpha.id);
    const DenseArray& vv2 = tp.value_of(values.id);
    const bool need_alpha = tp.requires_grad(alpha.id);
    const bool need_values = tp.requires_grad(values.id);
    DenseArray* galpha = need_alpha ? &tp.grad_ref(alpha.id) : nullptr;
    DenseArray* gvalues = need_values ? &tp.grad_ref(values.id) : nullptr;
    for (std::size_t i = 0; i < al2.rows; ++i) {
      const double* grow = &g.data[i * g.cols];
      for (std::size_t k = 0; k < al2.cols; ++k) {
        const int src = (*idx)[i * al2.cols + k];
        const double* vrow = &vv2.data[src * vv2.cols];
        if (need_alpha) {
          double acc = 0;
          for (std::size_t j = 0; j < g.cols; ++j) acc += grow[j] * vrow[j];
          (*galpha)(i, k) += acc;
        }
        if (need_values) {
          const double w = al2(i, k);
          double* gvrow = &gvalues->data[src * vv2.cols];
          for (std::size_t j = 0; j < g.cols; ++j) gvrow[j] += w * grow[j];
        }
      }
    }
  });
}

// -------------------------------------------------------------- vector rows

Var rows_norm(Var a, double eps) {
  Tape& t = *a.tape;
  const DenseArray& av = t.val(a);
  DenseArray out(av.rows, 1);
  for (std::size_t i = 0; i < av.rows; ++i) {
    double acc = 0;
    for (std::size_t j = 0; j < av.cols; ++j) acc += av(i, j) * av(i, j);
    out[i] = std::sqrt(acc);
  }
  return t.emplace(std::move(out), {a.id}, [a, eps](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    const DenseArray& x = tp.value_of(a.id);
    const DenseArray& y = tp.value_of(self);
    DenseArray& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < x.rows; ++i) {
      const double inv = y[i] > eps ? g[i] / y[i] : 0.0;
      for (std::size_t j = 0; j < x.cols; ++j) ga(i, j) += inv * x(i, j);
    }
  });
}

Var normalize_rows(Var a, double eps) {
  Tape& t = *a.tape;
  const DenseArray& av = t.val(a);
  DenseArray out = av;
  std::vector<double> norms(av.rows);
  for (std::size_t i = 0; i < av.rows; ++i) {
    double acc = 0;
    for (std::size_t j = 0; j < av.cols; ++j) acc += av(i, j) * av(i, j);
    const double n = std::sqrt(acc);
    norms[i] = n;
    const double inv = n > eps ? 1.0 / n : 0.0;
    for (std::size_t j = 0; j < av.cols; ++j) out(i, j) *= inv;
  }
  auto saved = std::make_shared<std::vector<double>>(std::move(norms));
  return t.emplace(std::move(out), {a.id}, [a, saved, eps](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    const DenseArray& y = tp.value_of(self);
    DenseArray& ga = tp.grad_ref(a.id);
    for (std::size_t i = 0; i < y.rows; ++i) {
      const double n = (*saved)[i];
      if (n <= eps) continue;
      double dot = 0;
      for (std::size_t j = 0; j < y.cols; ++j) dot += g(i, j) * y(i, j);
      for (std::size_t j = 0; j < y.cols; ++j) ga(i, j) += (g(i, j) - y(i, j) * dot) / n;
    }
  });
}

Var rows_dot(Var a, Var b) {
  Tape& t = *a.tape;
  const DenseArray& av = t.val(a);
  const DenseArray& bv = t.val(b);
  check_same("rows_dot", av, bv);
  DenseArray out(av.rows, 1);
  for (std::size_t i = 0; i < av.rows; ++i) {
    double acc = 0;
    for (std::size_t j = 0; j < av.cols; ++j) acc += av(i, j) * bv(i, j);
    out[i] = acc;
  }
  return t.emplace(std::move(out), {a.id, b.id}, [a, b](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    const DenseArray& av2 = tp.value_of(a.id);
    const DenseArray& bv2 = tp.value_of(b.id);
    if (tp.requires_grad(a.id)) {
      DenseArray& ga = tp.grad_ref(a.id);
      for (std::size_t i = 0; i < av2.rows; ++i)
        for (std::size_t j = 0; j < av2.cols; ++j) ga(i, j) += g[i] * bv2(i, j);
    }
    if (tp.requires_grad(b.id)) {
      DenseArray& gb = tp.grad_ref(b.id);
      for (std::size_t i = 0; i < av2.rows; ++i)
        for (std::size_t j = 0; j < av2.cols; ++j) gb(i, j) += g[i] * av2(i, j);
    }
  });
}

Var cross_rows(Var a, Var b) {
  Tape& t = *a.tape;
  const DenseArray& av = t.val(a);
  const DenseArray& bv = t.val(b);
  check_same("cross_rows", av, bv);
  if (av.cols != 3) throw std::runtime_error("cross_rows: inputs must be [n,3]");
  DenseArray out(av.rows, 3);
  for (std::size_t i = 0; i < av.rows; ++i) {
    out(i, 0) = av(i, 1) * bv(i, 2) - av(i, 2) * bv(i, 1);
    out(i, 1) = av(i, 2) * bv(i, 0) - av(i, 0) * bv(i, 2);
    out(i, 2) = av(i, 0) * bv(i, 1) - av(i, 1) * bv(i, 0);
  }
  return t.emplace(std::move(out), {a.id, b.id}, [a, b](Tape& tp, int self) {
    // d/da (a x b) adjoint: ga += b x g;   d/db: gb += g x a
    const DenseArray& g = tp.grad_ref(self);
    const DenseArray& av2 = tp.value_of(a.id);
    const DenseArray& bv2 = tp.value_of(b.id);
    if (tp.requires_grad(a.id)) {
      DenseArray& ga = tp.grad_ref(a.id);
      for (std::size_t i = 0; i < g.rows; ++i) {
        ga(i, 0) += bv2(i, 1) * g(i, 2) - bv2(i, 2) * g(i, 1);
        ga(i, 1) += bv2(i, 2) * g(i, 0) - bv2(i, 0) * g(i, 2);
        ga(i, 2) += bv2(i, 0) * g(i, 1) - bv2(i, 1) * g(i, 0);
      }
    }
    if (tp.requires_grad(b.id)) {
      DenseArray& gb = tp.grad_ref(b.id);
      for (std::size_t i = 0; i < g.rows; ++i) {
        gb(i, 0) += g(i, 1) * av2(i, 2) - g(i, 2) * av2(i, 1);
        gb(i, 1) += g(i, 2) * av2(i, 0) - g(i, 0) * av2(i, 2);
        gb(i, 2) += g(i, 0) * av2(i, 1) - g(i, 1) * av2(i, 0);
      }
    }
  });
}

// ------------------------------------------------------------- grad routing

Var stop_grad(Var a) {
  Tape& t = *a.tape;
  if (SgFreeze* fz = t.sg_freeze()) {
    if (fz->recording) {
      fz->values.push_back(t.val(a));
      return t.leaf(t.val(a), false);
    }
    if (fz->cursor >= fz->values.size())
      throw std::runtime_error("stop_grad: frozen replay ran past the recorded values");
    return t.leaf(fz->values[fz->cursor++], false);
  }
  Var v = t.emplace(t.val(a), {}, nullptr);
  t.mark_no_grad(v.id);
  return v;
}

Var straight_through(Var z, Var q) {
  Tape& t = *z.tape;
  const DenseArray& zv = t.val(z);
  const DenseArray& qv = t.val(q);
  check_same("straight_through", zv, qv);
  return t.emplace(qv, {z.id}, [z](Tape& tp, int self) {
    const DenseArray& g = tp.grad_ref(self);
    DenseArray& gz = tp.grad_ref(z.id);
    for (std::size_t i = 0; i < g.size(); ++i) gz[i] += g[i];
  });
}

}  // namespace dvq::net
