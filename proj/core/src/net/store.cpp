#include "dvq/net/store.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace dvq::net {

DenseArray& ParamStore::ensure(const std::string& name, std::size_t rows, std::size_t cols,
                               Init init) {
  auto it = params_.find(name);
  if (it != params_.end()) {
    if (it->second.value.rows != rows || it->second.value.cols != cols)
      throw std::runtime_error("parameter '" + name + "' re-registered with a different shape");
    return it->second.value;
  }
  Entry e;
  e.value = DenseArray(rows, cols);
  e.grad = DenseArray(rows, cols);
  e.m = DenseArray(rows, cols);
  e.v = DenseArray(rows, cols);
  switch (init) {
    case Init::Zeros:
      break;
    case Init::Uniform:
      for (double& x : e.value.data) x = rng_.uniform(-1.0, 1.0);
      break;
    case Init::He: {
      const double s = std::sqrt(2.0 / static_cast<double>(rows));
      for (double& x : e.value.data) x = rng_.normal() * s;
      break;
    }
    case Init::Xavier: {
      const double s = std::sqrt(6.0 / static_cast<double>(rows + cols));
      for (double& x : e.value.data) x = rng_.uniform(-s, s);
      break;
    }
  }
  return params_.emplace(name, std::move(e)).first->second.value;
}

DenseArray& ParamStore::value(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::runtime_error("unknown parameter '" + name + "'");
  return it->second.value;
}

const DenseArray& ParamStore::value(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::runtime_error("unknown parameter '" + name + "'");
  return it->second.value;
}

DenseArray& ParamStore::grad(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::runtime_error("unknown parameter '" + name + "'");
  return it->second.grad;
}

void ParamStore::zero_grads() {
  for (auto& [name, e] : params_) e.grad.fill(0.0);
}

std::size_t ParamStore::coordinate_count() const {
  std::size_t n = 0;
  for (const auto& [name, e] : params_) n += e.value.size();
  return n;
}

void ParamStore::adam_step(double lr, double beta1, double beta2, double eps) {
  step_ += 1;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_));
  for (auto& [name, e] : params_) {
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      const double g = e.grad[i];
      e.m[i] = beta1 * e.m[i] + (1.0 - beta1) * g;
      e.v[i] = beta2 * e.v[i] + (1.0 - beta2) * g * g;
      const double mhat = e.m[i] / bc1;
      const double vhat = e.v[i] / bc2;
      e.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    e.grad.fill(0.0);
  }
}

namespace {
constexpr char kMagic[8] = {'D', 'V', 'Q', 'C', 'K', 'P', 'T', '\n'};

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}
void put_array(std::ostream& out, const DenseArray& a) {
  out.write(reinterpret_cast<const char*>(a.data.data()),
            static_cast<std::streamsize>(a.size() * sizeof(double)));
}
void get_array(std::istream& in, DenseArray& a) {
  in.read(reinterpret_cast<char*>(a.data.data()),
          static_cast<std::streamsize>(a.size() * sizeof(double)));
  if (!in) throw std::runtime_error("checkpoint: truncated array payload");
}
}  // namespace

void ParamStore::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  out.write(kMagic, 8);
  put<std::uint32_t>(out, 1);
  put<std::uint64_t>(out, seed_);
  put<std::uint64_t>(out, static_cast<std::uint64_t>(step_));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params_.size()));
  for (const auto& [name, e] : params_) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.rows));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(e.value.cols));
    put_array(out, e.value);
    put_array(out, e.m);
    put_array(out, e.v);
  }
}

ParamStore ParamStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path.string());
  const auto version = get<std::uint32_t>(in);
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version");
  const auto seed = get<std::uint64_t>(in);
  const auto step = get<std::uint64_t>(in);
  ParamStore store(seed);
  store.step_ = static_cast<std::int64_t>(step);
  const auto count = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = get<std::uint32_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto rows = get<std::uint32_t>(in);
    const auto cols = get<std::uint32_t>(in);
    Entry e;
    e.value = DenseArray(rows, cols);
    e.grad = DenseArray(rows, cols);
    e.m = DenseArray(rows, cols);
    e.v = DenseArray(rows, cols);
    get_array(in, e.value);
    get_array(in, e.m);
    get_array(in, e.v);
    store.params_.emplace(std::move(name), std::move(e));
  }
  return store;
}

}  // namespace dvq::net
