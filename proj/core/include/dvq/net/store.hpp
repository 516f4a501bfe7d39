#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "dvq/net/array.hpp"
#include "dvq/net/rng.hpp"

namespace dvq::net {

enum class Init { Zeros, Uniform, He, Xavier };

// Named parameters with matching gradient slots and Adam moments, plus the
// RNG used for initialization. One store is confined to one training thread.
//
// Checkpoint layout (all little-endian):
//   8 bytes  magic "DVQCKPT\n"
//   u32      version (currently 1)
//   u64      init seed
//   u64      optimizer step count
//   u32      parameter count, then per parameter in name order:
//     u32 name length, name bytes
//     u32 rows, u32 cols
//     rows*cols f64 values
//     rows*cols f64 first moments
//     rows*cols f64 second moments
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed) : seed_(seed), rng_(seed) {}

  DenseArray& ensure(const std::string& name, std::size_t rows, std::size_t cols,
                     Init init = Init::He);
  bool has(const std::string& name) const { return params_.count(name) != 0; }
  DenseArray& value(const std::string& name);
  const DenseArray& value(const std::string& name) const;
  DenseArray& grad(const std::string& name);

  void zero_grads();
  std::size_t coordinate_count() const;
  std::uint64_t seed() const { return seed_; }
  std::int64_t step() const { return step_; }

  void save(const std::filesystem::path& path) const;
  static ParamStore load(const std::filesystem::path& path);

  // Standard Adam with bias correction; clears gradients afterwards.
  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  struct Entry {
    DenseArray value, grad, m, v;
  };
  const std::map<std::string, Entry>& entries() const { return params_; }
  std::map<std::string, Entry>& entries() { return params_; }

 private:
  std::map<std::string, Entry> params_;
  std::uint64_t seed_;
  Rng rng_;
  std::int64_t step_ = 0;
};

}  // namespace dvq::net
