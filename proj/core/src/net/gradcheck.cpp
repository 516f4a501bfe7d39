#include "dvq/net/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace dvq::net {

GradCheckResult grad_check(const std::function<double(bool)>& loss_fn, ParamStore& store,
                           const GradCheckOptions& opts) {
  const double base1 = loss_fn(false);
  const double base2 = loss_fn(false);
  if (!(base1 == base2))
    throw std::runtime_error("grad_check: function is not deterministic (fix the seed)");
  if (!std::isfinite(base1)) throw std::runtime_error("grad_check: non-finite baseline loss");

  store.zero_grads();
  loss_fn(true);

  struct Coord {
    std::string name;
    std::size_t index;
    double analytic;
  };
  std::vector<Coord> coords;
  for (const auto& [name, e] : store.entries())
    for (std::size_t i = 0; i < e.value.size(); ++i) {
      if (!std::isfinite(e.grad[i]))
        throw std::runtime_error("grad_check: non-finite gradient at " + name + "[" +
                                 std::to_string(i) + "]");
      coords.push_back({name, i, e.grad[i]});
    }

  if (coords.size() > opts.exhaustive_limit) {
    Rng rng(opts.seed);
    std::vector<Coord> sample;
    const std::size_t want = std::max(opts.min_subsample, std::size_t{200});
    sample.reserve(want);
    for (std::size_t i = 0; i < want; ++i)
      sample.push_back(coords[rng.uniform_int(static_cast<int>(coords.size()))]);
    coords.swap(sample);
  }

  GradCheckResult result;
  result.coords_checked = coords.size();
  for (const Coord& c : coords) {
    DenseArray& value = store.value(c.name);
    const double saved = value[c.index];
    value[c.index] = saved + opts.epsilon;
    const double fp = loss_fn(false);
    value[c.index] = saved - opts.epsilon;
    const double fm = loss_fn(false);
    value[c.index] = saved;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::runtime_error("grad_check: non-finite perturbed loss at " + c.name + "[" +
                               std::to_string(c.index) + "]");
    const double fd = (fp - fm) / (2.0 * opts.epsilon);
    const double denom = std::max({1.0, std::abs(c.analytic), std::abs(fd)});
    const double rel = std::abs(c.analytic - fd) / denom;
    if (rel > result.max_rel_error) {
      result.max_rel_error = rel;
      result.worst_param = c.name;
      result.worst_coord = c.index;
      result.analytic = c.analytic;
      result.numeric = fd;
    }
  }
  store.zero_grads();
  return result;
}

}  // namespace dvq::net
