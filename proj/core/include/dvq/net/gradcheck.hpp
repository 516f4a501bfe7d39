#pragma once

#include <functional>
#include <string>

#include "dvq/net/store.hpp"

namespace dvq::net {

struct GradCheckResult {
  double max_rel_error = 0;
  std::string worst_param;
  std::size_t worst_coord = 0;
  double analytic = 0;
  double numeric = 0;
  std::size_t coords_checked = 0;
};

struct GradCheckOptions {
  double epsilon = 1e-5;
  // every coordinate when the store has at most this many, otherwise a
  // seeded random subsample of at least min_subsample
  std::size_t exhaustive_limit = 4000;
  std::size_t min_subsample = 200;
  std::uint64_t seed = 17;
};

// Central finite differences against the reverse-mode gradient.
// `loss_fn` must rebuild its tape from the store's current values and be
// deterministic; two baseline evaluations that disagree raise an error, as
// does any non-finite value (reported with the parameter coordinate).
GradCheckResult grad_check(const std::function<double(bool with_grad)>& loss_fn,
                           ParamStore& store, const GradCheckOptions& opts = {});

}  // namespace dvq::net
