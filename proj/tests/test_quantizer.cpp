#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dvq/vq/codebook.hpp"

using namespace dvq;
using net::DenseArray;
using net::Rng;
using net::Tape;
using net::Var;

namespace {

// independent exhaustive scan, identical loop order so the arithmetic is
// bit-for-bit comparable
std::pair<int, double> scan_oracle(const DenseArray& book, const std::vector<double>& z) {
  int best = -1;
  double best_d = 0;
  for (std::size_t j = 0; j < book.rows; ++j) {
    double d = 0;
    for (std::size_t k = 0; k < book.cols; ++k) {
      const double diff = z[k] - book(j, k);
      d += diff * diff;
    }
    if (best < 0 || d < best_d) {
      best = static_cast<int>(j);
      best_d = d;
    }
  }
  return {best, best_d};
}

}  // namespace

TEST_CASE("exact-entry query returns that index at distance zero") {
  DenseArray book(5, 4);
  Rng rng(1);
  for (double& v : book.data) v = rng.uniform(-1, 1);
  std::vector<double> z(4);
  for (int k = 0; k < 4; ++k) z[k] = book(3, k);
  const vq::NearestEntry n = vq::nearest_entry(book, z);
  CHECK(n.index == 3);
  CHECK(n.dist_sq == 0.0);
  CHECK(n.entry == z);
}

TEST_CASE("equidistant entries resolve to the lower index") {
  DenseArray book(3, 2, {1, 0, -1, 0, 0, 5});
  const vq::NearestEntry n = vq::nearest_entry(book, {0.0, 0.0});
  CHECK(n.index == 0);
}

TEST_CASE("1000 random lookups equal the exhaustive scan exactly") {
  Rng rng(271828);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t entries = 1 + rng.uniform_int(64);
    const std::size_t dim = 1 + rng.uniform_int(16);
    DenseArray book(entries, dim);
    for (double& v : book.data) v = rng.uniform(-1, 1);
    std::vector<double> z(dim);
    for (double& v : z) v = rng.uniform(-1, 1);
    const auto [idx, dist] = scan_oracle(book, z);
    const vq::NearestEntry n = vq::nearest_entry(book, z);
    CHECK(n.index == idx);
    CHECK(n.dist_sq == dist);  // bit-exact
  }
}

TEST_CASE("quantize: exact codebook hits give L_E = 0 and straight-through bit equality") {
  net::ParamStore store(5);
  vq::CodebookConfig cfg{6, 4};
  vq::codebooks_register(store, cfg);

  Tape tape;
  // encoder outputs placed exactly on entry 2 of each codebook
  DenseArray zt(1, 4);
  for (int k = 0; k < 4; ++k) zt[k] = store.value(vq::object_codebook_name())(2, k);
  Var z_t = tape.leaf(zt, true);
  std::vector<Var> parts;
  for (int p = 0; p < vq::kHandParts; ++p) {
    DenseArray zp(1, 4);
    for (int k = 0; k < 4; ++k) zp[k] = store.value(vq::hand_codebook_name(p))(2, k);
    parts.push_back(tape.leaf(zp, true));
  }
  const vq::QuantizeResult q = vq::quantize(tape, store, z_t, parts, cfg);
  CHECK(q.object_index == 2);
  for (int p = 0; p < vq::kHandParts; ++p) {
    CHECK(q.hand_indices[p] == 2);
    for (int k = 0; k < 4; ++k)
      CHECK(tape.val(q.hand_st[p])[k] == store.value(vq::hand_codebook_name(p))(2, k));
  }
  Var loss = vq::codebook_loss(z_t, q.object_entry, parts, q.hand_entries, 0.25, 10.0);
  CHECK(tape.val(loss).item() == 0.0);
}

TEST_CASE("straight-through forward equals the nearest entry bit for bit") {
  net::ParamStore store(6);
  vq::CodebookConfig cfg{16, 8};
  vq::codebooks_register(store, cfg);
  Rng rng(9);
  Tape tape;
  DenseArray zt(1, 8);
  for (double& v : zt.data) v = rng.uniform(-1, 1);
  Var z_t = tape.leaf(zt, true);
  std::vector<Var> parts;
  for (int p = 0; p < vq::kHandParts; ++p) {
    DenseArray zp(1, 8);
    for (double& v : zp.data) v = rng.uniform(-1, 1);
    parts.push_back(tape.leaf(zp, true));
  }
  const vq::QuantizeResult q = vq::quantize(tape, store, z_t, parts, cfg);
  for (int p = 0; p < vq::kHandParts; ++p) {
    const DenseArray& book = store.value(vq::hand_codebook_name(p));
    for (int k = 0; k < 8; ++k)
      CHECK(tape.val(q.hand_st[p])[k] == book(q.hand_indices[p], k));
  }
}

TEST_CASE("permuting the hand parts permutes the indices identically") {
  net::ParamStore store(7);
  vq::CodebookConfig cfg{12, 6};
  vq::codebooks_register(store, cfg);
  // identical codebooks across parts so a part permutation is observable
  for (int p = 1; p < vq::kHandParts; ++p)
    store.value(vq::hand_codebook_name(p)) = store.value(vq::hand_codebook_name(0));

  Rng rng(11);
  std::vector<DenseArray> zs;
  for (int p = 0; p < vq::kHandParts; ++p) {
    DenseArray z(1, 6);
    for (double& v : z.data) v = rng.uniform(-1, 1);
    zs.push_back(z);
  }
  auto run = [&](const std::vector<int>& order) {
    Tape tape;
    DenseArray zt(1, 6);
    Var z_t = tape.leaf(zt, true);
    std::vector<Var> parts;
    for (int p = 0; p < vq::kHandParts; ++p) parts.push_back(tape.leaf(zs[order[p]], true));
    return vq::quantize(tape, store, z_t, parts, cfg).hand_indices;
  };
  const auto base = run({0, 1, 2, 3, 4, 5});
  const auto permuted = run({5, 3, 1, 0, 2, 4});
  const int order[6] = {5, 3, 1, 0, 2, 4};
  for (int p = 0; p < vq::kHandParts; ++p) CHECK(permuted[p] == base[order[p]]);
}

TEST_CASE("random batch indices match 7 independent oracle scans") {
  net::ParamStore store(8);
  vq::CodebookConfig cfg{32, 10};
  vq::codebooks_register(store, cfg);
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    Tape tape;
    DenseArray zt(1, 10);
    for (double& v : zt.data) v = rng.uniform(-1, 1);
    std::vector<Var> parts;
    std::vector<DenseArray> zs;
    for (int p = 0; p < vq::kHandParts; ++p) {
      DenseArray z(1, 10);
      for (double& v : z.data) v = rng.uniform(-1, 1);
      zs.push_back(z);
      parts.push_back(tape.leaf(zs.back(), true));
    }
    const vq::QuantizeResult q = vq::quantize(tape, store, tape.leaf(zt, true), parts, cfg);
    CHECK(q.object_index ==
          scan_oracle(store.value(vq::object_codebook_name()), zt.data).first);
    for (int p = 0; p < vq::kHandParts; ++p)
      CHECK(q.hand_indices[p] ==
            scan_oracle(store.value(vq::hand_codebook_name(p)), zs[p].data).first);
  }
}

TEST_CASE("single-part analytic value: unit offset, beta 0.25, lambda 10") {
  Tape tape;
  DenseArray z(1, 3, {1.0, 0.0, 0.0});
  DenseArray e(1, 3, {0.0, 0.0, 0.0});
  Var zv = tape.leaf(z, true);
  Var ev = tape.leaf(e, true);
  Var loss = vq::codebook_loss(zv, ev, {}, {}, 0.25, 10.0);
  CHECK(tape.val(loss).item() == doctest::Approx(12.5).epsilon(1e-15));
}

TEST_CASE("gradient routing: commitment term reaches only the codebook") {
  net::ParamStore store(9);
  vq::CodebookConfig cfg{4, 3};
  vq::codebooks_register(store, cfg);
  store.ensure("z", 1, 3, net::Init::Uniform);

  Tape tape;
  Var z = tape.param(store, "z");
  std::vector<Var> parts;
  for (int p = 0; p < vq::kHandParts; ++p) parts.push_back(tape.leaf(net::DenseArray(1, 3)));
  const vq::QuantizeResult q = vq::quantize(tape, store, z, parts, cfg);

  SUBCASE("encoder term sends nothing to the codebook") {
    Var term = net::sum_sq(net::sub(net::stop_grad(q.object_entry), z));
    tape.backward(term);
    for (double g : store.grad(vq::object_codebook_name()).data) CHECK(g == 0.0);
    bool any = false;
    for (double g : store.grad("z").data) any = any || g != 0.0;
    CHECK(any);
  }
  SUBCASE("commitment term sends nothing to the encoder") {
    Var term = net::sum_sq(net::sub(net::stop_grad(z), q.object_entry));
    tape.backward(term);
    for (double g : store.grad("z").data) CHECK(g == 0.0);
    bool any = false;
    for (double g : store.grad(vq::object_codebook_name()).data) any = any || g != 0.0;
    CHECK(any);
  }
}

TEST_CASE("L_E is zero iff every output coincides with an entry") {
  net::ParamStore store(10);
  vq::CodebookConfig cfg{4, 2};
  vq::codebooks_register(store, cfg);
  Tape tape;
  DenseArray z(1, 2);
  z[0] = store.value(vq::object_codebook_name())(1, 0) + 0.05;  // off the entry
  z[1] = store.value(vq::object_codebook_name())(1, 1);
  Var zv = tape.leaf(z, true);
  std::vector<Var> parts;
  for (int p = 0; p < vq::kHandParts; ++p) parts.push_back(tape.leaf(net::DenseArray(1, 2)));
  const vq::QuantizeResult q = vq::quantize(tape, store, zv, parts, cfg);
  Var loss = vq::codebook_loss(zv, q.object_entry, {}, {}, 0.25, 10.0);
  CHECK(tape.val(loss).item() > 0.0);
}

TEST_CASE("quantize rejects a wrong part count") {
  net::ParamStore store(11);
  vq::CodebookConfig cfg{4, 2};
  Tape tape;
  DenseArray z(1, 2);
  std::vector<Var> three{tape.leaf(z), tape.leaf(z), tape.leaf(z)};
  CHECK_THROWS(vq::quantize(tape, store, tape.leaf(z), three, cfg));
}
