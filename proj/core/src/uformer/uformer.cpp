#include "dvq/uformer/uformer.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "dvq/geom/kdtree.hpp"
#include "dvq/geom/smooth.hpp"

namespace dvq::uformer {

using geom::Vec3;
using net::DenseArray;
using net::Tape;
using net::Var;

Var pos_encode(Tape& tape, net::ParamStore& store, const std::string& prefix,
               Var dist_angle_pairs, const UFormerConfig& cfg) {
  net::MlpSpec spec{{2, cfg.posenc_hidden, cfg.qkv_dim}};
  return net::mlp_forward(tape, store, prefix, dist_angle_pairs, spec);
}

std::vector<double> neighbor_angles(const std::vector<Vec3>& points,
                                    const std::vector<Vec3>& normals,
                                    const std::vector<std::vector<int>>& neighbor_idx) {
  std::vector<double> angles;
  for (size_t i = 0; i < neighbor_idx.size(); ++i) {
    for (int j : neighbor_idx[i]) {
      const Vec3 pij = points[j] - points[i];
      const double len = norm(pij);
      const double nlen = norm(normals[i]);
      if (len < 1e-12 || nlen < 1e-12) {
        angles.push_back(M_PI / 2);  // undefined offset angle, neutral value
      } else {
        const double c = std::clamp(dot(pij, normals[i]) / (len * nlen), -1.0, 1.0);
        angles.push_back(std::acos(c));
      }
    }
  }
  return angles;
}

namespace {

struct NeighborData {
  std::shared_ptr<const std::vector<int>> flat;      // [n*k]
  std::shared_ptr<const std::vector<int>> repeat;    // query index per slot
  DenseArray dist_angle;                             // [n*k, 2]
  std::size_t n = 0, k = 0;
};

NeighborData gather_neighbors(const std::vector<Vec3>& points, const std::vector<Vec3>& normals,
                              int want_k) {
  if (points.empty()) throw std::runtime_error("point transformer: empty point set");
  NeighborData nd;
  nd.n = points.size();
  nd.k = std::min<std::size_t>(want_k, points.size());
  const auto idx = geom::knn(points, points, static_cast<int>(nd.k));
  auto flat = std::make_shared<std::vector<int>>();
  auto repeat = std::make_shared<std::vector<int>>();
  flat->reserve(nd.n * nd.k);
  repeat->reserve(nd.n * nd.k);
  nd.dist_angle = DenseArray(nd.n * nd.k, 2);
  const std::vector<double> angles = neighbor_angles(points, normals, idx);
  std::size_t slot = 0;
  for (std::size_t i = 0; i < nd.n; ++i) {
    for (int j : idx[i]) {
      flat->push_back(j);
      repeat->push_back(static_cast<int>(i));
      nd.dist_angle(slot, 0) = norm(points[j] - points[i]);
      nd.dist_angle(slot, 1) = angles[slot];
      ++slot;
    }
  }
  nd.flat = flat;
  nd.repeat = repeat;
  return nd;
}

Var attention_sublayer(Tape& tape, net::ParamStore& store, const std::string& prefix,
                       Var features, const NeighborData& nd, const UFormerConfig& cfg,
                       net::Rng& rng, bool training) {
  const std::size_t d = cfg.qkv_dim;
  store.ensure(prefix + ".wq", tape.val(features).cols, d);
  store.ensure(prefix + ".bq", 1, d, net::Init::Zeros);
  store.ensure(prefix + ".wk", tape.val(features).cols, d);
  store.ensure(prefix + ".bk", 1, d, net::Init::Zeros);
  store.ensure(prefix + ".wv", tape.val(features).cols, d);
  store.ensure(prefix + ".bv", 1, d, net::Init::Zeros);

  Var q = net::affine(tape, store, prefix + ".wq", prefix + ".bq", features);
  Var k = net::affine(tape, store, prefix + ".wk", prefix + ".bk", features);
  Var v = net::affine(tape, store, prefix + ".wv", prefix + ".bv", features);

  Var enc = pos_encode(tape, store, prefix + ".pos",
                       net::leaf_const(tape, nd.dist_angle), cfg);
  Var keyed = net::add(net::gather_rows(k, nd.flat), enc);
  Var queries = net::gather_rows(q, nd.repeat);
  Var scores = net::reshape(net::rows_dot(queries, keyed), nd.n, nd.k);
  scores = net::scale(scores, 1.0 / std::sqrt(static_cast<double>(d)));
  Var alpha = net::softmax_dropout(scores, cfg.dropout, rng, training);
  Var mixed = net::attend(alpha, v, nd.flat);

  net::MlpSpec out_spec{{d, cfg.hidden_dim, d}};
  Var out = net::mlp_forward(tape, store, prefix + ".out", mixed, out_spec);
  // per-point feature normalization; the stacked sublayers drift without it
  DenseArray ones(1, d);
  ones.fill(1.0);
  if (!store.has(prefix + ".ln_g")) store.ensure(prefix + ".ln_g", 1, d, net::Init::Zeros) = ones;
  store.ensure(prefix + ".ln_b", 1, d, net::Init::Zeros);
  return net::rows_layer_norm(out, tape.param(store, prefix + ".ln_g"),
                              tape.param(store, prefix + ".ln_b"));
}

}  // namespace

Var point_transformer_block(Tape& tape, net::ParamStore& store, const std::string& prefix,
                            Var features, const std::vector<Vec3>& points,
                            const std::vector<Vec3>& normals, const UFormerConfig& cfg,
                            net::Rng& rng, bool training) {
  if (tape.val(features).rows != points.size() || points.size() != normals.size())
    throw std::runtime_error("point transformer: feature/point/normal counts differ");
  const NeighborData nd = gather_neighbors(points, normals, cfg.neighbors);
  Var f = features;
  for (int s = 0; s < cfg.sublayers; ++s)
    f = attention_sublayer(tape, store, prefix + ".sub" + std::to_string(s), f, nd, cfg, rng,
                           training);
  return f;
}

Var uformer_forward(Tape& tape, net::ParamStore& store, const std::string& prefix,
                    const geom::MeshHierarchy& hierarchy, Var input_features,
                    const UFormerConfig& cfg, net::Rng& rng, bool training) {
  const int levels = hierarchy.level_count();
  if (levels < 1) throw std::runtime_error("uformer: empty hierarchy");
  if (static_cast<int>(hierarchy.mappings.size()) != levels - 1)
    throw std::runtime_error("uformer: mapping count does not match level count");
  if (tape.val(input_features).rows != hierarchy.levels[0].points.size())
    throw std::runtime_error("uformer: input feature count != level-0 point count");

  store.ensure(prefix + ".in_w", tape.val(input_features).cols, cfg.qkv_dim);
  store.ensure(prefix + ".in_b", 1, cfg.qkv_dim, net::Init::Zeros);
  Var f = net::affine(tape, store, prefix + ".in_w", prefix + ".in_b", input_features);

  std::vector<Var> skips(levels);
  for (int l = 0; l < levels; ++l) {
    skips[l] = f;
    f = point_transformer_block(tape, store, prefix + ".enc" + std::to_string(l), f,
                                hierarchy.levels[l].points, hierarchy.levels[l].normals, cfg,
                                rng, training);
    if (l + 1 < levels) {
      auto mapping =
          std::make_shared<const std::vector<int>>(hierarchy.mappings[l].forward);
      f = net::scatter_mean_rows(f, mapping, hierarchy.levels[l + 1].points.size());
    }
  }

  for (int l = levels - 2; l >= 0; --l) {
    auto mapping = std::make_shared<const std::vector<int>>(hierarchy.mappings[l].forward);
    Var up = net::gather_rows(f, mapping);
    f = point_transformer_block(tape, store, prefix + ".dec" + std::to_string(l),
                                net::add(up, skips[l]), hierarchy.levels[l].points,
                                hierarchy.levels[l].normals, cfg, rng, training);
  }
  return f;
}

// ------------------------------------------------------------- deform head

void deform_head_register(net::ParamStore& store, const std::string& prefix,
                          const UFormerConfig& cfg) {
  const std::string bias_name = prefix + ".head.b1";
  const bool fresh = !store.has(bias_name);
  net::MlpSpec spec{{cfg.qkv_dim, cfg.hidden_dim, 4}};
  net::mlp_register(store, prefix + ".head", spec);
  if (fresh) store.value(bias_name)(0, 3) = -6.0;
}

Var deform_head_raw(Tape& tape, net::ParamStore& store, const std::string& prefix,
                    Var features, const UFormerConfig& cfg) {
  deform_head_register(store, prefix, cfg);
  net::MlpSpec spec{{cfg.qkv_dim, cfg.hidden_dim, 4}};
  return net::mlp_forward(tape, store, prefix + ".head", features, spec);
}

DeformHead deform_apply(Tape& tape, const std::vector<Vec3>& original_vertices,
                        Var raw_head_output) {
  const DenseArray& raw = tape.val(raw_head_output);
  if (raw.cols != 4 || raw.rows != original_vertices.size())
    throw std::runtime_error("deform_apply: head output must be [vertex_count, 4]");
  DeformHead out;
  out.raw = raw_head_output;
  out.direction = net::normalize_rows(net::slice_cols(raw_head_output, 0, 3), 1e-8);
  out.magnitude =
      net::scale(net::softplus(net::slice_cols(raw_head_output, 3, 4)), kMagnitudeScale);
  out.displacement = net::mul_colvec(out.direction, out.magnitude);
  DenseArray orig(original_vertices.size(), 3);
  for (size_t i = 0; i < original_vertices.size(); ++i)
    for (int c = 0; c < 3; ++c) orig(i, c) = original_vertices[i][c];
  out.deformed = net::add(net::leaf_const(tape, std::move(orig)), out.displacement);
  return out;
}

Var laplacian_objective_tape(Tape& tape, Var vertices, const std::vector<geom::Face>& faces) {
  geom::TriMesh shell;
  shell.vertices.resize(tape.val(vertices).rows);
  shell.faces = faces;
  const auto adj = geom::vertex_adjacency(shell);
  auto src = std::make_shared<std::vector<int>>();
  auto dst = std::make_shared<std::vector<int>>();
  std::vector<double> inv_deg(adj.size(), 0.0);
  for (size_t i = 0; i < adj.size(); ++i) {
    if (adj[i].empty()) continue;
    inv_deg[i] = 1.0 / static_cast<double>(adj[i].size());
    for (int j : adj[i]) {
      src->push_back(j);
      dst->push_back(static_cast<int>(i));
    }
  }
  Var gathered = net::gather_rows(vertices, std::shared_ptr<const std::vector<int>>(src));
  Var sums = net::scatter_add_rows(gathered, std::shared_ptr<const std::vector<int>>(dst),
                                   adj.size());
  Var means = net::mul_colvec(
      sums, net::leaf_const(tape, DenseArray(adj.size(), 1, std::move(inv_deg))));
  // isolated vertices have mean 0 and would contribute |v|; mask them out
  std::vector<double> mask(adj.size(), 0.0);
  for (size_t i = 0; i < adj.size(); ++i) mask[i] = adj[i].empty() ? 0.0 : 1.0;
  Var lap = net::mul_colvec(net::sub(means, vertices),
                            net::leaf_const(tape, DenseArray(adj.size(), 1, std::move(mask))));
  return net::mean(net::rows_norm(lap));
}

Var normal_consistency_tape(Tape& tape, Var vertices, const std::vector<geom::Face>& faces) {
  geom::TriMesh shell;
  shell.vertices.resize(tape.val(vertices).rows);
  shell.faces = faces;
  const auto pairs = geom::adjacent_face_pairs(shell);
  if (pairs.empty()) return net::leaf_const(tape, DenseArray::scalar(0.0));

  auto f0 = std::make_shared<std::vector<int>>();
  auto f1 = std::make_shared<std::vector<int>>();
  auto f2 = std::make_shared<std::vector<int>>();
  for (const geom::Face& f : faces) {
    f0->push_back(f[0]);
    f1->push_back(f[1]);
    f2->push_back(f[2]);
  }
  Var v0 = net::gather_rows(vertices, std::shared_ptr<const std::vector<int>>(f0));
  Var e1 = net::sub(net::gather_rows(vertices, std::shared_ptr<const std::vector<int>>(f1)), v0);
  Var e2 = net::sub(net::gather_rows(vertices, std::shared_ptr<const std::vector<int>>(f2)), v0);
  Var n = cross_rows(e1, e2);

  auto pa = std::make_shared<std::vector<int>>();
  auto pb = std::make_shared<std::vector<int>>();
  for (const auto& [a, b] : pairs) {
    pa->push_back(a);
    pb->push_back(b);
  }
  Var na = net::gather_rows(n, std::shared_ptr<const std::vector<int>>(pa));
  Var nb = net::gather_rows(n, std::shared_ptr<const std::vector<int>>(pb));
  Var denom = net::mul(net::rows_norm(na), net::rows_norm(nb));
  Var guard = net::leaf_const(tape, DenseArray(pairs.size(), 1,
                                               std::vector<double>(pairs.size(), 1e-18)));
  Var cosv = net::divide(net::rows_dot(na, nb), net::add(denom, guard));
  Var ones = net::leaf_const(tape, DenseArray(pairs.size(), 1,
                                              std::vector<double>(pairs.size(), 1.0)));
  return net::mean(net::sub(ones, cosv));
}

Var chamfer_tape(Tape& tape, Var a_vertices, const std::vector<Vec3>& b_points) {
  const DenseArray& av = tape.val(a_vertices);
  if (av.rows == 0 || b_points.empty()) throw std::runtime_error("chamfer: empty point set");
  std::vector<Vec3> a_now(av.rows);
  for (size_t i = 0; i < av.rows; ++i) a_now[i] = {av(i, 0), av(i, 1), av(i, 2)};

  const geom::KdTree tree_b(b_points);
  auto a_to_b = std::make_shared<std::vector<int>>(av.rows);
  for (size_t i = 0; i < av.rows; ++i) (*a_to_b)[i] = tree_b.nearest(a_now[i]);
  const geom::KdTree tree_a(a_now);
  auto b_to_a = std::make_shared<std::vector<int>>(b_points.size());
  for (size_t i = 0; i < b_points.size(); ++i) (*b_to_a)[i] = tree_a.nearest(b_points[i]);

  DenseArray bmat(b_points.size(), 3);
  for (size_t i = 0; i < b_points.size(); ++i)
    for (int c = 0; c < 3; ++c) bmat(i, c) = b_points[i][c];
  Var bconst = net::leaf_const(tape, std::move(bmat));

  Var d_ab = net::sub(a_vertices,
                      net::gather_rows(bconst, std::shared_ptr<const std::vector<int>>(a_to_b)));
  Var d_ba = net::sub(net::gather_rows(a_vertices,
                                       std::shared_ptr<const std::vector<int>>(b_to_a)),
                      bconst);
  Var term_ab = net::scale(net::sum_sq(d_ab), 1.0 / static_cast<double>(av.rows));
  Var term_ba = net::scale(net::sum_sq(d_ba), 1.0 / static_cast<double>(b_points.size()));
  return net::add(term_ab, term_ba);
}

DeformLoss deform_loss(Tape& tape, Var deformed, Var displacement,
                       const std::vector<geom::Face>& faces,
                       const std::vector<Vec3>& gt_vertices,
                       const std::vector<Vec3>& gt_displacements) {
  const DenseArray& dv = tape.val(deformed);
  if (dv.rows != gt_vertices.size() || dv.rows != gt_displacements.size())
    throw std::runtime_error("deform_loss: vertex count mismatch with ground truth");
  DeformLoss out;
  out.laplacian = laplacian_objective_tape(tape, deformed, faces);
  out.normal = normal_consistency_tape(tape, deformed, faces);

  DenseArray gt_disp(gt_displacements.size(), 3);
  for (size_t i = 0; i < gt_displacements.size(); ++i)
    for (int c = 0; c < 3; ++c) gt_disp(i, c) = gt_displacements[i][c];
  Var err = net::sub(displacement, net::leaf_const(tape, std::move(gt_disp)));
  out.mse = net::scale(net::sum_sq(err), 1.0 / static_cast<double>(gt_displacements.size()));

  out.similarity = chamfer_tape(tape, deformed, gt_vertices);
  out.total = net::add(net::add(out.laplacian, out.normal),
                       net::add(out.mse, out.similarity));
  return out;
}

}  // namespace dvq::uformer
