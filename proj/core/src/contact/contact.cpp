#include "dvq/contact/contact.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <stdexcept>

#include <json.hpp>

#include "dvq/geom/inside.hpp"
#include "dvq/geom/kdtree.hpp"
#include "dvq/geom/raycast.hpp"

namespace dvq::contact {

using geom::TriMesh;
using geom::Vec3;

bool ContactReport::any_contact() const {
  return std::any_of(contact_map.begin(), contact_map.end(), [](bool b) { return b; }) ||
         std::any_of(hand_contact.begin(), hand_contact.end(), [](bool b) { return b; });
}

ContactReport contact_quantify(const TriMesh& hand, const TriMesh& object, double tau_m,
                               bool with_depths) {
  if (hand.normals.size() != hand.vertices.size() ||
      object.normals.size() != object.vertices.size())
    throw std::runtime_error("contact_quantify: both meshes need per-vertex normals");

  ContactReport report;
  const size_t nh = hand.vertices.size();
  const size_t no = object.vertices.size();
  report.hand_contact.assign(nh, false);
  report.object_penetrated.assign(no, false);
  report.depths.assign(no, 0.0);
  report.contact_map.assign(no, false);

  // stage 1: hand vertices against their nearest object vertex
  const geom::KdTree object_tree(object.vertices);
  std::vector<Vec3> contact_points;
  std::vector<int> contact_index;
  for (size_t j = 0; j < nh; ++j) {
    const int i = object_tree.nearest(hand.vertices[j]);
    const Vec3 to_object = object.vertices[i] - hand.vertices[j];
    if (dot(to_object, hand.normals[j]) < 0) {
      report.hand_contact[j] = true;
      contact_points.push_back(hand.vertices[j]);
      contact_index.push_back(static_cast<int>(j));
    }
  }

  // stage 2 runs over contact points only; nothing marked means no penetration
  std::unique_ptr<geom::KdTree> contact_tree;
  if (!contact_points.empty()) contact_tree = std::make_unique<geom::KdTree>(contact_points);

  const geom::KdTree hand_tree(hand.vertices);
  for (size_t i = 0; i < no; ++i) {
    double d2;
    hand_tree.nearest(object.vertices[i], d2);
    bool mapped = d2 <= tau_m * tau_m;

    if (contact_tree) {
      const int cj = contact_tree->nearest(object.vertices[i]);
      const Vec3 to_hand = contact_points[cj] - object.vertices[i];
      if (dot(to_hand, object.normals[i]) < 0) {
        report.object_penetrated[i] = true;
        mapped = true;
        if (with_depths) {
          const auto hit = geom::ray_cast(object.vertices[i], -object.normals[i], hand);
          report.depths[i] = hit ? hit->t : norm(to_hand);
        }
      }
    }
    report.contact_map[i] = mapped;
  }
  return report;
}

double penetration_volume(const TriMesh& a, const TriMesh& b, double voxel) {
  if (voxel <= 0) throw std::runtime_error("penetration_volume: voxel must be positive");
  geom::Aabb boxa = geom::bounding_box(a.vertices);
  geom::Aabb boxb = geom::bounding_box(b.vertices);
  Vec3 lo{std::max(boxa.min.x, boxb.min.x), std::max(boxa.min.y, boxb.min.y),
          std::max(boxa.min.z, boxb.min.z)};
  Vec3 hi{std::min(boxa.max.x, boxb.max.x), std::min(boxa.max.y, boxb.max.y),
          std::min(boxa.max.z, boxb.max.z)};
  if (lo.x >= hi.x || lo.y >= hi.y || lo.z >= hi.z) return 0.0;

  geom::ParityGrid grid;
  grid.origin = lo;
  grid.step = voxel;
  grid.nx = static_cast<int>(std::ceil((hi.x - lo.x) / voxel));
  grid.ny = static_cast<int>(std::ceil((hi.y - lo.y) / voxel));
  grid.nz = static_cast<int>(std::ceil((hi.z - lo.z) / voxel));
  if (grid.cell_count() == 0) return 0.0;

  const std::vector<std::uint8_t> in_a = geom::inside_mask(a, grid);
  const std::vector<std::uint8_t> in_b = geom::inside_mask(b, grid);
  std::int64_t count = 0;
  for (size_t i = 0; i < in_a.size(); ++i) count += in_a[i] & in_b[i];
  return static_cast<double>(count) * voxel * voxel * voxel * 1e6;  // m^3 -> cm^3
}

namespace {

struct LossSelections {
  std::vector<int> map_object;   // gt-map object vertex indices
  std::vector<int> map_hand;     // nearest candidate hand vertex per map vertex
  std::vector<int> in_hand;      // penetrating hand vertices
  std::vector<int> in_object;    // nearest object vertex per penetrating vertex
  double l_m = 0;
};

LossSelections select(const ContactReport& report, const std::vector<Vec3>& hand_vertices,
                      const TriMesh& object, const std::vector<bool>& gt_contact_map,
                      const std::vector<int>& hand_candidates) {
  if (gt_contact_map.size() != object.vertices.size())
    throw std::runtime_error("contact_losses: gt map length must equal object vertex count");
  LossSelections sel;

  if (!hand_candidates.empty()) {
    std::vector<Vec3> candidate_points;
    candidate_points.reserve(hand_candidates.size());
    for (int j : hand_candidates) candidate_points.push_back(hand_vertices[j]);
    const geom::KdTree candidate_tree(candidate_points);
    for (size_t i = 0; i < gt_contact_map.size(); ++i) {
      if (!gt_contact_map[i]) continue;
      sel.map_object.push_back(static_cast<int>(i));
      sel.map_hand.push_back(hand_candidates[candidate_tree.nearest(object.vertices[i])]);
    }
  }

  const geom::KdTree object_tree(object.vertices);
  for (size_t j = 0; j < report.hand_contact.size(); ++j) {
    if (!report.hand_contact[j]) continue;
    sel.in_hand.push_back(static_cast<int>(j));
    sel.in_object.push_back(object_tree.nearest(hand_vertices[j]));
  }

  size_t gt_count = 0, agree = 0;
  for (size_t i = 0; i < gt_contact_map.size(); ++i) {
    if (!gt_contact_map[i]) continue;
    ++gt_count;
    if (report.contact_map[i]) ++agree;
  }
  sel.l_m = gt_count == 0 ? 0.0 : static_cast<double>(agree) / static_cast<double>(gt_count);
  return sel;
}

}  // namespace

ContactLossValues contact_losses(const ContactReport& report, const TriMesh& hand,
                                 const TriMesh& object, const std::vector<bool>& gt_contact_map,
                                 const std::vector<int>& hand_candidates,
                                 const ContactLambdas& lambdas) {
  const LossSelections sel =
      select(report, hand.vertices, object, gt_contact_map, hand_candidates);
  ContactLossValues out;
  out.l_m = sel.l_m;
  for (size_t k = 0; k < sel.map_object.size(); ++k)
    out.l_c += norm(object.vertices[sel.map_object[k]] - hand.vertices[sel.map_hand[k]]);
  for (size_t k = 0; k < sel.in_hand.size(); ++k)
    out.l_p += norm2(hand.vertices[sel.in_hand[k]] - object.vertices[sel.in_object[k]]);
  out.l_contact = lambdas.lambda_m * out.l_m + lambdas.lambda_c * out.l_c +
                  lambdas.lambda_p * out.l_p;
  return out;
}

ContactLossVars contact_losses_tape(net::Tape& tape, net::Var hand_vertices,
                                    const ContactReport& report, const TriMesh& object,
                                    const std::vector<bool>& gt_contact_map,
                                    const std::vector<int>& hand_candidates,
                                    const ContactLambdas& lambdas) {
  const net::DenseArray& hv = tape.val(hand_vertices);
  std::vector<Vec3> current(hv.rows);
  for (size_t j = 0; j < hv.rows; ++j) current[j] = {hv(j, 0), hv(j, 1), hv(j, 2)};
  const LossSelections sel = select(report, current, object, gt_contact_map, hand_candidates);

  ContactLossVars out;
  out.l_m = net::leaf_const(tape, net::DenseArray::scalar(sel.l_m));

  if (sel.map_object.empty()) {
    out.l_c = net::leaf_const(tape, net::DenseArray::scalar(0.0));
  } else {
    net::DenseArray targets(sel.map_object.size(), 3);
    for (size_t k = 0; k < sel.map_object.size(); ++k)
      for (int c = 0; c < 3; ++c) targets(k, c) = object.vertices[sel.map_object[k]][c];
    auto idx = std::make_shared<const std::vector<int>>(sel.map_hand);
    net::Var diff = net::sub(net::gather_rows(hand_vertices, idx),
                             net::leaf_const(tape, std::move(targets)));
    out.l_c = net::sum(net::rows_norm(diff));
  }

  if (sel.in_hand.empty()) {
    out.l_p = net::leaf_const(tape, net::DenseArray::scalar(0.0));
  } else {
    net::DenseArray targets(sel.in_hand.size(), 3);
    for (size_t k = 0; k < sel.in_hand.size(); ++k)
      for (int c = 0; c < 3; ++c) targets(k, c) = object.vertices[sel.in_object[k]][c];
    auto idx = std::make_shared<const std::vector<int>>(sel.in_hand);
    net::Var diff = net::sub(net::gather_rows(hand_vertices, idx),
                             net::leaf_const(tape, std::move(targets)));
    out.l_p = net::sum_sq(diff);
  }

  out.l_contact = net::add(net::scale(out.l_m, lambdas.lambda_m),
                           net::add(net::scale(out.l_c, lambdas.lambda_c),
                                    net::scale(out.l_p, lambdas.lambda_p)));
  return out;
}

void write_report_jsonl(const ContactReport& report, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write contact report: " + path.string());
  for (size_t i = 0; i < report.contact_map.size(); ++i) {
    nlohmann::json row;
    row["kind"] = "object";
    row["index"] = i;
    row["penetrated"] = static_cast<bool>(report.object_penetrated[i]);
    row["depth"] = report.depths[i];
    row["contact"] = static_cast<bool>(report.contact_map[i]);
    out << row.dump() << '\n';
  }
  for (size_t j = 0; j < report.hand_contact.size(); ++j) {
    nlohmann::json row;
    row["kind"] = "hand";
    row["index"] = j;
    row["contact"] = static_cast<bool>(report.hand_contact[j]);
    out << row.dump() << '\n';
  }
}

}  // namespace dvq::contact
