#include "dvq/app/synth.hpp"

#include <atomic>
#include <cmath>
#include <iostream>
#include <thread>

#include "dvq/contact/contact.hpp"
#include "dvq/geom/inside.hpp"
#include "dvq/geom/kdtree.hpp"
#include "dvq/geom/mesh_io.hpp"
#include "dvq/geom/raycast.hpp"
#include "dvq/geom/primitives.hpp"
#include "dvq/geom/smooth.hpp"
#include "dvq/net/rng.hpp"

namespace dvq::app {

using geom::TriMesh;
using geom::Vec3;
using net::Rng;

void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  if (jobs <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> workers;
  const int n = std::min(jobs, count);
  workers.reserve(n);
  for (int w = 0; w < n; ++w) {
    workers.emplace_back([&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        fn(i);
      }
    });
  }
  for (std::thread& t : workers) t.join();
}

namespace {

Vec3 random_unit(Rng& rng) {
  for (;;) {
    Vec3 v{rng.normal(), rng.normal(), rng.normal()};
    const double n = norm(v);
    if (n > 1e-6) return v / n;
  }
}

TriMesh make_object(int index, Rng& rng) {
  const double size = rng.uniform(0.04, 0.20);
  switch (index % 5) {
    case 0:
      return geom::make_icosphere({}, size / 2, 2);
    case 1: {
      const double a = rng.uniform(0.4, 1.0), b = rng.uniform(0.4, 1.0);
      return geom::make_box({}, {size / 2, size / 2 * a, size / 2 * b}, 4);
    }
    case 2: {
      const double r = size * rng.uniform(0.18, 0.3);
      return geom::make_cylinder({}, r, size, 20, random_unit(rng) * rng.uniform(0, M_PI), 6);
    }
    case 3: {
      const double a = rng.uniform(0.4, 1.0), b = rng.uniform(0.4, 1.0);
      return geom::make_ellipsoid({}, {size / 2, size / 2 * a, size / 2 * b}, 2);
    }
    default: {
      const double bh = size * 0.3;
      TriMesh box = geom::make_box({}, {size / 2, size * 0.35, bh}, 3);
      TriMesh cap = geom::make_icosphere({0, 0, bh}, size * 0.22, 2);
      return geom::merge_meshes(box, cap);
    }
  }
}

}  // namespace

std::vector<std::string> synth_objects(const std::filesystem::path& dir, std::uint64_t seed,
                                       int count, int jobs) {
  if (count < 1) throw std::runtime_error("synth_objects: count must be >= 1");
  std::filesystem::create_directories(dir);
  std::vector<std::string> paths(count);
  parallel_for(count, jobs, [&](int i) {
    Rng rng(Rng::derive(seed, 100000 + i));
    const TriMesh mesh = make_object(i, rng);
    char name[32];
    std::snprintf(name, sizeof(name), "objects/obj_%04d.ply", i);
    geom::write_mesh(mesh, dir.parent_path() / name, geom::MeshFormat::PlyBinary);
    paths[i] = name;
  });
  return paths;
}

namespace {

struct ApproachFrame {
  Vec3 u;          // unit direction from object center to the hand
  geom::Mat3 rot;  // hand canonical -> world
  Vec3 delta;
};

ApproachFrame approach_frame(Rng& rng) {
  ApproachFrame f;
  f.u = random_unit(rng);
  Vec3 t = cross(f.u, Vec3{0, 0, 1});
  if (norm(t) < 1e-3) t = cross(f.u, Vec3{1, 0, 0});
  t = normalized(t);
  // random roll about the approach axis
  t = geom::axis_angle_to_matrix(f.u * rng.uniform(0, 2 * M_PI)) * t;
  // palmar (-z) faces the object, fingers along the tangent
  f.rot = geom::frame_from_axes(cross(t, f.u), t, f.u);
  f.delta = geom::matrix_to_axis_angle(f.rot);
  return f;
}

constexpr double kCurlWeights[3] = {1.0, 0.8, 0.6};
constexpr double kMaxCurl = 1.5;

hand::HandPosture make_posture(const std::array<double, hand::kShapeParams>& alpha,
                               const std::array<double, 5>& curls) {
  hand::HandPosture p;
  p.alpha = alpha;
  for (int f = 0; f < 5; ++f) {
    const Vec3 axis = hand::finger_flexion_axis(f);
    for (int s = 0; s < 3; ++s) {
      const Vec3 aa = axis * (curls[f] * kCurlWeights[s]);
      p.beta[3 * (3 * f + s) + 0] = aa.x;
      p.beta[3 * (3 * f + s) + 1] = aa.y;
      p.beta[3 * (3 * f + s) + 2] = aa.z;
    }
  }
  return p;
}

// contact = any of the given hand vertices within reach of the object
// surface, or behind the local surface plane at its nearest object vertex
// (capped in range so the sign test cannot fire across the scene)
bool touches(const hand::HandMesh& hand_mesh, const std::vector<int>& vert_ids,
             const geom::KdTree& object_tree, const std::vector<Vec3>& object_normals,
             double reach) {
  constexpr double kPenetrationRange = 0.12;
  for (int j : vert_ids) {
    double d2;
    const int i = object_tree.nearest(hand_mesh.mesh.vertices[j], d2);
    if (d2 <= reach * reach) return true;
    if (d2 > kPenetrationRange * kPenetrationRange) continue;
    const Vec3 outward = hand_mesh.mesh.vertices[j] - object_tree.points()[i];
    if (dot(outward, object_normals[i]) < 0) return true;
  }
  return false;
}

}  // namespace

std::vector<pipeline::GraspRecord> synth_grasps(const std::filesystem::path& data_root,
                                                const std::vector<std::string>& object_paths,
                                                const hand::HandModel& model, std::uint64_t seed,
                                                int grasps_per_object, double tau_m,
                                                GraspSynthStats* stats, int jobs) {
  const int total = static_cast<int>(object_paths.size()) * grasps_per_object;
  std::vector<std::optional<pipeline::GraspRecord>> slots(total);

  parallel_for(static_cast<int>(object_paths.size()), jobs, [&](int oi) {
    const TriMesh object = geom::read_mesh(data_root / object_paths[oi]);
    const geom::KdTree object_tree(object.vertices);
    double radius = 0;
    for (const Vec3& v : object.vertices) radius = std::max(radius, norm(v));

    Rng dir_rng(Rng::derive(seed, 1000000 + oi));
    const ApproachFrame frame = approach_frame(dir_rng);
    const Vec3 palm_anchor{0, 0.045, 0};

    for (int g = 0; g < grasps_per_object; ++g) {
      Rng rng(Rng::derive(seed, 2000000 + 1000ull * oi + g));
      bool placed = false;
      for (int attempt = 0; attempt < 50 && !placed; ++attempt) {
        std::array<double, hand::kShapeParams> alpha{};
        for (double& a : alpha) a = std::clamp(rng.normal() * 0.3, -1.0, 1.0);
        std::array<double, 5> curls;
        for (double& c : curls) c = rng.uniform(0.05, 0.45);
        hand::HandPosture posture = make_posture(alpha, curls);

        auto position_at = [&](double d) {
          hand::HandPosition pos;
          pos.delta = frame.delta;
          pos.gamma = frame.u * d - frame.rot * palm_anchor;
          return pos;
        };
        auto hand_at = [&](double d, const hand::HandPosture& p) {
          return model.forward(p, position_at(d));
        };

        // bring the palm in until first contact, then back off slightly
        std::vector<int> probe = model.part_vertices(hand::kPalm);
        double d_hi = radius + 0.15;
        int guard = 0;
        while (touches(hand_at(d_hi, posture), probe, object_tree, object.normals, 0.0015) &&
               guard++ < 4)
          d_hi *= 1.4;
        double d_lo = 0.0;
        if (!touches(hand_at(d_lo, posture), probe, object_tree, object.normals, 0.0015))
          continue;
        for (int it = 0; it < 24; ++it) {
          const double mid = (d_lo + d_hi) / 2;
          if (touches(hand_at(mid, posture), probe, object_tree, object.normals, 0.0015))
            d_lo = mid;
          else d_hi = mid;
        }
        const double d_place = d_hi + 0.001;

        // close each finger to its first contact
        int touching = 0;
        for (int f = 0; f < 5; ++f) {
          const std::vector<int>& fv = model.part_vertices(f);
          auto finger_touches = [&](double curl) {
            std::array<double, 5> c = curls;
            c[f] = curl;
            return touches(hand_at(d_place, make_posture(alpha, c)), fv, object_tree,
                           object.normals, 0.0015);
          };
          if (finger_touches(curls[f])) {
            ++touching;  // already in contact at the pre-curl
            continue;
          }
          if (!finger_touches(kMaxCurl)) {
            curls[f] = kMaxCurl;
            continue;
          }
          double lo = curls[f], hi = kMaxCurl;
          for (int it = 0; it < 22; ++it) {
            const double mid = (lo + hi) / 2;
            if (finger_touches(mid)) hi = mid;
            else lo = mid;
          }
          curls[f] = std::min(kMaxCurl, hi + 0.02);  // a light squeeze past first touch
          ++touching;
        }
        if (touching < 2) continue;

        posture = make_posture(alpha, curls);
        const hand::HandPosition position = position_at(d_place);
        const hand::HandMesh final_hand = model.forward(posture, position);
        const contact::ContactReport report =
            contact::contact_quantify(final_hand.mesh, object, tau_m, /*with_depths=*/false);
        if (!report.any_contact()) continue;
        if (contact::penetration_volume(final_hand.mesh, object) > 10.0) continue;

        pipeline::GraspRecord record;
        record.object_path = object_paths[oi];
        record.posture = posture;
        record.position = position;
        record.approach = frame.u;
        for (size_t i = 0; i < report.contact_map.size(); ++i)
          if (report.contact_map[i]) record.contact_indices.push_back(static_cast<int>(i));
        slots[oi * grasps_per_object + g] = std::move(record);
        placed = true;
      }
      if (!placed)
        std::cerr << "[synth] closure failed for object " << oi << " grasp " << g
                  << " after 50 attempts, skipping\n";
    }
  });

  std::vector<pipeline::GraspRecord> records;
  records.reserve(total);
  for (auto& slot : slots)
    if (slot) records.push_back(std::move(*slot));
  if (stats) {
    stats->requested = total;
    stats->emitted = static_cast<int>(records.size());
    stats->skipped = total - stats->emitted;
  }
  return records;
}

std::vector<pipeline::DeformRecord> synth_deformations(
    const std::filesystem::path& data_root, const std::vector<pipeline::GraspRecord>& grasps,
    const hand::HandModel& model, std::uint64_t seed, double press_depth, double tau_m,
    int jobs) {
  (void)seed;
  std::vector<pipeline::DeformRecord> records(grasps.size());
  parallel_for(static_cast<int>(grasps.size()), jobs, [&](int gi) {
    const pipeline::GraspRecord& g = grasps[gi];
    const TriMesh object = geom::read_mesh(data_root / g.object_path);

    pipeline::DeformRecord r;
    r.object_path = g.object_path;
    r.posture = g.posture;
    r.position = g.position;
    r.position.gamma -= g.approach * press_depth;

    const hand::HandMesh pressed = model.forward(r.posture, r.position);
    const contact::ContactReport report =
        contact::contact_quantify(pressed.mesh, object, tau_m);

    // press field: exact depth on penetrated vertices, Gaussian falloff around.
    // The sign-test quantification also flags the far "shadow" side of the
    // object with through-object depths, so the press keeps only dents at
    // the physical scale of the push and close to the hand surface.
    const double depth_cap = press_depth + 0.012;
    const geom::KdTree hand_tree(pressed.mesh.vertices);
    const size_t nv = object.vertices.size();
    std::vector<Vec3> press(nv);
    std::vector<bool> dented(nv, false);
    for (size_t i = 0; i < nv; ++i) {
      if (!report.object_penetrated[i]) continue;
      double d2;
      hand_tree.nearest(object.vertices[i], d2);
      if (d2 > 0.02 * 0.02) continue;
      // only real ray hits dent; the report's nearest-vertex fallback has
      // no geometric meaning along -n
      const auto hit = geom::ray_cast(object.vertices[i], -object.normals[i], pressed.mesh);
      if (!hit || hit->t > depth_cap) continue;
      press[i] = -object.normals[i] * hit->t;
      dented[i] = true;
    }
    // the record's contact map is the dented region; the raw penetration
    // flags would also cover the object's far shadow
    for (size_t i = 0; i < nv; ++i)
      if (dented[i]) r.contact_indices.push_back(static_cast<int>(i));

    // exact dents: each dented vertex moves onto the hand surface hit by
    // its reverse-normal ray, everything else stays put (the falloff is
    // left to the smoothing pass at inference time; spreading it into the
    // ground truth drags the near-hand ring away from the hand and breaks
    // the deformation metrics on meshes this coarse)
    r.displacements.assign(nv, Vec3{});
    for (size_t i = 0; i < nv; ++i) {
      if (!dented[i]) continue;
      r.displacements[i] = press[i];
      r.amplitude = std::max(r.amplitude, norm(press[i]));
    }
    records[gi] = std::move(r);
  });
  return records;
}

}  // namespace dvq::app
