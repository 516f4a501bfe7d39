#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "dvq/hand/model.hpp"
#include "dvq/pipeline/pipeline.hpp"

namespace dvq::app {

// jobs = 1 runs inline; results are index-addressed so scheduling never
// changes the output.
void parallel_for(int count, int jobs, const std::function<void(int)>& fn);

// Watertight procedural objects (spheres, boxes, cylinders, ellipsoids and
// unions), longest extent 4-20 cm, centered near the origin. Returns paths
// relative to `dir`'s parent so dataset records stay relocatable.
std::vector<std::string> synth_objects(const std::filesystem::path& dir, std::uint64_t seed,
                                       int count, int jobs = 1);

struct GraspSynthStats {
  int requested = 0;
  int emitted = 0;
  int skipped = 0;
};

// Heuristic wrap closure. One approach direction per object; per grasp the
// shape coefficients and pre-curls vary, the palm advances to first contact
// and each finger bisects its curl until it touches. Rejects samples
// penetrating more than 10 cm^3.
std::vector<pipeline::GraspRecord> synth_grasps(const std::filesystem::path& data_root,
                                                const std::vector<std::string>& object_paths,
                                                const hand::HandModel& model, std::uint64_t seed,
                                                int grasps_per_object, double tau_m,
                                                GraspSynthStats* stats = nullptr, int jobs = 1);

// Analytic press model: the grasp is pushed `press_depth` deeper along its
// approach, penetrated vertices move along -n by their ray depth, neighbors
// get a Gaussian falloff (sigma = 1 cm), then a light Taubin pass.
std::vector<pipeline::DeformRecord> synth_deformations(
    const std::filesystem::path& data_root, const std::vector<pipeline::GraspRecord>& grasps,
    const hand::HandModel& model, std::uint64_t seed, double press_depth, double tau_m,
    int jobs = 1);

}  // namespace dvq::app
