#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "seqsprt/density.hpp"
#include "seqsprt/geometry.hpp"
#include "seqsprt/metrics.hpp"
#include "seqsprt/stream.hpp"

namespace seqsprt {

/// One traversal of an aisle: direction +1 runs from y = 0 to y = length.
struct RevisitPass
{
  std::size_t aisle = 0;
  int direction = 1;
  double speed = 1.0; // keyframe stride multiplier, in [0.5, 2]
  // fraction of the aisle covered; below 1 the robot turns back and leaves
  // by the end it entered
  double extent = 1.0;

  bool operator==(const RevisitPass&) const = default;
};

enum class DescriptorKind
{
  latent, // latent place vectors with per-visit noise
  scan    // occupancy grid of a simulated 2D range scan
};

std::string to_string(DescriptorKind k);
DescriptorKind descriptor_kind_from_string(const std::string& s);

/// Latent place-vector descriptor model.
///
/// An aisle place (class, cell, heading bin) has a class vector shared by
/// every aisle of the class; each aisle adds its own deviation of scale
/// alias_noise. Cells flagged generic (a fraction of each class layout) add
/// only generic_scale * alias_noise, so they alias almost perfectly. The
/// generic flag varies cell to cell, which makes aliased streams decohere.
/// Every visit adds AR(1) noise of magnitude cell_noise scaled by an AR(1)
/// log-normal clutter gain.
struct LatentModel
{
  std::size_t dim = 32;
  double class_separation = 1.0;
  double cell_noise = 0.1;
  double alias_noise = 0.25;
  double generic_fraction = 0.45;
  double generic_scale = 0.0;
  double noise_coherence = 0.9;
  double clutter_sigma = 0.3;
  double clutter_coherence = 0.9;

  bool operator==(const LatentModel&) const = default;
};

/// Toy scan front-end: shelf faces with per-cell depth profiles (aliased per
/// structural class like the latent model), ray-cast into a robot-centred
/// occupancy grid.
struct ScanModel
{
  std::size_t beams = 180;
  double max_range = 6.0;
  std::size_t grid_cells = 24; // per side
  double grid_extent = 3.0;    // half width of the grid, meters
  double range_noise = 0.02;
  double depth_max = 0.4;
  double clutter_probability = 0.05; // per beam, spurious short return

  bool operator==(const ScanModel&) const = default;
};

struct WorldConfig
{
  std::size_t n_aisles = 6;
  double aisle_length = 20.0;
  double aisle_spacing = 2.5;
  std::size_t n_keyframes = 0; // 0 keeps the whole plan; otherwise truncates
  double keyframe_spacing = 0.5;
  double corridor_margin = 1.0;
  // passes after the initial serpentine sweep over every aisle
  std::vector<RevisitPass> revisit_plan{{0, 1, 1.0},        {1, 1, 1.0},         {3, -1, 2.0},       {4, 1, 0.5},
                                        {2, 1, 1.0},        {5, 1, 1.5},         {0, 1, 1.25},       {1, 1, 1.0, 0.2},
                                        {4, -1, 1.0, 0.25}, {2, -1, 1.25, 0.15}, {5, 1, 1.0, 0.3},   {3, 1, 0.75, 0.2},
                                        {0, -1, 1.0, 0.25}};
  // structural class per aisle; aisles sharing a class look alike
  std::vector<int> alias_classes{0, 0, 0, 1, 1, 1};
  std::uint64_t seed = 1;

  double odom_sigma_trans = 0.008; // meters per keyframe step
  double odom_sigma_rot = 0.001;   // radians per keyframe step
  double pose_jitter_trans = 0.05;
  double pose_jitter_rot_deg = 1.0;

  DescriptorKind descriptor = DescriptorKind::latent;
  Metric metric = Metric::euclidean;
  LatentModel latent;
  ScanModel scan;
  GroundTruthParams gt;

  /// Throws ConfigError.
  void validate() const;

  bool operator==(const WorldConfig&) const = default;
};

nlohmann::json to_json(const WorldConfig& cfg);
/// Strict: unknown keys throw ConfigError; missing keys keep defaults.
WorldConfig world_config_from_json(const nlohmann::json& j);

/// Physical place observed by a keyframe.
struct PlaceInfo
{
  int aisle = -1;           // -1 outside the aisles
  int structural_class = -1; // -1 for unique places
  long cell_x = 0;
  long cell_y = 0;
  int heading_bin = 0; // multiples of 90 degrees
  double center_x = 0.0;
  double center_y = 0.0;

  bool operator==(const PlaceInfo&) const = default;
};

struct SyntheticWorld
{
  WorldConfig config;
  Trajectory gt_poses;
  Trajectory odom_poses;
  DescriptorTable descriptor_table;
  GroundTruth labels;
  std::vector<IndexPair> alias_pairs; // sorted, both orientations
  std::vector<PlaceInfo> places;      // may be empty for imported worlds

  std::size_t size() const { return gt_poses.size(); }

  /// Same class, same cell and heading, different aisle.
  bool is_alias(std::size_t q, std::size_t t) const;
};

SyntheticWorld generate_world(const WorldConfig& cfg);

/// The full pass list: serpentine sweep followed by the revisit plan.
std::vector<RevisitPass> full_plan(const WorldConfig& cfg);

struct DatasetOptions
{
  // share of H0 samples drawn from aliased pairs; the rest are generic
  // non-loop pairs
  double alias_fraction = 0.5;
  std::uint64_t seed = 7;
};

/// H1 distances from labeled loop pairs, H0 distances from non-loop pairs
/// (aliased pairs included). Sampling is without replacement. Throws
/// InsufficientPairs.
std::vector<DistanceSample> sample_distance_datasets(const SyntheticWorld& world,
                                                     std::size_t n_per_class,
                                                     const DatasetOptions& opts = {});

/// Directory layout: poses.csv, descriptors.csv, labels.json, config.json.
void save_world(const SyntheticWorld& world, const std::string& dir);
SyntheticWorld load_world(const std::string& dir);

} // namespace seqsprt
