#include "seqsprt/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>
#include <tuple>

#include "json_util.hpp"
#include "seqsprt/error.hpp"
#include "seqsprt/random.hpp"

namespace seqsprt {

namespace {

constexpr double kPi = std::numbers::pi;

// key salts for the keyed RNG streams
enum : std::uint64_t
{
  kSaltClass = 1,
  kSaltGeneric,
  kSaltDeviation,
  kSaltUnique,
  kSaltVisitNoise,
  kSaltPose,
  kSaltOdom,
  kSaltScan,
  kSaltDepth,
};

std::uint64_t u64(long v) { return static_cast<std::uint64_t>(v); }

} // namespace

std::string to_string(DescriptorKind k) { return k == DescriptorKind::latent ? "latent" : "scan"; }

DescriptorKind descriptor_kind_from_string(const std::string& s)
{
  if (s == "latent")
    return DescriptorKind::latent;
  if (s == "scan")
    return DescriptorKind::scan;
  throw ConfigError("unknown descriptor kind '" + s + "'");
}

void WorldConfig::validate() const
{
  if (n_aisles < 1)
    throw ConfigError("world: n_aisles must be >= 1");
  if (!(aisle_length > 0.0) || !(keyframe_spacing > 0.0) || !(corridor_margin > 0.0))
    throw ConfigError("world: lengths must be positive");
  if (!(aisle_spacing > 1.0))
    throw ConfigError("world: aisle_spacing must exceed 1.0 m");
  if (!alias_classes.empty() && alias_classes.size() != n_aisles)
    throw ConfigError("world: alias_classes needs one entry per aisle");
  for (const auto& p : revisit_plan) {
    if (p.aisle >= n_aisles)
      throw ConfigError("world: revisit plan references aisle " + std::to_string(p.aisle));
    if (p.direction != 1 && p.direction != -1)
      throw ConfigError("world: pass direction must be +1 or -1");
    if (!(p.speed >= 0.5 && p.speed <= 2.0))
      throw ConfigError("world: pass speed must lie in [0.5, 2.0]");
    if (!(p.extent > 0.0 && p.extent <= 1.0))
      throw ConfigError("world: pass extent must lie in (0, 1]");
  }
  if (odom_sigma_trans < 0.0 || odom_sigma_rot < 0.0 || pose_jitter_trans < 0.0 || pose_jitter_rot_deg < 0.0)
    throw ConfigError("world: noise levels must be non-negative");
  const auto& m = latent;
  if (m.dim < 1 || m.class_separation < 0.0 || m.cell_noise < 0.0 || m.alias_noise < 0.0 || m.generic_scale < 0.0 ||
      m.clutter_sigma < 0.0)
    throw ConfigError("world: invalid latent model");
  if (m.generic_fraction < 0.0 || m.generic_fraction > 1.0 || m.noise_coherence < 0.0 || m.noise_coherence >= 1.0 ||
      m.clutter_coherence < 0.0 || m.clutter_coherence >= 1.0)
    throw ConfigError("world: latent fractions and coherences must lie in [0, 1)");
  if (scan.beams < 8 || scan.grid_cells < 2 || !(scan.max_range > 0.0) || !(scan.grid_extent > 0.0) ||
      scan.range_noise < 0.0 || scan.depth_max < 0.0 || scan.clutter_probability < 0.0 || scan.clutter_probability > 1.0)
    throw ConfigError("world: invalid scan model");
  if (!(gt.translation_gate > 0.0) || !(gt.rotation_gate_deg > 0.0))
    throw ConfigError("world: ground-truth gates must be positive");
}

std::vector<RevisitPass> full_plan(const WorldConfig& cfg)
{
  std::vector<RevisitPass> plan;
  for (std::size_t a = 0; a < cfg.n_aisles; ++a)
    plan.push_back({a, a % 2 == 0 ? 1 : -1, 1.0});
  plan.insert(plan.end(), cfg.revisit_plan.begin(), cfg.revisit_plan.end());
  return plan;
}

bool SyntheticWorld::is_alias(std::size_t q, std::size_t t) const
{
  if (q >= places.size() || t >= places.size())
    return false;
  const PlaceInfo& a = places[q];
  const PlaceInfo& b = places[t];
  return a.structural_class >= 0 && a.structural_class == b.structural_class && a.aisle != b.aisle &&
         a.cell_y == b.cell_y && a.heading_bin == b.heading_bin;
}

namespace {

struct Keyframe
{
  Pose2 nominal;
  PlaceInfo place;
};

int heading_bin(double theta)
{
  const long b = std::lround(theta / (kPi / 2.0));
  return static_cast<int>(((b % 4) + 4) % 4);
}

class PathBuilder
{
public:
  explicit PathBuilder(const WorldConfig& cfg)
    : cfg_(cfg)
  {
  }

  std::vector<Keyframe> build()
  {
    const auto plan = full_plan(cfg_);
    bool first = true;
    double x_end = 0.0, y_end = 0.0;
    for (const auto& pass : plan) {
      const double x = aisle_x(pass.aisle);
      const double y_start = pass.direction > 0 ? 0.0 : cfg_.aisle_length;
      if (!first)
        transition(x_end, y_end, x, y_start);
      first = false;
      sample_pass(pass);
      x_end = x;
      y_end = pass.extent < 1.0 ? y_start : (pass.direction > 0 ? cfg_.aisle_length : 0.0);
    }
    return std::move(frames_);
  }

private:
  double aisle_x(std::size_t a) const { return static_cast<double>(a) * cfg_.aisle_spacing; }

  int aisle_class(std::size_t a) const
  {
    return cfg_.alias_classes.empty() ? static_cast<int>(a) : cfg_.alias_classes[a];
  }

  void sample_pass(const RevisitPass& pass)
  {
    const double step = cfg_.keyframe_spacing * pass.speed;
    const double reach = cfg_.aisle_length * pass.extent;
    const auto count = static_cast<std::size_t>(std::floor(reach / step + 1e-9));
    const double y0 = pass.direction > 0 ? 0.0 : cfg_.aisle_length;
    const double dir = pass.direction > 0 ? 1.0 : -1.0;
    for (std::size_t j = 0; j <= count; ++j)
      push_aisle_frame(pass.aisle, y0 + dir * static_cast<double>(j) * step, dir);
    if (pass.extent >= 1.0)
      return;
    // out and back: the return leg faces the other way
    for (std::size_t j = count + 1; j-- > 0;)
      push_aisle_frame(pass.aisle, y0 + dir * static_cast<double>(j) * step, -dir);
  }

  void push_aisle_frame(std::size_t aisle, double y, double dir)
  {
    const double theta = dir > 0 ? kPi / 2.0 : -kPi / 2.0;
    Keyframe kf;
    kf.nominal = {aisle_x(aisle), y, theta};
    kf.place.aisle = static_cast<int>(aisle);
    kf.place.structural_class = aisle_class(aisle);
    kf.place.cell_x = static_cast<long>(aisle);
    kf.place.cell_y = static_cast<long>(std::floor(y / cfg_.keyframe_spacing + 0.5 - 1e-9));
    kf.place.heading_bin = heading_bin(theta);
    kf.place.center_x = kf.nominal.x;
    kf.place.center_y = static_cast<double>(kf.place.cell_y) * cfg_.keyframe_spacing;
    frames_.push_back(kf);
  }

  void transition(double xa, double ya, double xb, double yb)
  {
    const double L = cfg_.aisle_length;
    const double c = cfg_.corridor_margin;
    auto corridor = [&](double y_end) { return y_end >= L ? L + c : -c; };
    std::vector<std::pair<double, double>> pts{{xa, ya}, {xa, corridor(ya)}};
    if (std::abs(ya - yb) < 1e-12) {
      pts.push_back({xb, corridor(ya)});
    } else {
      const double side = -cfg_.aisle_spacing;
      pts.push_back({side, corridor(ya)});
      pts.push_back({side, corridor(yb)});
      pts.push_back({xb, corridor(yb)});
    }
    pts.push_back({xb, yb});
    sample_polyline(pts);
  }

  // interior keyframes every keyframe_spacing of arc length; the endpoints
  // belong to the adjoining passes
  void sample_polyline(const std::vector<std::pair<double, double>>& pts)
  {
    double total = 0.0;
    for (std::size_t i = 1; i < pts.size(); ++i)
      total += std::hypot(pts[i].first - pts[i - 1].first, pts[i].second - pts[i - 1].second);
    const double ks = cfg_.keyframe_spacing;
    std::size_t seg = 1;
    double seg_start = 0.0;
    for (double s = ks; s < total - ks / 2.0; s += ks) {
      double seg_len = std::hypot(pts[seg].first - pts[seg - 1].first, pts[seg].second - pts[seg - 1].second);
      while (seg + 1 < pts.size() && s > seg_start + seg_len) {
        seg_start += seg_len;
        ++seg;
        seg_len = std::hypot(pts[seg].first - pts[seg - 1].first, pts[seg].second - pts[seg - 1].second);
      }
      const double f = seg_len > 0.0 ? (s - seg_start) / seg_len : 0.0;
      const double dx = pts[seg].first - pts[seg - 1].first;
      const double dy = pts[seg].second - pts[seg - 1].second;
      Keyframe kf;
      kf.nominal = {pts[seg - 1].first + f * dx, pts[seg - 1].second + f * dy, std::atan2(dy, dx)};
      kf.place.cell_x = std::lround(kf.nominal.x / ks);
      kf.place.cell_y = std::lround(kf.nominal.y / ks);
      kf.place.heading_bin = heading_bin(kf.nominal.theta);
      kf.place.center_x = static_cast<double>(kf.place.cell_x) * ks;
      kf.place.center_y = static_cast<double>(kf.place.cell_y) * ks;
      frames_.push_back(kf);
    }
  }

  const WorldConfig& cfg_;
  std::vector<Keyframe> frames_;
};

std::vector<double> gaussian_vector(std::mt19937_64& rng, std::size_t dim, double scale)
{
  std::vector<double> v(dim);
  for (auto& x : v)
    x = scale * standard_normal(rng);
  return v;
}

bool generic_cell(const WorldConfig& cfg, int cls, long cell_y, int hbin)
{
  auto rng = keyed_rng({cfg.seed, kSaltGeneric, u64(cls), u64(cell_y), u64(hbin)});
  return uniform01(rng) < cfg.latent.generic_fraction;
}

std::vector<double> place_latent(const WorldConfig& cfg, const PlaceInfo& p)
{
  const auto& m = cfg.latent;
  const double class_scale = m.class_separation / std::sqrt(2.0 * static_cast<double>(m.dim));
  if (p.structural_class < 0) {
    auto rng = keyed_rng({cfg.seed, kSaltUnique, u64(p.cell_x), u64(p.cell_y), u64(p.heading_bin)});
    return gaussian_vector(rng, m.dim, class_scale);
  }
  auto crng = keyed_rng({cfg.seed, kSaltClass, u64(p.structural_class), u64(p.cell_y), u64(p.heading_bin)});
  auto v = gaussian_vector(crng, m.dim, class_scale);
  const double dev_scale = m.alias_noise / std::sqrt(static_cast<double>(m.dim)) *
                           (generic_cell(cfg, p.structural_class, p.cell_y, p.heading_bin) ? m.generic_scale : 1.0);
  auto drng = keyed_rng({cfg.seed, kSaltDeviation, u64(p.aisle), u64(p.cell_y), u64(p.heading_bin)});
  for (auto& x : v)
    x += dev_scale * standard_normal(drng);
  return v;
}

DescriptorTable latent_descriptors(const WorldConfig& cfg, const std::vector<PlaceInfo>& places)
{
  const auto& m = cfg.latent;
  const std::size_t n = places.size();
  std::vector<double> values;
  values.reserve(n * m.dim);

  auto rng = keyed_rng({cfg.seed, kSaltVisitNoise});
  const double per_dim = m.cell_noise / std::sqrt(static_cast<double>(m.dim));
  const double rho = m.noise_coherence;
  const double rho_c = m.clutter_coherence;
  std::vector<double> e = gaussian_vector(rng, m.dim, 1.0);
  double z = standard_normal(rng);
  std::map<std::tuple<int, long, long, int>, std::vector<double>> cache;
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0) {
      for (auto& x : e)
        x = rho * x + std::sqrt(1.0 - rho * rho) * standard_normal(rng);
      z = rho_c * z + std::sqrt(1.0 - rho_c * rho_c) * standard_normal(rng);
    }
    const PlaceInfo& p = places[k];
    const auto key = std::make_tuple(p.aisle, p.cell_x, p.cell_y, p.heading_bin);
    auto it = cache.find(key);
    if (it == cache.end())
      it = cache.emplace(key, place_latent(cfg, p)).first;
    const double gain = std::exp(m.clutter_sigma * z);
    for (std::size_t d = 0; d < m.dim; ++d)
      values.push_back(it->second[d] + gain * per_dim * e[d]);
  }
  return DescriptorTable(m.dim, std::move(values), cfg.metric);
}

struct Segment2
{
  double x1, y1, x2, y2;
};

// Shelf geometry for the scan front-end.
std::vector<Segment2> scan_environment(const WorldConfig& cfg)
{
  const double L = cfg.aisle_length;
  const double ks = cfg.keyframe_spacing;
  const double sp = cfg.aisle_spacing;
  const double hw = std::min(0.5, sp / 4.0);
  const double c = cfg.corridor_margin;
  const double x_last = static_cast<double>(cfg.n_aisles - 1) * sp;
  const auto n_cells = static_cast<long>(std::floor(L / ks + 0.5));
  std::vector<Segment2> segs;

  for (std::size_t a = 0; a < cfg.n_aisles; ++a) {
    const int cls = cfg.alias_classes.empty() ? static_cast<int>(a) : cfg.alias_classes[a];
    const double xa = static_cast<double>(a) * sp;
    for (int side = 0; side < 2; ++side) {
      const double sign = side == 0 ? -1.0 : 1.0;
      double prev_x = 0.0;
      for (long j = 0; j <= n_cells; ++j) {
        auto brng = keyed_rng({cfg.seed, kSaltDepth, u64(cls), u64(side), u64(j)});
        const double base = 2.0 * uniform01(brng) - 1.0;
        auto drng = keyed_rng({cfg.seed, kSaltDepth, 1000 + a, u64(side), u64(j)});
        const double dev = cfg.latent.alias_noise * standard_normal(drng) *
                           (generic_cell(cfg, cls, j, side) ? cfg.latent.generic_scale : 1.0);
        const double depth = cfg.scan.depth_max * std::clamp(0.5 + 0.5 * (base + dev), 0.0, 1.0);
        const double x = xa + sign * (hw + depth);
        const double y_lo = std::max(0.0, (static_cast<double>(j) - 0.5) * ks);
        const double y_hi = std::min(L, (static_cast<double>(j) + 0.5) * ks);
        segs.push_back({x, y_lo, x, y_hi});
        if (j > 0)
          segs.push_back({prev_x, y_lo, x, y_lo});
        prev_x = x;
      }
    }
  }
  // shelf block ends, including the outer blocks
  for (long a = -1; a < static_cast<long>(cfg.n_aisles); ++a) {
    const double x0 = static_cast<double>(a) * sp + hw;
    const double x1 = static_cast<double>(a + 1) * sp - hw;
    segs.push_back({x0, 0.0, x1, 0.0});
    segs.push_back({x0, L, x1, L});
    if (a == -1)
      segs.push_back({x0, 0.0, x0, L});
    if (a + 1 == static_cast<long>(cfg.n_aisles))
      segs.push_back({x1, 0.0, x1, L});
  }
  // outer walls
  const double bx0 = -sp - 1.5, bx1 = x_last + sp + 1.0;
  const double by0 = -c - 1.5, by1 = L + c + 1.5;
  segs.push_back({bx0, by0, bx1, by0});
  segs.push_back({bx0, by1, bx1, by1});
  segs.push_back({bx0, by0, bx0, by1});
  segs.push_back({bx1, by0, bx1, by1});
  return segs;
}

double ray_cast(const std::vector<Segment2>& segs, double ox, double oy, double dx, double dy, double max_range)
{
  double best = max_range;
  for (const auto& s : segs) {
    const double ex = s.x2 - s.x1, ey = s.y2 - s.y1;
    const double den = dx * ey - dy * ex;
    if (std::abs(den) < 1e-12)
      continue;
    const double wx = s.x1 - ox, wy = s.y1 - oy;
    const double t = (wx * ey - wy * ex) / den;
    const double u = (wx * dy - wy * dx) / den;
    if (t > 1e-9 && t < best && u >= 0.0 && u <= 1.0)
      best = t;
  }
  return best;
}

DescriptorTable scan_descriptors(const WorldConfig& cfg, const Trajectory& poses)
{
  const auto& m = cfg.scan;
  const auto segs = scan_environment(cfg);
  const std::size_t g = m.grid_cells;
  const double cell = 2.0 * m.grid_extent / static_cast<double>(g);
  auto rng = keyed_rng({cfg.seed, kSaltScan});
  std::vector<double> values;
  values.reserve(poses.size() * g * g);
  for (const auto& p : poses) {
    std::vector<double> grid(g * g, 0.0);
    for (std::size_t b = 0; b < m.beams; ++b) {
      const double rel = 2.0 * kPi * static_cast<double>(b) / static_cast<double>(m.beams);
      const double phi = p.theta + rel;
      double r = ray_cast(segs, p.x, p.y, std::cos(phi), std::sin(phi), m.max_range);
      r += m.range_noise * standard_normal(rng);
      if (uniform01(rng) < m.clutter_probability)
        r = 0.3 + uniform01(rng) * std::max(0.0, r - 0.3);
      if (r >= m.max_range)
        continue;
      const double lx = r * std::cos(rel) + m.grid_extent;
      const double ly = r * std::sin(rel) + m.grid_extent;
      if (lx < 0.0 || ly < 0.0)
        continue;
      const auto ix = static_cast<std::size_t>(lx / cell);
      const auto iy = static_cast<std::size_t>(ly / cell);
      if (ix < g && iy < g)
        grid[iy * g + ix] = 1.0;
    }
    values.insert(values.end(), grid.begin(), grid.end());
  }
  return DescriptorTable(g * g, std::move(values), cfg.metric);
}

std::vector<IndexPair> find_alias_pairs(const std::vector<PlaceInfo>& places)
{
  std::map<std::tuple<int, long, int>, std::vector<std::size_t>> groups;
  for (std::size_t k = 0; k < places.size(); ++k)
    if (places[k].structural_class >= 0)
      groups[{places[k].structural_class, places[k].cell_y, places[k].heading_bin}].push_back(k);
  std::vector<IndexPair> out;
  for (const auto& [key, members] : groups)
    for (std::size_t a : members)
      for (std::size_t b : members)
        if (places[a].aisle != places[b].aisle)
          out.emplace_back(a, b);
  std::sort(out.begin(), out.end());
  return out;
}

} // namespace

SyntheticWorld generate_world(const WorldConfig& cfg)
{
  cfg.validate();
  auto frames = PathBuilder(cfg).build();
  if (cfg.n_keyframes > 0) {
    if (cfg.n_keyframes > frames.size())
      throw ConfigError("world: plan yields " + std::to_string(frames.size()) + " keyframes, fewer than n_keyframes = " +
                        std::to_string(cfg.n_keyframes));
    frames.resize(cfg.n_keyframes);
  }

  SyntheticWorld w;
  w.config = cfg;
  const std::size_t n = frames.size();
  w.places.reserve(n);
  for (const auto& f : frames)
    w.places.push_back(f.place);

  auto prng = keyed_rng({cfg.seed, kSaltPose});
  const double jitter_rot = deg2rad(cfg.pose_jitter_rot_deg);
  w.gt_poses.reserve(n);
  for (const auto& f : frames) {
    Pose2 p = f.nominal;
    p.x += cfg.pose_jitter_trans * standard_normal(prng);
    p.y += cfg.pose_jitter_trans * standard_normal(prng);
    p.theta = wrap_angle(p.theta + jitter_rot * standard_normal(prng));
    w.gt_poses.push_back(p);
  }

  auto orng = keyed_rng({cfg.seed, kSaltOdom});
  w.odom_poses.reserve(n);
  if (n > 0)
    w.odom_poses.push_back(w.gt_poses.front());
  for (std::size_t k = 1; k < n; ++k) {
    Pose2 rel = w.gt_poses[k - 1].between(w.gt_poses[k]);
    rel.x += cfg.odom_sigma_trans * standard_normal(orng);
    rel.y += cfg.odom_sigma_trans * standard_normal(orng);
    rel.theta = wrap_angle(rel.theta + cfg.odom_sigma_rot * standard_normal(orng));
    w.odom_poses.push_back(w.odom_poses.back().compose(rel));
  }

  w.descriptor_table = cfg.descriptor == DescriptorKind::latent ? latent_descriptors(cfg, w.places)
                                                                 : scan_descriptors(cfg, w.gt_poses);
  w.labels = label_ground_truth(w.gt_poses, cfg.gt);
  w.alias_pairs = find_alias_pairs(w.places);
  return w;
}

std::vector<DistanceSample> sample_distance_datasets(const SyntheticWorld& world,
                                                     std::size_t n_per_class,
                                                     const DatasetOptions& opts)
{
  if (!(opts.alias_fraction >= 0.0 && opts.alias_fraction <= 1.0))
    throw DomainError("sample_distance_datasets: alias_fraction must lie in [0, 1]");
  const auto& table = world.descriptor_table;
  const std::size_t n = world.size();
  if (table.size() != n)
    throw DomainError("sample_distance_datasets: descriptor table and trajectory disagree in length");
  const auto& loops = world.labels.loop_pairs;
  if (loops.size() < n_per_class)
    throw InsufficientPairs("sample_distance_datasets: " + std::to_string(loops.size()) + " loop pairs, " +
                            std::to_string(n_per_class) + " requested");

  auto rng = keyed_rng({world.config.seed, opts.seed});
  auto pick = [&](std::size_t count, std::size_t pool) {
    // partial Fisher-Yates
    std::vector<std::size_t> idx(pool);
    for (std::size_t i = 0; i < pool; ++i)
      idx[i] = i;
    for (std::size_t i = 0; i < count; ++i)
      std::swap(idx[i], idx[i + rng() % (pool - i)]);
    idx.resize(count);
    return idx;
  };

  std::vector<DistanceSample> out;
  out.reserve(2 * n_per_class);
  for (std::size_t i : pick(n_per_class, loops.size()))
    out.push_back({table.distance(loops[i].first, loops[i].second), Hypothesis::H1});

  const std::size_t n_alias =
    std::min(world.alias_pairs.size(), static_cast<std::size_t>(std::llround(opts.alias_fraction * static_cast<double>(n_per_class))));
  std::set<IndexPair> used;
  for (std::size_t i : pick(n_alias, world.alias_pairs.size())) {
    const auto& p = world.alias_pairs[i];
    used.insert(p);
    out.push_back({table.distance(p.first, p.second), Hypothesis::H0});
  }

  const std::size_t n_generic = n_per_class - n_alias;
  const auto& gp = world.labels.params;
  const double rot_gate = deg2rad(gp.rotation_gate_deg);
  const std::size_t max_attempts = 200 * n_generic + 1000;
  std::size_t got = 0;
  for (std::size_t attempt = 0; got < n_generic && attempt < max_attempts && n > 1; ++attempt) {
    const std::size_t q = rng() % n;
    const std::size_t t = rng() % n;
    const std::size_t sep = q > t ? q - t : t - q;
    if (sep < gp.min_separation || used.count({q, t}))
      continue;
    const auto& a = world.gt_poses[q];
    const auto& b = world.gt_poses[t];
    const bool near = std::hypot(a.x - b.x, a.y - b.y) < gp.translation_gate &&
                      std::abs(wrap_angle(a.theta - b.theta)) < rot_gate;
    if (near || world.is_alias(q, t))
      continue;
    used.insert({q, t});
    out.push_back({table.distance(q, t), Hypothesis::H0});
    ++got;
  }
  if (got < n_generic)
    throw InsufficientPairs("sample_distance_datasets: could not draw " + std::to_string(n_generic) +
                            " non-loop pairs");
  return out;
}

nlohmann::json to_json(const WorldConfig& c)
{
  nlohmann::json plan = nlohmann::json::array();
  for (const auto& p : c.revisit_plan)
    plan.push_back({{"aisle", p.aisle}, {"direction", p.direction}, {"speed", p.speed}, {"extent", p.extent}});
  const auto& m = c.latent;
  const auto& s = c.scan;
  return {{"n_aisles", c.n_aisles},
          {"aisle_length", c.aisle_length},
          {"aisle_spacing", c.aisle_spacing},
          {"n_keyframes", c.n_keyframes},
          {"keyframe_spacing", c.keyframe_spacing},
          {"corridor_margin", c.corridor_margin},
          {"revisit_plan", plan},
          {"alias_classes", c.alias_classes},
          {"seed", c.seed},
          {"odom_sigma_trans", c.odom_sigma_trans},
          {"odom_sigma_rot", c.odom_sigma_rot},
          {"pose_jitter_trans", c.pose_jitter_trans},
          {"pose_jitter_rot_deg", c.pose_jitter_rot_deg},
          {"descriptor", to_string(c.descriptor)},
          {"metric", to_string(c.metric)},
          {"latent",
           {{"dim", m.dim},
            {"class_separation", m.class_separation},
            {"cell_noise", m.cell_noise},
            {"alias_noise", m.alias_noise},
            {"generic_fraction", m.generic_fraction},
            {"generic_scale", m.generic_scale},
            {"noise_coherence", m.noise_coherence},
            {"clutter_sigma", m.clutter_sigma},
            {"clutter_coherence", m.clutter_coherence}}},
          {"scan",
           {{"beams", s.beams},
            {"max_range", s.max_range},
            {"grid_cells", s.grid_cells},
            {"grid_extent", s.grid_extent},
            {"range_noise", s.range_noise},
            {"depth_max", s.depth_max},
            {"clutter_probability", s.clutter_probability}}},
          {"gt",
           {{"translation_gate", c.gt.translation_gate},
            {"rotation_gate_deg", c.gt.rotation_gate_deg},
            {"min_separation", c.gt.min_separation},
            {"suppress_near_duplicates", c.gt.suppress_near_duplicates},
            {"gap_tolerance", c.gt.gap_tolerance}}}};
}

WorldConfig world_config_from_json(const nlohmann::json& j)
{
  using detail::check_keys;
  using detail::read_opt;
  const std::string ctx = "world";
  check_keys(j,
             {"n_aisles",
              "aisle_length",
              "aisle_spacing",
              "n_keyframes",
              "keyframe_spacing",
              "corridor_margin",
              "revisit_plan",
              "alias_classes",
              "seed",
              "odom_sigma_trans",
              "odom_sigma_rot",
              "pose_jitter_trans",
              "pose_jitter_rot_deg",
              "descriptor",
              "metric",
              "latent",
              "scan",
              "gt"},
             ctx);
  WorldConfig c;
  read_opt(j, "n_aisles", c.n_aisles, ctx);
  read_opt(j, "aisle_length", c.aisle_length, ctx);
  read_opt(j, "aisle_spacing", c.aisle_spacing, ctx);
  read_opt(j, "n_keyframes", c.n_keyframes, ctx);
  read_opt(j, "keyframe_spacing", c.keyframe_spacing, ctx);
  read_opt(j, "corridor_margin", c.corridor_margin, ctx);
  read_opt(j, "alias_classes", c.alias_classes, ctx);
  read_opt(j, "seed", c.seed, ctx);
  read_opt(j, "odom_sigma_trans", c.odom_sigma_trans, ctx);
  read_opt(j, "odom_sigma_rot", c.odom_sigma_rot, ctx);
  read_opt(j, "pose_jitter_trans", c.pose_jitter_trans, ctx);
  read_opt(j, "pose_jitter_rot_deg", c.pose_jitter_rot_deg, ctx);
  if (j.contains("revisit_plan")) {
    if (!j.at("revisit_plan").is_array())
      throw ConfigError("world.revisit_plan: expected an array");
    c.revisit_plan.clear();
    for (const auto& p : j.at("revisit_plan")) {
      check_keys(p, {"aisle", "direction", "speed", "extent"}, "world.revisit_plan[]");
      RevisitPass pass;
      read_opt(p, "aisle", pass.aisle, ctx);
      read_opt(p, "direction", pass.direction, ctx);
      read_opt(p, "speed", pass.speed, ctx);
      read_opt(p, "extent", pass.extent, ctx);
      c.revisit_plan.push_back(pass);
    }
  }
  if (j.contains("descriptor")) {
    std::string s;
    read_opt(j, "descriptor", s, ctx);
    c.descriptor = descriptor_kind_from_string(s);
  }
  if (j.contains("metric")) {
    std::string s;
    read_opt(j, "metric", s, ctx);
    try {
      c.metric = metric_from_string(s);
    } catch (const Error& e) {
      throw ConfigError(std::string("world.metric: ") + e.what());
    }
  }
  if (j.contains("latent")) {
    const auto& l = j.at("latent");
    const std::string lc = "world.latent";
    check_keys(l,
               {"dim",
                "class_separation",
                "cell_noise",
                "alias_noise",
                "generic_fraction",
                "generic_scale",
                "noise_coherence",
                "clutter_sigma",
                "clutter_coherence"},
               lc);
    read_opt(l, "dim", c.latent.dim, lc);
    read_opt(l, "class_separation", c.latent.class_separation, lc);
    read_opt(l, "cell_noise", c.latent.cell_noise, lc);
    read_opt(l, "alias_noise", c.latent.alias_noise, lc);
    read_opt(l, "generic_fraction", c.latent.generic_fraction, lc);
    read_opt(l, "generic_scale", c.latent.generic_scale, lc);
    read_opt(l, "noise_coherence", c.latent.noise_coherence, lc);
    read_opt(l, "clutter_sigma", c.latent.clutter_sigma, lc);
    read_opt(l, "clutter_coherence", c.latent.clutter_coherence, lc);
  }
  if (j.contains("scan")) {
    const auto& s = j.at("scan");
    const std::string sc = "world.scan";
    check_keys(s, {"beams", "max_range", "grid_cells", "grid_extent", "range_noise", "depth_max", "clutter_probability"}, sc);
    read_opt(s, "beams", c.scan.beams, sc);
    read_opt(s, "max_range", c.scan.max_range, sc);
    read_opt(s, "grid_cells", c.scan.grid_cells, sc);
    read_opt(s, "grid_extent", c.scan.grid_extent, sc);
    read_opt(s, "range_noise", c.scan.range_noise, sc);
    read_opt(s, "depth_max", c.scan.depth_max, sc);
    read_opt(s, "clutter_probability", c.scan.clutter_probability, sc);
  }
  if (j.contains("gt")) {
    const auto& g = j.at("gt");
    const std::string gc = "world.gt";
    check_keys(g, {"translation_gate", "rotation_gate_deg", "min_separation", "suppress_near_duplicates", "gap_tolerance"}, gc);
    read_opt(g, "translation_gate", c.gt.translation_gate, gc);
    read_opt(g, "rotation_gate_deg", c.gt.rotation_gate_deg, gc);
    read_opt(g, "min_separation", c.gt.min_separation, gc);
    read_opt(g, "suppress_near_duplicates", c.gt.suppress_near_duplicates, gc);
    read_opt(g, "gap_tolerance", c.gt.gap_tolerance, gc);
  }
  c.validate();
  return c;
}

namespace {

nlohmann::json read_json_file(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in)
    throw FormatError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_json_file(const std::filesystem::path& path, const nlohmann::json& j)
{
  std::ofstream out(path);
  if (!out)
    throw FormatError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

} // namespace

void save_world(const SyntheticWorld& w, const std::string& dir)
{
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const fs::path root(dir);
  {
    std::ofstream out(root / "poses.csv");
    if (!out)
      throw FormatError("cannot write poses.csv in " + dir);
    out.precision(17);
    out << "keyframe,gt_x,gt_y,gt_theta,odom_x,odom_y,odom_theta\n";
    for (std::size_t k = 0; k < w.size(); ++k) {
      const auto& g = w.gt_poses[k];
      const auto& o = w.odom_poses[k];
      out << k << ',' << g.x << ',' << g.y << ',' << g.theta << ',' << o.x << ',' << o.y << ',' << o.theta << '\n';
    }
  }
  w.descriptor_table.save_csv((root / "descriptors.csv").string());

  nlohmann::json aliases = nlohmann::json::array();
  for (const auto& [q, t] : w.alias_pairs)
    aliases.push_back({q, t});
  nlohmann::json places = nlohmann::json::array();
  for (const auto& p : w.places)
    places.push_back({p.aisle, p.structural_class, p.cell_x, p.cell_y, p.heading_bin, p.center_x, p.center_y});
  write_json_file(root / "labels.json",
                  {{"ground_truth", to_json(w.labels)}, {"alias_pairs", aliases}, {"places", places}});
  write_json_file(root / "config.json", to_json(w.config));
}

SyntheticWorld load_world(const std::string& dir)
{
  namespace fs = std::filesystem;
  const fs::path root(dir);
  SyntheticWorld w;
  if (fs::exists(root / "config.json"))
    w.config = world_config_from_json(read_json_file(root / "config.json"));

  {
    std::ifstream in(root / "poses.csv");
    if (!in)
      throw FormatError("cannot open poses.csv in " + dir);
    std::string line;
    std::size_t expected = 0;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("keyframe", 0) == 0)
        continue;
      std::stringstream ss(line);
      std::string cell;
      std::vector<double> v;
      while (std::getline(ss, cell, ','))
        v.push_back(std::stod(cell));
      if (v.size() != 7 && v.size() != 4)
        throw FormatError("poses.csv: expected 4 or 7 columns, got " + std::to_string(v.size()));
      if (static_cast<std::size_t>(v[0]) != expected++)
        throw FormatError("poses.csv: keyframe indices must be dense from 0");
      w.gt_poses.push_back({v[1], v[2], v[3]});
      w.odom_poses.push_back(v.size() == 7 ? Pose2{v[4], v[5], v[6]} : Pose2{v[1], v[2], v[3]});
    }
  }
  w.descriptor_table = DescriptorTable::load_csv((root / "descriptors.csv").string(), w.config.metric);
  if (w.descriptor_table.size() != w.gt_poses.size())
    throw FormatError("world: descriptors.csv and poses.csv disagree in length");

  if (fs::exists(root / "labels.json")) {
    const auto j = read_json_file(root / "labels.json");
    try {
      w.labels = ground_truth_from_json(j.at("ground_truth"));
      for (const auto& e : j.at("alias_pairs"))
        w.alias_pairs.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
      if (j.contains("places"))
        for (const auto& e : j.at("places"))
          w.places.push_back({e.at(0).get<int>(),
                              e.at(1).get<int>(),
                              e.at(2).get<long>(),
                              e.at(3).get<long>(),
                              e.at(4).get<int>(),
                              e.at(5).get<double>(),
                              e.at(6).get<double>()});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(std::string("labels.json: ") + e.what());
    }
  } else {
    w.labels = label_ground_truth(w.gt_poses, w.config.gt);
  }
  return w;
}

} // namespace seqsprt
