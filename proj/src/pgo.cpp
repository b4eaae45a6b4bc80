#include "seqsprt/pgo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "seqsprt/error.hpp"
#include "seqsprt/random.hpp"
#include "seqsprt/synth.hpp"

namespace seqsprt {

Information diagonal_information(double xx, double yy, double tt)
{
  Information m = Information::Zero();
  m(0, 0) = xx;
  m(1, 1) = yy;
  m(2, 2) = tt;
  return m;
}

namespace {

void check_information(const Information& m)
{
  if (!m.allFinite() || !m.isApprox(m.transpose(), 1e-12))
    throw DomainError("pose graph: information matrix must be finite and symmetric");
  Eigen::LLT<Information> llt(m);
  if (llt.info() != Eigen::Success)
    throw DomainError("pose graph: information matrix must be positive definite");
}

} // namespace

void PoseGraph2::validate() const
{
  const std::size_t n = nodes.size();
  if (n == 0)
    throw DomainError("pose graph: no nodes");
  if (odom_edges.size() != n - 1)
    throw DomainError("pose graph: odometry must form a chain over all nodes");
  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (odom_edges[k].i != k || odom_edges[k].j != k + 1)
      throw DomainError("pose graph: odometry edge " + std::to_string(k) + " does not link k to k+1");
    check_information(odom_edges[k].information);
  }
  for (const auto& e : loop_edges) {
    if (e.i >= n || e.j >= n || e.i == e.j)
      throw DomainError("pose graph: loop edge references invalid nodes");
    check_information(e.information);
  }
}

PoseGraph2 build_graph(const SyntheticWorld& world, std::span<const LoopSegment> accepted, const LoopEdgeOptions& opts)
{
  if (opts.stride < 1)
    throw DomainError("build_graph: stride must be >= 1");
  const std::size_t n = world.size();
  PoseGraph2 g;
  g.nodes = world.odom_poses;
  for (std::size_t k = 0; k + 1 < n; ++k)
    g.odom_edges.push_back({k, k + 1, world.odom_poses[k].between(world.odom_poses[k + 1]), opts.odom_information, -1});

  const double basin_rot = deg2rad(opts.basin_rot_deg);
  const double noise_rot = deg2rad(opts.noise_rot_deg);
  for (std::size_t sid = 0; sid < accepted.size(); ++sid) {
    const auto& steps = accepted[sid].steps;
    for (std::size_t m = 0; m < steps.size(); m += opts.stride) {
      const auto [a, b] = steps[m];
      if (a >= n || b >= n)
        throw DomainError("build_graph: segment references keyframe outside the world");
      const Pose2& pa = world.gt_poses[a];
      const Pose2& pb = world.gt_poses[b];
      Pose2 z = pa.between(pb);
      if (z.translation_norm() > opts.basin_trans || std::abs(z.theta) > basin_rot) {
        Pose2 assumed = pa;
        if (a < world.places.size() && b < world.places.size()) {
          assumed.x += world.places[b].center_x - world.places[a].center_x;
          assumed.y += world.places[b].center_y - world.places[a].center_y;
        } else {
          assumed.x = pb.x;
          assumed.y = pb.y;
        }
        z = assumed.between(pb);
      }
      auto rng = keyed_rng({opts.seed, a, b});
      z.x += opts.noise_trans * standard_normal(rng);
      z.y += opts.noise_trans * standard_normal(rng);
      z.theta = wrap_angle(z.theta + noise_rot * standard_normal(rng));
      g.loop_edges.push_back({a, b, z, opts.loop_information, static_cast<long>(sid)});
    }
  }
  return g;
}

Eigen::Vector3d edge_error(const Pose2& xi, const Pose2& xj, const Pose2& z)
{
  const double ci = std::cos(xi.theta), si = std::sin(xi.theta);
  const double cz = std::cos(z.theta), sz = std::sin(z.theta);
  const double dx = xj.x - xi.x, dy = xj.y - xi.y;
  // Ri^T (tj - ti) - tz
  const double lx = ci * dx + si * dy - z.x;
  const double ly = -si * dx + ci * dy - z.y;
  return {cz * lx + sz * ly, -sz * lx + cz * ly, wrap_angle(xj.theta - xi.theta - z.theta)};
}

void edge_jacobians(const Pose2& xi, const Pose2& xj, const Pose2& z, Eigen::Matrix3d& A, Eigen::Matrix3d& B)
{
  const double ci = std::cos(xi.theta), si = std::sin(xi.theta);
  const double cz = std::cos(z.theta), sz = std::sin(z.theta);
  const double dx = xj.x - xi.x, dy = xj.y - xi.y;
  Eigen::Matrix2d RzT;
  RzT << cz, sz, -sz, cz;
  Eigen::Matrix2d RiT;
  RiT << ci, si, -si, ci;
  Eigen::Matrix2d dRiT;
  dRiT << -si, ci, -ci, -si;
  const Eigen::Matrix2d M = RzT * RiT;

  A.setZero();
  A.block<2, 2>(0, 0) = -M;
  A.block<2, 1>(0, 2) = RzT * dRiT * Eigen::Vector2d(dx, dy);
  A(2, 2) = -1.0;

  B.setZero();
  B.block<2, 2>(0, 0) = M;
  B(2, 2) = 1.0;
}

namespace {

// Robust weight and cost for a squared Mahalanobis residual.
std::pair<double, double> edge_weight(double r2, bool huber, double delta)
{
  if (!huber || r2 <= delta * delta)
    return {1.0, r2};
  const double r = std::sqrt(r2);
  return {delta / r, 2.0 * delta * r - delta * delta};
}

} // namespace

double graph_chi2(const PoseGraph2& g, const Trajectory& poses, bool huber_loops, double huber_delta)
{
  double chi2 = 0.0;
  for (const auto& e : g.odom_edges) {
    const Eigen::Vector3d r = edge_error(poses[e.i], poses[e.j], e.measurement);
    chi2 += r.dot(e.information * r);
  }
  for (const auto& e : g.loop_edges) {
    const Eigen::Vector3d r = edge_error(poses[e.i], poses[e.j], e.measurement);
    chi2 += edge_weight(r.dot(e.information * r), huber_loops, huber_delta).second;
  }
  return chi2;
}

namespace {

class NormalEquations
{
public:
  NormalEquations(const PoseGraph2& g, const Trajectory& x, const OptimizeOptions& opts)
    : dim_(3 * (x.size() - 1))
    , b_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim_)))
  {
    for (const auto& e : g.odom_edges)
      add(e, x, 1.0);
    for (const auto& e : g.loop_edges) {
      const Eigen::Vector3d r = edge_error(x[e.i], x[e.j], e.measurement);
      add(e, x, edge_weight(r.dot(e.information * r), opts.huber_loops, opts.huber_delta).first);
    }
  }

  // Solves (H + lambda I) dx = -b; empty optional on factorisation failure.
  std::optional<Eigen::VectorXd> solve(double lambda) const
  {
    std::vector<Eigen::Triplet<double>> t = triplets_;
    for (std::size_t k = 0; k < dim_; ++k)
      t.emplace_back(static_cast<int>(k), static_cast<int>(k), lambda);
    Eigen::SparseMatrix<double> H(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(dim_));
    H.setFromTriplets(t.begin(), t.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(H);
    if (ldlt.info() != Eigen::Success)
      return std::nullopt;
    const double scale = std::max(1.0, H.diagonal().cwiseAbs().maxCoeff());
    if ((ldlt.vectorD().array() <= 1e-12 * scale).any())
      return std::nullopt;
    Eigen::VectorXd dx = ldlt.solve(-b_);
    if (ldlt.info() != Eigen::Success || !dx.allFinite())
      return std::nullopt;
    return dx;
  }

  std::size_t dim() const { return dim_; }

private:
  void add(const PoseEdge& e, const Trajectory& x, double w)
  {
    Eigen::Matrix3d A, B;
    edge_jacobians(x[e.i], x[e.j], e.measurement, A, B);
    const Eigen::Vector3d r = edge_error(x[e.i], x[e.j], e.measurement);
    const Eigen::Matrix3d O = w * e.information;
    block(e.i, e.i, A.transpose() * O * A);
    block(e.i, e.j, A.transpose() * O * B);
    block(e.j, e.i, B.transpose() * O * A);
    block(e.j, e.j, B.transpose() * O * B);
    if (e.i > 0)
      b_.segment<3>(static_cast<Eigen::Index>(3 * (e.i - 1))) += A.transpose() * O * r;
    if (e.j > 0)
      b_.segment<3>(static_cast<Eigen::Index>(3 * (e.j - 1))) += B.transpose() * O * r;
  }

  void block(std::size_t a, std::size_t b, const Eigen::Matrix3d& m)
  {
    if (a == 0 || b == 0)
      return; // node 0 is the gauge
    const int ra = static_cast<int>(3 * (a - 1)), rb = static_cast<int>(3 * (b - 1));
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c)
        triplets_.emplace_back(ra + r, rb + c, m(r, c));
  }

  std::size_t dim_;
  std::vector<Eigen::Triplet<double>> triplets_;
  Eigen::VectorXd b_;
};

Trajectory apply_update(const Trajectory& x, const Eigen::VectorXd& dx)
{
  Trajectory out = x;
  for (std::size_t k = 1; k < x.size(); ++k) {
    const auto o = static_cast<Eigen::Index>(3 * (k - 1));
    out[k].x += dx(o);
    out[k].y += dx(o + 1);
    out[k].theta = wrap_angle(out[k].theta + dx(o + 2));
  }
  return out;
}

} // namespace

OptimizeResult optimize(const PoseGraph2& g, const OptimizeOptions& opts)
{
  g.validate();
  OptimizeResult res;
  res.poses = g.nodes;
  double chi2 = graph_chi2(g, res.poses, opts.huber_loops, opts.huber_delta);
  res.initial_chi2 = chi2;
  res.chi2_history.push_back(chi2);
  if (g.nodes.size() < 2) {
    res.chi2 = chi2;
    return res;
  }

  double lambda = 0.0;
  for (std::size_t it = 0; it < opts.max_iters && chi2 > 0.0; ++it) {
    const NormalEquations ne(g, res.poses, opts);
    bool accepted = false;
    while (true) {
      const auto dx = ne.solve(lambda);
      if (!dx && lambda == 0.0 && it == 0)
        throw SingularSystem("optimize: normal equations are rank deficient beyond the fixed gauge");
      if (dx) {
        Trajectory cand = apply_update(res.poses, *dx);
        const double c = graph_chi2(g, cand, opts.huber_loops, opts.huber_delta);
        if (c <= chi2) {
          const double rel = (chi2 - c) / std::max(chi2, 1e-300);
          res.poses = std::move(cand);
          chi2 = c;
          res.chi2_history.push_back(chi2);
          ++res.iterations;
          lambda = lambda > 1e-9 ? lambda / 10.0 : 0.0;
          accepted = true;
          if (rel < opts.tol)
            it = opts.max_iters;
          break;
        }
      }
      lambda = lambda == 0.0 ? 1e-4 : lambda * 10.0;
      if (lambda > 1e12)
        break;
    }
    if (!accepted)
      break;
  }
  res.chi2 = chi2;
  return res;
}

Pose2 align_rigid(std::span<const Pose2> est, std::span<const Pose2> ref)
{
  if (est.size() != ref.size())
    throw DomainError("align_rigid: trajectories differ in length");
  if (est.empty())
    return {};
  const double n = static_cast<double>(est.size());
  double mex = 0, mey = 0, mrx = 0, mry = 0;
  for (std::size_t k = 0; k < est.size(); ++k) {
    mex += est[k].x;
    mey += est[k].y;
    mrx += ref[k].x;
    mry += ref[k].y;
  }
  mex /= n;
  mey /= n;
  mrx /= n;
  mry /= n;
  double sxx = 0.0, sxy = 0.0; // cos and sin components of the optimal rotation
  for (std::size_t k = 0; k < est.size(); ++k) {
    const double ex = est[k].x - mex, ey = est[k].y - mey;
    const double rx = ref[k].x - mrx, ry = ref[k].y - mry;
    sxx += ex * rx + ey * ry;
    sxy += ex * ry - ey * rx;
  }
  const double th = (sxx == 0.0 && sxy == 0.0) ? 0.0 : std::atan2(sxy, sxx);
  const double c = std::cos(th), s = std::sin(th);
  return {mrx - (c * mex - s * mey), mry - (s * mex + c * mey), th};
}

TrajectoryError ate_rpe(std::span<const Pose2> est, std::span<const Pose2> gt, std::size_t rpe_delta)
{
  if (est.size() != gt.size())
    throw DomainError("ate_rpe: trajectories differ in length");
  TrajectoryError out;
  if (est.empty())
    return out;
  const Pose2 T = align_rigid(est, gt);
  double acc = 0.0;
  for (std::size_t k = 0; k < est.size(); ++k) {
    const Pose2 p = T.compose(est[k]);
    acc += (p.x - gt[k].x) * (p.x - gt[k].x) + (p.y - gt[k].y) * (p.y - gt[k].y);
  }
  out.ate_rmse = std::sqrt(acc / static_cast<double>(est.size()));

  if (rpe_delta > 0 && est.size() > rpe_delta) {
    double racc = 0.0;
    const std::size_t m = est.size() - rpe_delta;
    for (std::size_t i = 0; i < m; ++i) {
      const Pose2 rg = gt[i].between(gt[i + rpe_delta]);
      const Pose2 re = est[i].between(est[i + rpe_delta]);
      const double e = rg.between(re).translation_norm();
      racc += e * e;
    }
    out.rpe_rmse = std::sqrt(racc / static_cast<double>(m));
  }
  return out;
}

namespace {

void write_edge(std::ostream& out, const PoseEdge& e)
{
  const auto& I = e.information;
  out << "EDGE_SE2 " << e.i << ' ' << e.j << ' ' << e.measurement.x << ' ' << e.measurement.y << ' '
      << e.measurement.theta << ' ' << I(0, 0) << ' ' << I(0, 1) << ' ' << I(0, 2) << ' ' << I(1, 1) << ' ' << I(1, 2)
      << ' ' << I(2, 2) << '\n';
}

} // namespace

void save_g2o(const PoseGraph2& g, const std::string& path)
{
  std::ofstream out(path);
  if (!out)
    throw FormatError("cannot write " + path);
  out.precision(17);
  for (std::size_t k = 0; k < g.nodes.size(); ++k)
    out << "VERTEX_SE2 " << k << ' ' << g.nodes[k].x << ' ' << g.nodes[k].y << ' ' << g.nodes[k].theta << '\n';
  if (!g.nodes.empty())
    out << "FIX 0\n";
  for (const auto& e : g.odom_edges)
    write_edge(out, e);
  for (const auto& e : g.loop_edges)
    write_edge(out, e);
}

PoseGraph2 load_g2o(const std::string& path)
{
  std::ifstream in(path);
  if (!in)
    throw FormatError("cannot open " + path);
  PoseGraph2 g;
  std::vector<PoseEdge> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#' || tag == "FIX")
      continue;
    if (tag == "VERTEX_SE2") {
      std::size_t id;
      Pose2 p;
      if (!(ss >> id >> p.x >> p.y >> p.theta))
        throw FormatError(path + ":" + std::to_string(lineno) + ": malformed VERTEX_SE2");
      if (id != g.nodes.size())
        throw FormatError(path + ":" + std::to_string(lineno) + ": vertex ids must be dense from 0");
      p.theta = wrap_angle(p.theta);
      g.nodes.push_back(p);
    } else if (tag == "EDGE_SE2") {
      PoseEdge e;
      double i11, i12, i13, i22, i23, i33;
      if (!(ss >> e.i >> e.j >> e.measurement.x >> e.measurement.y >> e.measurement.theta >> i11 >> i12 >> i13 >> i22 >>
            i23 >> i33))
        throw FormatError(path + ":" + std::to_string(lineno) + ": malformed EDGE_SE2");
      e.information << i11, i12, i13, i12, i22, i23, i13, i23, i33;
      edges.push_back(e);
    } else {
      throw FormatError(path + ":" + std::to_string(lineno) + ": unsupported record '" + tag + "'");
    }
  }
  std::vector<bool> have_odom(g.nodes.size(), false);
  std::vector<PoseEdge> odom(g.nodes.empty() ? 0 : g.nodes.size() - 1);
  for (auto& e : edges) {
    if (e.j == e.i + 1 && e.i < odom.size() && !have_odom[e.i]) {
      have_odom[e.i] = true;
      odom[e.i] = e;
    } else {
      e.source_segment = static_cast<long>(g.loop_edges.size());
      g.loop_edges.push_back(e);
    }
  }
  for (std::size_t k = 0; k < odom.size(); ++k)
    if (!have_odom[k])
      throw FormatError(path + ": missing odometry edge " + std::to_string(k) + " -> " + std::to_string(k + 1));
  g.odom_edges = std::move(odom);
  g.validate();
  return g;
}

void save_trajectory_csv(std::span<const Pose2> poses, const std::string& path)
{
  std::ofstream out(path);
  if (!out)
    throw FormatError("cannot write " + path);
  out.precision(17);
  out << "keyframe,x,y,theta\n";
  for (std::size_t k = 0; k < poses.size(); ++k)
    out << k << ',' << poses[k].x << ',' << poses[k].y << ',' << poses[k].theta << '\n';
}

} // namespace seqsprt
