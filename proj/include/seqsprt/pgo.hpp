#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "seqsprt/geometry.hpp"
#include "seqsprt/sprt.hpp"

namespace seqsprt {

struct SyntheticWorld;

using Information = Eigen::Matrix3d;

struct PoseEdge
{
  std::size_t i = 0;
  std::size_t j = 0;
  Pose2 measurement; // pose of j in the frame of i
  Information information = Information::Identity();
  long source_segment = -1; // loop edges: index of the originating segment
};

struct PoseGraph2
{
  Trajectory nodes;
  std::vector<PoseEdge> odom_edges;
  std::vector<PoseEdge> loop_edges;

  /// Throws DomainError when the odometry chain, node indices or
  /// information matrices are malformed.
  void validate() const;
};

Information diagonal_information(double xx, double yy, double tt);

struct LoopEdgeOptions
{
  std::size_t stride = 3; // one edge per `stride` committed steps
  double noise_trans = 0.05;
  double noise_rot_deg = 1.0;
  // registration basin: pairs inside it measure their true relative pose
  double basin_trans = 1.0;
  double basin_rot_deg = 20.0;
  Information odom_information = diagonal_information(50.0, 50.0, 100.0);
  Information loop_information = diagonal_information(20.0, 20.0, 40.0);
  std::uint64_t seed = 11;
};

/// Odometry chain from the world's drifted poses plus loop edges sampled
/// along every committed segment. A pair outside the registration basin
/// measures the relative pose implied by the wrong association: the query
/// is assumed to stand at the database cell, offset as at its own cell.
PoseGraph2 build_graph(const SyntheticWorld& world, std::span<const LoopSegment> accepted, const LoopEdgeOptions& opts = {});

/// e = t2v(Z^-1 X_i^-1 X_j), angle wrapped.
Eigen::Vector3d edge_error(const Pose2& xi, const Pose2& xj, const Pose2& z);

/// Analytic Jacobians of edge_error with respect to (x, y, theta) of x_i (A)
/// and x_j (B).
void edge_jacobians(const Pose2& xi, const Pose2& xj, const Pose2& z, Eigen::Matrix3d& A, Eigen::Matrix3d& B);

double graph_chi2(const PoseGraph2& g, const Trajectory& poses, bool huber_loops = false, double huber_delta = 1.0);

struct OptimizeOptions
{
  std::size_t max_iters = 50;
  double tol = 1e-9;
  bool huber_loops = false; // robust kernel on loop edges, off by default
  double huber_delta = 1.0;
};

struct OptimizeResult
{
  Trajectory poses;
  double chi2 = 0.0;
  double initial_chi2 = 0.0;
  std::size_t iterations = 0;
  std::vector<double> chi2_history; // after every accepted step, starting with the initial value
};

/// Gauss-Newton with Levenberg damping fallback, node 0 fixed. Throws
/// SingularSystem when the normal equations cannot be factorised even with
/// damping.
OptimizeResult optimize(const PoseGraph2& g, const OptimizeOptions& opts = {});

struct TrajectoryError
{
  double ate_rmse = 0.0;
  double rpe_rmse = 0.0;
  bool aligned = true;
};

/// Least-squares rigid 2D alignment (rotation and translation) of `est`
/// onto `ref`.
Pose2 align_rigid(std::span<const Pose2> est, std::span<const Pose2> ref);

/// ATE after rigid alignment; RPE over frame pairs `rpe_delta` apart
/// (0 when the trajectory is shorter than that).
TrajectoryError ate_rpe(std::span<const Pose2> est, std::span<const Pose2> gt, std::size_t rpe_delta = 10);

void save_g2o(const PoseGraph2& g, const std::string& path);
/// EDGE_SE2 records between consecutive vertices become odometry edges, the
/// rest loop edges.
PoseGraph2 load_g2o(const std::string& path);

void save_trajectory_csv(std::span<const Pose2> poses, const std::string& path);

} // namespace seqsprt
