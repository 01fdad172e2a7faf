#pragma once

// Adaptive voxel map of planar landmarks. World-frame LiDAR returns are binned
// into a hash of coarse root voxels; each voxel repeatedly tests its points
// for planarity and subdivides (up to a minimum size) when the test fails.
// Accepted voxels store a plane in closest-point form: eps = n * d with d > 0,
// the point of the plane nearest the world origin. The companion utilities
// cover per-scan planar point preselection (local curvature gate on a
// downsampled cloud) and standalone plane fitting.

#include "rigcal/sensor_models.hpp"
#include "rigcal/types.hpp"

#include <array>
#include <map>
#include <memory>
#include <vector>

namespace rigcal {

struct PlaneFit {
  Vec3 centroid = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();     // unit, oriented so normal . centroid >= 0
  Vec3 eigenvalues = Vec3::Zero();  // ascending
  Mat3 eigenvectors = Mat3::Identity();
  int num_points = 0;
};

/// Centroid/covariance eigen-decomposition of a point set.
PlaneFit fit_plane(const std::vector<Vec3>& points);

struct VoxelMapParams {
  double root_size = 2.0;
  double min_voxel_size = 0.25;
  double plane_sigma = 0.05;    // accept if lambda_min < plane_sigma^2
  double eigen_ratio = 0.1;     // ... and lambda_min / lambda_mid < eigen_ratio
  int min_points = 10;
  double outlier_sigma = 3.0;   // evict beyond this many fitted sigmas, refit once
};

/// One LiDAR return owned by the map, with build-time world coordinates and a
/// handle back to its origin (sensor index, scan index, index within the
/// scan's planar-point selection).
struct MapPointRef {
  int lidar = 0;
  int scan = 0;
  int point = 0;
  double t = 0.0;       // LiDAR clock
  Vec3 p_sensor = Vec3::Zero();
  Vec3 p_world = Vec3::Zero();
};

struct MapVoxel {
  Vec3 center = Vec3::Zero();
  double size = 0.0;
  int depth = 0;
  bool is_plane = false;
  Vec3 plane_cp = Vec3::Zero();  // closest-point parameterization, n * d
  PlaneFit fit;
  int num_distinct_scans = 0;    // distinct (lidar, scan) pairs among the points
  std::vector<MapPointRef> points;
  std::array<std::unique_ptr<MapVoxel>, 8> children;

  Vec3 plane_normal() const { return plane_cp.normalized(); }
  double plane_distance() const { return plane_cp.norm(); }
};

class VoxelPlaneMap {
 public:
  explicit VoxelPlaneMap(VoxelMapParams params = {}) : params_(params) {}

  void insert(const MapPointRef& ref);

  /// Runs the recursive fit/subdivide pass. Deterministic: root cells are
  /// visited in lexicographic key order, children in fixed octant order.
  void build();

  const std::vector<const MapVoxel*>& planar_voxels() const { return planar_; }
  const VoxelMapParams& params() const { return params_; }
  size_t num_root_cells() const { return roots_.size(); }
  size_t num_points() const { return num_points_; }

  /// Deepest voxel containing the point, or nullptr.
  const MapVoxel* find_voxel(const Vec3& p_world) const;

 private:
  VoxelMapParams params_;
  std::map<std::array<int, 3>, std::unique_ptr<MapVoxel>> roots_;
  std::vector<const MapVoxel*> planar_;
  size_t num_points_ = 0;
  bool built_ = false;
};

struct PlanarExtractionParams {
  double downsample_leaf = 0.1;   // voxel-grid leaf; first point per cell kept
  double search_radius = 0.5;
  int num_neighbors = 10;
  int min_neighbors = 6;
  double max_eigen_ratio = 0.1;   // lambda_min / lambda_mid over the neighborhood
};

/// Selects locally planar returns of one scan (sensor frame). Returns indices
/// into `points` of the downsampled representatives that pass the curvature
/// gate, in ascending order.
std::vector<int> extract_planar_points(const std::vector<LidarPoint>& points,
                                       const PlanarExtractionParams& params = {});

}  // namespace rigcal
