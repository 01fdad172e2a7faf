#include "rigcal/voxel_map.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>

namespace rigcal {

PlaneFit fit_plane(const std::vector<Vec3>& points) {
  PlaneFit f;
  f.num_points = static_cast<int>(points.size());
  if (f.num_points < 3) return f;
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : points) c += p;
  c /= f.num_points;
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : points) {
    const Vec3 d = p - c;
    cov += d * d.transpose();
  }
  cov /= f.num_points;
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  f.centroid = c;
  f.eigenvalues = eig.eigenvalues();
  f.eigenvectors = eig.eigenvectors();
  f.normal = eig.eigenvectors().col(0);
  if (f.normal.dot(c) < 0.0) f.normal = -f.normal;
  return f;
}

namespace {

int octant_of(const Vec3& p, const Vec3& center) {
  return (p.x() >= center.x() ? 1 : 0) | (p.y() >= center.y() ? 2 : 0) |
         (p.z() >= center.z() ? 4 : 0);
}

Vec3 child_center(const Vec3& center, double size, int octant) {
  const double q = size * 0.25;
  return center + Vec3((octant & 1) ? q : -q, (octant & 2) ? q : -q, (octant & 4) ? q : -q);
}

int count_distinct_scans(const std::vector<MapPointRef>& pts) {
  std::vector<std::pair<int, int>> keys;
  keys.reserve(pts.size());
  for (const auto& r : pts) keys.emplace_back(r.lidar, r.scan);
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return static_cast<int>(keys.size());
}

struct FitDecision {
  bool accepted = false;
  PlaneFit fit;
  Vec3 plane_cp = Vec3::Zero();
};

bool passes(const PlaneFit& f, const VoxelMapParams& p) {
  const double lmin = f.eigenvalues[0];
  const double lmid = f.eigenvalues[1];
  if (lmid < 1e-12) return false;  // collapsed to a line or point
  return lmin < p.plane_sigma * p.plane_sigma && lmin / lmid < p.eigen_ratio;
}

/// Plane test with one round of outlier eviction. Mutates `pts` when points
/// are evicted by an accepted fit.
FitDecision try_fit(std::vector<MapPointRef>& pts, const VoxelMapParams& params) {
  FitDecision out;
  if (static_cast<int>(pts.size()) < params.min_points) return out;

  std::vector<Vec3> world(pts.size());
  for (size_t i = 0; i < pts.size(); ++i) world[i] = pts[i].p_world;
  PlaneFit fit = fit_plane(world);
  if (!passes(fit, params)) return out;

  // Evict residual outliers beyond outlier_sigma fitted sigmas and refit once.
  const double sigma = std::max(std::sqrt(std::max(fit.eigenvalues[0], 0.0)), 1e-4);
  const double gate = params.outlier_sigma * sigma;
  std::vector<MapPointRef> kept;
  kept.reserve(pts.size());
  for (const auto& r : pts) {
    if (std::abs(fit.normal.dot(r.p_world - fit.centroid)) <= gate) kept.push_back(r);
  }
  if (kept.size() != pts.size()) {
    if (static_cast<int>(kept.size()) < params.min_points) return out;
    world.resize(kept.size());
    for (size_t i = 0; i < kept.size(); ++i) world[i] = kept[i].p_world;
    fit = fit_plane(world);
    if (!passes(fit, params)) return out;
    pts = std::move(kept);
  }

  const double d = fit.normal.dot(fit.centroid);
  if (d < 1e-6) return out;  // plane passes (numerically) through the origin
  out.accepted = true;
  out.fit = fit;
  out.plane_cp = fit.normal * d;
  return out;
}

void build_voxel(MapVoxel* v, const VoxelMapParams& params, std::vector<const MapVoxel*>* planar) {
  const FitDecision dec = try_fit(v->points, params);
  if (dec.accepted) {
    v->is_plane = true;
    v->fit = dec.fit;
    v->plane_cp = dec.plane_cp;
    v->num_distinct_scans = count_distinct_scans(v->points);
    planar->push_back(v);
    return;
  }
  const double child_size = v->size * 0.5;
  if (child_size < params.min_voxel_size ||
      static_cast<int>(v->points.size()) < params.min_points) {
    v->points.clear();
    v->points.shrink_to_fit();
    return;
  }
  for (const MapPointRef& r : v->points) {
    const int o = octant_of(r.p_world, v->center);
    if (!v->children[o]) {
      auto child = std::make_unique<MapVoxel>();
      child->center = child_center(v->center, v->size, o);
      child->size = child_size;
      child->depth = v->depth + 1;
      v->children[o] = std::move(child);
    }
    v->children[o]->points.push_back(r);
  }
  v->points.clear();
  v->points.shrink_to_fit();
  for (int o = 0; o < 8; ++o) {
    if (v->children[o]) build_voxel(v->children[o].get(), params, planar);
  }
}

}  // namespace

void VoxelPlaneMap::insert(const MapPointRef& ref) {
  if (built_) {
    throw ValidationError("voxel map already built; create a fresh map to re-insert");
  }
  const double inv = 1.0 / params_.root_size;
  const std::array<int, 3> key = {static_cast<int>(std::floor(ref.p_world.x() * inv)),
                                  static_cast<int>(std::floor(ref.p_world.y() * inv)),
                                  static_cast<int>(std::floor(ref.p_world.z() * inv))};
  auto it = roots_.find(key);
  if (it == roots_.end()) {
    auto v = std::make_unique<MapVoxel>();
    v->center = Vec3((key[0] + 0.5) * params_.root_size, (key[1] + 0.5) * params_.root_size,
                     (key[2] + 0.5) * params_.root_size);
    v->size = params_.root_size;
    v->depth = 0;
    it = roots_.emplace(key, std::move(v)).first;
  }
  it->second->points.push_back(ref);
  ++num_points_;
}

void VoxelPlaneMap::build() {
  if (built_) return;
  built_ = true;
  for (auto& [key, root] : roots_) {
    (void)key;
    build_voxel(root.get(), params_, &planar_);
  }
}

const MapVoxel* VoxelPlaneMap::find_voxel(const Vec3& p) const {
  const double inv = 1.0 / params_.root_size;
  const std::array<int, 3> key = {static_cast<int>(std::floor(p.x() * inv)),
                                  static_cast<int>(std::floor(p.y() * inv)),
                                  static_cast<int>(std::floor(p.z() * inv))};
  auto it = roots_.find(key);
  if (it == roots_.end()) return nullptr;
  const MapVoxel* v = it->second.get();
  while (true) {
    const int o = octant_of(p, v->center);
    if (!v->children[o]) return v;
    v = v->children[o].get();
  }
}

namespace {

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

struct CellHash {
  size_t operator()(const CellKey& k) const {
    // FNV-style mix of the three packed coordinates.
    std::uint64_t h = 1469598103934665603ull;
    for (std::int64_t v : {k.x, k.y, k.z}) {
      h ^= static_cast<std::uint64_t>(v);
      h *= 1099511628211ull;
    }
    return static_cast<size_t>(h);
  }
};

CellKey cell_of(const Vec3& p, double inv_leaf) {
  return {static_cast<std::int64_t>(std::floor(p.x() * inv_leaf)),
          static_cast<std::int64_t>(std::floor(p.y() * inv_leaf)),
          static_cast<std::int64_t>(std::floor(p.z() * inv_leaf))};
}

}  // namespace

std::vector<int> extract_planar_points(const std::vector<LidarPoint>& points,
                                       const PlanarExtractionParams& params) {
  // Voxel-grid downsample: first point (scan order) per cell represents it.
  const double inv_leaf = 1.0 / params.downsample_leaf;
  std::unordered_map<CellKey, int, CellHash> first_in_cell;
  std::vector<int> candidates;
  for (int i = 0; i < static_cast<int>(points.size()); ++i) {
    if (first_in_cell.emplace(cell_of(points[i].p, inv_leaf), i).second) {
      candidates.push_back(i);
    }
  }

  // Neighbor grid over the downsampled set, cell size = search radius.
  const double inv_cell = 1.0 / params.search_radius;
  std::unordered_map<CellKey, std::vector<int>, CellHash> grid;
  for (int ci = 0; ci < static_cast<int>(candidates.size()); ++ci) {
    grid[cell_of(points[candidates[ci]].p, inv_cell)].push_back(ci);
  }

  const double r2_max = params.search_radius * params.search_radius;
  std::vector<int> kept;
  std::vector<std::pair<double, int>> neigh;
  for (int ci = 0; ci < static_cast<int>(candidates.size()); ++ci) {
    const Vec3& p = points[candidates[ci]].p;
    const CellKey c = cell_of(p, inv_cell);
    neigh.clear();
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = grid.find(CellKey{c.x + dx, c.y + dy, c.z + dz});
          if (it == grid.end()) continue;
          for (int cj : it->second) {
            const double d2 = (points[candidates[cj]].p - p).squaredNorm();
            if (d2 <= r2_max) neigh.emplace_back(d2, cj);
          }
        }
      }
    }
    if (static_cast<int>(neigh.size()) < params.min_neighbors + 1) continue;
    const int take = std::min<int>(params.num_neighbors + 1, static_cast<int>(neigh.size()));
    std::partial_sort(neigh.begin(), neigh.begin() + take, neigh.end());

    Vec3 mean = Vec3::Zero();
    for (int k = 0; k < take; ++k) mean += points[candidates[neigh[k].second]].p;
    mean /= take;
    Mat3 cov = Mat3::Zero();
    for (int k = 0; k < take; ++k) {
      const Vec3 d = points[candidates[neigh[k].second]].p - mean;
      cov += d * d.transpose();
    }
    cov /= take;
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    const double lmin = eig.eigenvalues()[0];
    const double lmid = eig.eigenvalues()[1];
    if (lmid < 1e-12) continue;
    if (lmin / lmid < params.max_eigen_ratio) kept.push_back(candidates[ci]);
  }
  std::sort(kept.begin(), kept.end());
  return kept;
}

}  // namespace rigcal
