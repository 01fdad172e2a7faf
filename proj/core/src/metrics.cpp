#include "rigcal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>

#include "rigcal/geometry.hpp"

namespace rigcal {
namespace {

// ---------------------------------------------------------------------------
// Shared integer-cell hashing for neighborhood / patch lookups.

struct CellKey {
  std::int64_t x = 0, y = 0, z = 0;
  bool operator==(const CellKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

struct CellKeyHash {
  std::size_t operator()(const CellKey& k) const {
    std::uint64_t h = 1469598103934665603ull;
    for (std::uint64_t v : {static_cast<std::uint64_t>(k.x), static_cast<std::uint64_t>(k.y),
                            static_cast<std::uint64_t>(k.z)}) {
      h ^= v;
      h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
  }
};

CellKey cell_of(const Vec3& p, double cell) {
  return CellKey{static_cast<std::int64_t>(std::floor(p.x() / cell)),
                 static_cast<std::int64_t>(std::floor(p.y() / cell)),
                 static_cast<std::int64_t>(std::floor(p.z() / cell))};
}

using CellIndex = std::unordered_map<CellKey, std::vector<int>, CellKeyHash>;

CellIndex build_cell_index(const std::vector<Vec3>& cloud, double cell) {
  CellIndex index;
  index.reserve(cloud.size());
  for (int i = 0; i < static_cast<int>(cloud.size()); ++i) {
    index[cell_of(cloud[i], cell)].push_back(i);
  }
  return index;
}

// ---------------------------------------------------------------------------
// Undistortion to ideal pinhole pixels (shared by the image metrics).

bool ideal_pixel(const CameraIntrinsics& K, const Vec2& uv, Vec2* out) {
  Vec3 ray;
  if (!unproject_pixel(K, uv, &ray)) return false;
  if (ray.z() <= 1e-9) return false;  // behind the ideal pinhole image plane
  (*out) = Vec2(K.fx * ray.x() / ray.z() + K.cx, K.fy * ray.y() / ray.z() + K.cy);
  return true;
}

Eigen::Matrix3d pinhole_matrix(const CameraIntrinsics& K) {
  Eigen::Matrix3d m = Eigen::Matrix3d::Identity();
  m(0, 0) = K.fx;
  m(1, 1) = K.fy;
  m(0, 2) = K.cx;
  m(1, 2) = K.cy;
  return m;
}

double point_line_distance(const Vec2& p, const Vec3& line) {
  const double n = std::hypot(line.x(), line.y());
  if (n < 1e-300) return 0.0;
  return std::abs(line.x() * p.x() + line.y() * p.y() + line.z()) / n;
}

}  // namespace

void MetricConfig::validate() const {
  if (!(mme_radius > 0.0) || !(thickness_patch > 0.0) || !(epipolar_tolerance > 0.0) ||
      !(line_inlier_threshold > 0.0)) {
    throw ValidationError("metric configuration values must all be positive");
  }
}

// ---------------------------------------------------------------------------
// Mean map entropy

MmeResult mean_map_entropy(const std::vector<Vec3>& cloud, double radius, int min_neighbors) {
  if (radius <= 0.0) throw ValidationError("mean_map_entropy: radius must be positive");
  if (cloud.size() < 100) {
    throw ValidationError("mean_map_entropy: need at least 100 points, got " +
                          std::to_string(cloud.size()));
  }

  const CellIndex index = build_cell_index(cloud, radius);
  const double r2 = radius * radius;

  MmeResult result;
  double sum = 0.0;
  std::vector<int> neighborhood;
  for (int i = 0; i < static_cast<int>(cloud.size()); ++i) {
    const Vec3& p = cloud[i];
    neighborhood.clear();
    const CellKey c = cell_of(p, radius);
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          const auto it = index.find(CellKey{c.x + dx, c.y + dy, c.z + dz});
          if (it == index.end()) continue;
          for (int j : it->second) {
            if ((cloud[j] - p).squaredNorm() <= r2) neighborhood.push_back(j);
          }
        }
      }
    }
    // the query point itself is always in its own cell
    if (static_cast<int>(neighborhood.size()) - 1 < min_neighbors) {
      ++result.skipped_points;
      continue;
    }

    Vec3 mean = Vec3::Zero();
    for (int j : neighborhood) mean += cloud[j];
    mean /= static_cast<double>(neighborhood.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (int j : neighborhood) {
      const Vec3 d = cloud[j] - mean;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(neighborhood.size());
    cov += 1e-12 * Eigen::Matrix3d::Identity();

    sum += 0.5 * std::log((2.0 * M_PI * M_E * cov).determinant());
    ++result.used_points;
  }

  if (result.used_points == 0) {
    throw ValidationError("mean_map_entropy: no point has enough neighbors within the radius");
  }
  result.entropy = sum / result.used_points;
  return result;
}

// ---------------------------------------------------------------------------
// Cross-sensor cloud thickness

namespace {

// Canonical data-derived frame: centroid plus principal axes of the merged
// cloud, eigenvector signs fixed by the (rigid-invariant) third moment, so
// patch tiling does not depend on the world frame the clouds arrive in.
struct CanonicalFrame {
  Vec3 origin = Vec3::Zero();
  Eigen::Matrix3d axes = Eigen::Matrix3d::Identity();  // rows are the axes

  Vec3 to_local(const Vec3& p) const { return axes * (p - origin); }
};

CanonicalFrame canonical_frame(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  const double n = static_cast<double>(a.size() + b.size());
  CanonicalFrame frame;
  for (const Vec3& p : a) frame.origin += p;
  for (const Vec3& p : b) frame.origin += p;
  frame.origin /= n;

  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const Vec3& p : a) cov += (p - frame.origin) * (p - frame.origin).transpose();
  for (const Vec3& p : b) cov += (p - frame.origin) * (p - frame.origin).transpose();
  cov /= n;

  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);  // ascending
  Vec3 e1 = es.eigenvectors().col(2);
  Vec3 e2 = es.eigenvectors().col(1);
  const auto third_moment = [&](const Vec3& axis) {
    double m = 0.0;
    for (const Vec3& p : a) m += std::pow(axis.dot(p - frame.origin), 3);
    for (const Vec3& p : b) m += std::pow(axis.dot(p - frame.origin), 3);
    return m;
  };
  if (third_moment(e1) < 0.0) e1 = -e1;
  if (third_moment(e2) < 0.0) e2 = -e2;
  frame.axes.row(0) = e1;
  frame.axes.row(1) = e2;
  frame.axes.row(2) = e1.cross(e2);
  return frame;
}

struct Patch {
  std::vector<Vec3> points;  // local-frame coordinates
  int count_a = 0;
  int count_b = 0;
};

}  // namespace

double thickness_cm(const std::vector<Vec3>& cloud_a, const std::vector<Vec3>& cloud_b,
                    double patch_size) {
  if (patch_size <= 0.0) throw ValidationError("thickness_cm: patch size must be positive");
  if (cloud_a.empty() || cloud_b.empty()) {
    throw ValidationError("thickness_cm: both clouds must be non-empty");
  }

  const CanonicalFrame frame = canonical_frame(cloud_a, cloud_b);

  Vec3 corner = Vec3::Constant(std::numeric_limits<double>::infinity());
  std::vector<Vec3> local_a(cloud_a.size()), local_b(cloud_b.size());
  for (std::size_t i = 0; i < cloud_a.size(); ++i) {
    local_a[i] = frame.to_local(cloud_a[i]);
    corner = corner.cwiseMin(local_a[i]);
  }
  for (std::size_t i = 0; i < cloud_b.size(); ++i) {
    local_b[i] = frame.to_local(cloud_b[i]);
    corner = corner.cwiseMin(local_b[i]);
  }

  std::unordered_map<CellKey, Patch, CellKeyHash> patches;
  for (const Vec3& p : local_a) {
    Patch& patch = patches[cell_of(p - corner, patch_size)];
    patch.points.push_back(p);
    ++patch.count_a;
  }
  for (const Vec3& p : local_b) {
    Patch& patch = patches[cell_of(p - corner, patch_size)];
    patch.points.push_back(p);
    ++patch.count_b;
  }

  double sum_cm = 0.0;
  int used = 0;
  for (const auto& [key, patch] : patches) {
    (void)key;
    if (patch.count_a < 3 || patch.count_b < 3 || patch.points.size() < 10) continue;

    Vec3 mean = Vec3::Zero();
    for (const Vec3& p : patch.points) mean += p;
    mean /= static_cast<double>(patch.points.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    for (const Vec3& p : patch.points) cov += (p - mean) * (p - mean).transpose();
    cov /= static_cast<double>(patch.points.size());

    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(cov);  // ascending
    const double lambda_min = std::max(es.eigenvalues()[0], 0.0);
    const double lambda_mid = es.eigenvalues()[1];
    // need genuine in-plane extent and a dominant plane (corners excluded)
    if (lambda_mid < 1e-4 * patch_size * patch_size) continue;
    if (lambda_min > 0.04 * lambda_mid) continue;
    const Vec3 normal = es.eigenvectors().col(0);

    double sq = 0.0;
    for (const Vec3& p : patch.points) {
      const double d = normal.dot(p - mean);
      sq += d * d;
    }
    sum_cm += 2.0 * std::sqrt(sq / static_cast<double>(patch.points.size())) * 100.0;
    ++used;
  }

  if (used == 0) {
    throw ValidationError(
        "thickness_cm: the clouds share no planar patch with points from both sensors");
  }
  return sum_cm / used;
}

// ---------------------------------------------------------------------------
// Epipolar consistency

double epipolar_error_px(const std::vector<PixelMatch>& matches, const CameraIntrinsics& intr1,
                         const CameraIntrinsics& intr2, const RigidTransform& T_c1_c2) {
  if (matches.size() < 8) {
    throw ValidationError("epipolar_error_px: need at least 8 matches, got " +
                          std::to_string(matches.size()));
  }
  if (T_c1_c2.translation.norm() < 1e-9) {
    throw ValidationError(
        "epipolar_error_px: zero baseline between the cameras, epipolar geometry undefined");
  }

  // Points seen in camera 1 map into camera 2 via x2 = R*x1 + t with
  // (R, t) = inverse of the camera-2-in-camera-1 pose.
  const RigidTransform T_c2_c1 = T_c1_c2.inverse();
  const Eigen::Matrix3d essential =
      skew(T_c2_c1.translation.normalized()) * T_c2_c1.rotation.matrix();
  const Eigen::Matrix3d K1_inv = pinhole_matrix(intr1).inverse();
  const Eigen::Matrix3d K2_inv = pinhole_matrix(intr2).inverse();
  const Eigen::Matrix3d F = K2_inv.transpose() * essential * K1_inv;

  double sum = 0.0;
  int used = 0;
  for (const PixelMatch& m : matches) {
    Vec2 p1, p2;
    if (!ideal_pixel(intr1, m.uv1, &p1) || !ideal_pixel(intr2, m.uv2, &p2)) continue;
    const Vec3 x1(p1.x(), p1.y(), 1.0);
    const Vec3 x2(p2.x(), p2.y(), 1.0);
    const double d12 = point_line_distance(p2, F * x1);
    const double d21 = point_line_distance(p1, F.transpose() * x2);
    sum += 0.5 * (d12 + d21);
    ++used;
  }
  if (used == 0) {
    throw ValidationError("epipolar_error_px: no match survives undistortion");
  }
  return sum / used;
}

// ---------------------------------------------------------------------------
// Line straightness

LineStraightness line_straightness_px(const std::vector<std::vector<Vec2>>& line_point_sets,
                                      const CameraIntrinsics& intr) {
  LineStraightness out;
  double sq_sum = 0.0;
  for (std::size_t s = 0; s < line_point_sets.size(); ++s) {
    std::vector<Vec2> pts;
    pts.reserve(line_point_sets[s].size());
    for (const Vec2& uv : line_point_sets[s]) {
      Vec2 ideal;
      if (ideal_pixel(intr, uv, &ideal)) pts.push_back(ideal);
    }
    if (pts.size() < 10) {
      throw ValidationError("line_straightness_px: line set " + std::to_string(s) +
                            " has fewer than 10 usable points");
    }

    Vec2 mean = Vec2::Zero();
    for (const Vec2& p : pts) mean += p;
    mean /= static_cast<double>(pts.size());
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (const Vec2& p : pts) cov += (p - mean) * (p - mean).transpose();
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);  // ascending
    const Vec2 normal = es.eigenvectors().col(0);  // total least squares

    for (const Vec2& p : pts) {
      const double d = std::abs(normal.dot(p - mean));
      sq_sum += d * d;
      out.max_px = std::max(out.max_px, d);
      ++out.num_points;
    }
    ++out.num_lines;
  }

  if (out.num_points > 0) out.rms_px = std::sqrt(sq_sum / out.num_points);
  return out;
}

}  // namespace rigcal
