#pragma once

/// Map- and image-quality metrics used to evaluate a calibration without
/// ground truth: local-covariance map entropy, cross-sensor cloud thickness,
/// epipolar consistency, and post-undistortion line straightness.

#include <vector>

#include "rigcal/sensor_models.hpp"
#include "rigcal/types.hpp"

namespace rigcal {

/// Tunables shared by the metric implementations.
struct MetricConfig {
  double mme_radius = 0.3;             // m, neighborhood for local covariances
  double thickness_patch = 0.5;        // m, patch edge for local plane fits
  double epipolar_tolerance = 2.0;     // px, match gating used by callers
  double line_inlier_threshold = 1.0;  // px, line-point gating used by callers

  void validate() const;  // ValidationError unless all positive
};

struct MmeResult {
  double entropy = 0.0;  // nats, mean over qualifying points
  int used_points = 0;
  int skipped_points = 0;  // points with too few neighbors within the radius
};

/// Mean map entropy: for every point with at least `min_neighbors` other
/// points within `radius`, the differential entropy of the local Gaussian
/// h = 0.5 * ln det(2*pi*e * (Sigma + 1e-12 I)) is averaged. Sharper (thinner,
/// more self-consistent) maps score lower.
///
/// Throws ValidationError for clouds under 100 points or when no point
/// qualifies.
MmeResult mean_map_entropy(const std::vector<Vec3>& cloud, double radius = 0.3,
                           int min_neighbors = 10);

/// Cross-sensor cloud thickness in centimeters. The merged cloud is tiled
/// into cubic patches of edge `patch_size` in a canonical data-derived frame
/// (so the value does not depend on the world frame); every patch seen by
/// both clouds and planar enough to support a plane fit contributes
/// 2 x RMS point-to-plane distance, and the patch mean is returned.
///
/// Throws ValidationError when the clouds share no usable patch.
double thickness_cm(const std::vector<Vec3>& cloud_a, const std::vector<Vec3>& cloud_b,
                    double patch_size = 0.5);

/// One feature match between two camera images, distorted pixel coordinates.
struct PixelMatch {
  Vec2 uv1 = Vec2::Zero();
  Vec2 uv2 = Vec2::Zero();
};

/// Mean symmetric epipolar distance in pixels. Matches are undistorted to
/// ideal pinhole pixels through each camera's model, then measured against
/// the fundamental matrix implied by `T_c1_c2`, the pose of camera 2
/// expressed in camera 1. The result is invariant to the scale of the
/// baseline.
///
/// Throws ValidationError for fewer than 8 matches, a (near-)zero baseline
/// (epipolar geometry undefined), or when no match survives undistortion.
double epipolar_error_px(const std::vector<PixelMatch>& matches, const CameraIntrinsics& intr1,
                         const CameraIntrinsics& intr2, const RigidTransform& T_c1_c2);

struct LineStraightness {
  double rms_px = 0.0;
  double max_px = 0.0;
  int num_lines = 0;
  int num_points = 0;
};

/// Distortion quality through line straightness: each input set contains
/// distorted pixels observed along one physical straight line. Points are
/// undistorted to ideal pinhole pixels with `intr`, a total-least-squares
/// line is fit per set, and point-to-line distances are aggregated across
/// all sets. Perfect intrinsics map lines back to lines (RMS ~ 0).
///
/// Throws ValidationError when a set has fewer than 10 usable points.
LineStraightness line_straightness_px(const std::vector<std::vector<Vec2>>& line_point_sets,
                                      const CameraIntrinsics& intr);

}  // namespace rigcal
