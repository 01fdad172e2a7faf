#pragma once

// Factor definitions tying the spline trajectory, extrinsics, clocks, biases,
// gravity and landmarks to raw measurements. All factors whiten by the
// measurement sigma internally and compute Jacobians by forward-mode autodiff
// through the block retractions.
//
// Time handling: a factor is bound to a window of control points chosen from
// the time-offset initial guess at construction. While the offset moves during
// optimization, the active segment is re-selected inside the bound window
// (clamped to +-1 segment around the bind segment, with the basis polynomials
// extrapolating smoothly for local coordinates outside [0, 1)). Factors whose
// measurement time leaves the spline span altogether report themselves as
// dropped.

#include "rigcal/sensor_models.hpp"
#include "rigcal/solver.hpp"
#include "rigcal/spline.hpp"

#include <memory>
#include <vector>

namespace rigcal {

/// Problem block ids of a trajectory's control points, one rotation and one
/// position block per control point, plus the shared knot layout.
struct TrajectoryBlockIds {
  std::vector<int> rot_cp;
  std::vector<int> pos_cp;
  double start_time = 0.0;
  double knot_interval = 0.1;

  int num_control_points() const { return static_cast<int>(rot_cp.size()); }
  int num_segments() const { return num_control_points() - 3; }
  double span_begin() const { return start_time; }
  double span_end() const { return start_time + num_segments() * knot_interval; }
};

/// Registers every control point of a trajectory as problem blocks.
TrajectoryBlockIds add_trajectory_blocks(Problem& problem, const Trajectory& traj,
                                         const std::string& name_prefix = "cp");

/// Writes optimized control-point blocks back into a trajectory.
void read_trajectory_blocks(const Problem& problem, const TrajectoryBlockIds& ids,
                            Trajectory* traj);

/// IMU factor: 6-d residual on angular rate and specific force at one sample.
/// Blocks: 6 rotation CPs, 6 position CPs, gyro bias, accel bias, gravity,
/// IMU time offset. Returns nullptr when the sample cannot be bound inside the
/// trajectory span.
std::unique_ptr<Factor> make_imu_factor(const TrajectoryBlockIds& traj, int bias_gyro_id,
                                        int bias_accel_id, int gravity_id, int time_offset_id,
                                        const ImuSample& sample, double gyro_sigma,
                                        double accel_sigma, double time_offset_hint);

/// Point-to-plane factor: 1-d residual n . p_world - d against a closest-point
/// plane landmark block. Blocks: 4 rotation CPs, 4 position CPs, extrinsic
/// rotation, extrinsic translation, LiDAR time offset, plane landmark.
std::unique_ptr<Factor> make_lidar_plane_factor(const TrajectoryBlockIds& traj,
                                                int extr_rot_id, int extr_pos_id,
                                                int time_offset_id, int plane_id,
                                                const LidarPoint& point, double plane_sigma,
                                                Loss loss, double time_offset_hint);

/// Visual reprojection factor against a free landmark. Blocks: 6 rotation CPs,
/// 6 position CPs, extrinsic rotation, extrinsic translation, camera time
/// offset, landmark, intrinsics vector (8).
std::unique_ptr<Factor> make_camera_factor(const TrajectoryBlockIds& traj, int extr_rot_id,
                                           int extr_pos_id, int time_offset_id, int landmark_id,
                                           int intrinsics_id, CameraModelType model,
                                           double max_theta, double t_frame, const Vec2& uv,
                                           double pixel_sigma, Loss loss,
                                           double time_offset_hint);

/// Reprojection factor against a fixed LiDAR map point (cross-modal tie-in).
/// Blocks as the camera factor minus the landmark.
std::unique_ptr<Factor> make_lidar_camera_factor(const TrajectoryBlockIds& traj, int extr_rot_id,
                                                 int extr_pos_id, int time_offset_id,
                                                 int intrinsics_id, CameraModelType model,
                                                 double max_theta, double t_frame, const Vec2& uv,
                                                 const Vec3& map_point, double pixel_sigma,
                                                 Loss loss, double time_offset_hint);

/// Kinematic quantities of the (fixed) LiDAR-frame trajectory entering the
/// IMU-LiDAR initialization residual, precomputed per IMU sample.
struct InitImuSampleData {
  Eigen::Quaterniond q_ml = Eigen::Quaterniond::Identity();  // odometry frame <- lidar body
  Vec3 omega_body = Vec3::Zero();      // lidar body angular velocity
  Vec3 alpha_body = Vec3::Zero();      // lidar body angular acceleration
  Vec3 accel_world = Vec3::Zero();     // lidar origin acceleration, odometry frame
  Vec3 gyro_meas = Vec3::Zero();
  Vec3 accel_meas = Vec3::Zero();
};

/// Initialization factor solving rotation R_imu_lidar, the IMU position in the
/// LiDAR frame (lever arm), and gravity in the odometry frame, on top of a
/// fixed LiDAR spline. Blocks: rotation (imu<-lidar), lever arm, gravity.
std::unique_ptr<Factor> make_init_imu_factor(int rot_imu_lidar_id, int lever_id, int gravity_id,
                                             const InitImuSampleData& data, double gyro_sigma,
                                             double accel_sigma);

}  // namespace rigcal
