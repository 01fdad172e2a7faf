#include "rigcal/residuals.hpp"

#include <cmath>

namespace rigcal {

namespace {

/// Control-point window a factor is bound to, fixed at construction.
struct SegmentBinding {
  double start_time = 0.0;
  double knot_interval = 0.1;
  int num_segments = 0;
  int first_cp = 0;         // global index of the first bound control point
  int center_segment = 0;   // segment selected from the time-offset hint
  int window = 4;           // 4: fixed segment; 6: re-selectable +-1 segment
};

bool bind_window(const TrajectoryBlockIds& traj, double t_ref_hint, int window,
                 SegmentBinding* out) {
  const int nseg = traj.num_segments();
  if (t_ref_hint < traj.span_begin() || t_ref_hint > traj.span_end()) return false;
  if (window == 6 && nseg < 3) return false;
  const double s = (t_ref_hint - traj.start_time) / traj.knot_interval;
  int center = static_cast<int>(std::floor(s));
  out->start_time = traj.start_time;
  out->knot_interval = traj.knot_interval;
  out->num_segments = nseg;
  out->window = window;
  if (window == 6) {
    center = std::clamp(center, 1, nseg - 2);
    out->first_cp = center - 1;
  } else {
    center = std::clamp(center, 0, nseg - 1);
    out->first_cp = center;
  }
  out->center_segment = center;
  return true;
}

/// Segment selection at evaluation time. Returns false when the (shifted)
/// measurement time leaves the spline span entirely. seg_local indexes the
/// first control point of the active segment inside the bound window.
template <typename T>
bool locate_in_window(const SegmentBinding& b, const T& t_ref, int* seg_local, T* u) {
  const T s = (t_ref - b.start_time) / b.knot_interval;
  const double sv = value_of(s);
  if (!(sv >= 0.0 && sv <= b.num_segments)) return false;
  int i;
  if (b.window == 6) {
    i = std::clamp(static_cast<int>(std::floor(sv)), b.center_segment - 1,
                   b.center_segment + 1);
  } else {
    i = b.center_segment;
  }
  *seg_local = i - b.first_cp;
  *u = s - static_cast<double>(i);
  return true;
}

template <typename T>
Eigen::Quaternion<T> quat_from_params(const T* p) {
  return Eigen::Quaternion<T>(p[3], p[0], p[1], p[2]);  // stored xyzw
}

template <typename T>
Eigen::Matrix<T, 3, 1> vec3_from_params(const T* p) {
  return Eigen::Matrix<T, 3, 1>(p[0], p[1], p[2]);
}

// Blocks: [0..5] rotation CPs, [6..11] position CPs, [12] gyro bias,
// [13] accel bias, [14] gravity, [15] IMU time offset.
struct ImuFunctor {
  SegmentBinding bind;
  double t;
  Vec3 gyro_meas, accel_meas;
  double inv_gyro_sigma, inv_accel_sigma;

  template <typename T>
  bool operator()(const T* const* p, T* r) const {
    const T t_ref = T(t) + p[15][0];
    int sl;
    T u;
    if (!locate_in_window(bind, t_ref, &sl, &u)) return false;
    const double inv_dt = 1.0 / bind.knot_interval;

    Eigen::Quaternion<T> qcp[4];
    Eigen::Matrix<T, 3, 1> pcp[4];
    for (int k = 0; k < 4; ++k) {
      qcp[k] = quat_from_params(p[sl + k]);
      pcp[k] = vec3_from_params(p[6 + sl + k]);
    }
    Eigen::Quaternion<T> q;
    Eigen::Matrix<T, 3, 1> omega, acc;
    eval_rotation_segment<T>(qcp, u, inv_dt, &q, &omega, nullptr);
    eval_position_segment<T>(pcp, u, inv_dt, nullptr, nullptr, &acc);

    const Eigen::Matrix<T, 3, 1> bg = vec3_from_params(p[12]);
    const Eigen::Matrix<T, 3, 1> ba = vec3_from_params(p[13]);
    const Eigen::Matrix<T, 3, 1> g = vec3_from_params(p[14]);

    const Eigen::Matrix<T, 3, 1> r_gyro = omega + bg - vec_cast<T>(gyro_meas);
    const Eigen::Matrix<T, 3, 1> f_body =
        quat_rotate(Eigen::Quaternion<T>(q.conjugate()), (acc - g).eval());
    const Eigen::Matrix<T, 3, 1> r_accel = f_body + ba - vec_cast<T>(accel_meas);
    for (int k = 0; k < 3; ++k) {
      r[k] = r_gyro[k] * inv_gyro_sigma;
      r[3 + k] = r_accel[k] * inv_accel_sigma;
    }
    return true;
  }
};

// Blocks: [0..3] rotation CPs, [4..7] position CPs, [8] extrinsic rotation,
// [9] extrinsic translation, [10] time offset, [11] plane landmark.
struct LidarPlaneFunctor {
  SegmentBinding bind;
  double t;
  Vec3 p_lidar;
  double inv_sigma;

  template <typename T>
  bool operator()(const T* const* p, T* r) const {
    const T t_ref = T(t) + p[10][0];
    int sl;
    T u;
    if (!locate_in_window(bind, t_ref, &sl, &u)) return false;
    const double inv_dt = 1.0 / bind.knot_interval;

    Eigen::Quaternion<T> qcp[4];
    Eigen::Matrix<T, 3, 1> pcp[4];
    for (int k = 0; k < 4; ++k) {
      qcp[k] = quat_from_params(p[sl + k]);
      pcp[k] = vec3_from_params(p[4 + sl + k]);
    }
    Eigen::Quaternion<T> q;
    Eigen::Matrix<T, 3, 1> pos;
    eval_rotation_segment<T>(qcp, u, inv_dt, &q, nullptr, nullptr);
    eval_position_segment<T>(pcp, u, inv_dt, &pos, nullptr, nullptr);

    const Eigen::Quaternion<T> q_e = quat_from_params(p[8]);
    const Eigen::Matrix<T, 3, 1> t_e = vec3_from_params(p[9]);
    const Eigen::Matrix<T, 3, 1> p_imu = quat_rotate(q_e, vec_cast<T>(p_lidar)) + t_e;
    const Eigen::Matrix<T, 3, 1> p_w = quat_rotate(q, p_imu) + pos;

    const Eigen::Matrix<T, 3, 1> plane = vec3_from_params(p[11]);
    const T d2 = plane.squaredNorm();
    if (value_of(d2) < 1e-12) return false;  // closest point degenerated to the origin
    using std::sqrt;
    const T d = sqrt(d2);
    r[0] = (plane.dot(p_w) / d - d) * inv_sigma;
    return true;
  }
};

// Blocks: [0..5] rotation CPs, [6..11] position CPs, [12] extrinsic rotation,
// [13] extrinsic translation, [14] time offset, [15] landmark, [16] intrinsics.
struct CameraFunctor {
  SegmentBinding bind;
  CameraModelType model;
  double max_theta;
  double t_frame;
  Vec2 uv_meas;
  double inv_sigma;

  template <typename T>
  bool project(const T* const* p, const Eigen::Matrix<T, 3, 1>& landmark, T* r) const {
    const T t_ref = T(t_frame) + p[14][0];
    int sl;
    T u;
    if (!locate_in_window(bind, t_ref, &sl, &u)) return false;
    const double inv_dt = 1.0 / bind.knot_interval;

    Eigen::Quaternion<T> qcp[4];
    Eigen::Matrix<T, 3, 1> pcp[4];
    for (int k = 0; k < 4; ++k) {
      qcp[k] = quat_from_params(p[sl + k]);
      pcp[k] = vec3_from_params(p[6 + sl + k]);
    }
    Eigen::Quaternion<T> q;
    Eigen::Matrix<T, 3, 1> pos;
    eval_rotation_segment<T>(qcp, u, inv_dt, &q, nullptr, nullptr);
    eval_position_segment<T>(pcp, u, inv_dt, &pos, nullptr, nullptr);

    const Eigen::Quaternion<T> q_e = quat_from_params(p[12]);
    const Eigen::Matrix<T, 3, 1> t_e = vec3_from_params(p[13]);
    const Eigen::Matrix<T, 3, 1> p_imu =
        quat_rotate(Eigen::Quaternion<T>(q.conjugate()), (landmark - pos).eval());
    const Eigen::Matrix<T, 3, 1> p_cam =
        quat_rotate(Eigen::Quaternion<T>(q_e.conjugate()), (p_imu - t_e).eval());

    Eigen::Matrix<T, 8, 1> intr;
    for (int k = 0; k < 8; ++k) intr[k] = p[16 - offset_for_intrinsics][k];
    Eigen::Matrix<T, 2, 1> uv;
    if (!project_point<T>(model, intr, max_theta, p_cam, &uv)) return false;
    r[0] = (uv[0] - uv_meas[0]) * inv_sigma;
    r[1] = (uv[1] - uv_meas[1]) * inv_sigma;
    return true;
  }

  int offset_for_intrinsics = 0;  // 0 with landmark block, 1 without

  template <typename T>
  bool operator()(const T* const* p, T* r) const {
    return project(p, vec3_from_params(p[15]), r);
  }
};

// As CameraFunctor but against a constant map point; intrinsics sit at [15].
struct LidarCameraFunctor {
  CameraFunctor cam;
  Vec3 map_point;

  template <typename T>
  bool operator()(const T* const* p, T* r) const {
    return cam.project(p, vec_cast<T>(map_point), r);
  }
};

// Blocks: [0] rotation imu<-lidar, [1] lever arm (IMU origin in the lidar
// frame), [2] gravity in the odometry frame.
struct InitImuFunctor {
  InitImuSampleData d;
  double inv_gyro_sigma, inv_accel_sigma;

  template <typename T>
  bool operator()(const T* const* p, T* r) const {
    const Eigen::Quaternion<T> q_il = quat_from_params(p[0]);
    const Eigen::Matrix<T, 3, 1> lever = vec3_from_params(p[1]);
    const Eigen::Matrix<T, 3, 1> g = vec3_from_params(p[2]);
    const Eigen::Quaternion<T> q_ml = quat_cast<T>(d.q_ml);

    const Eigen::Matrix<T, 3, 1> r_gyro =
        quat_rotate(q_il, vec_cast<T>(d.omega_body)) - vec_cast<T>(d.gyro_meas);

    const Eigen::Matrix<T, 3, 1> lever_w = quat_rotate(q_ml, lever);
    const Eigen::Matrix<T, 3, 1> omega_w = quat_rotate(q_ml, vec_cast<T>(d.omega_body));
    const Eigen::Matrix<T, 3, 1> alpha_w = quat_rotate(q_ml, vec_cast<T>(d.alpha_body));
    const Eigen::Matrix<T, 3, 1> a_imu_w =
        vec_cast<T>(d.accel_world) + alpha_w.cross(lever_w) + omega_w.cross(omega_w.cross(lever_w));
    const Eigen::Matrix<T, 3, 1> f_lidar =
        quat_rotate(Eigen::Quaternion<T>(q_ml.conjugate()), (a_imu_w - g).eval());
    const Eigen::Matrix<T, 3, 1> r_accel =
        quat_rotate(q_il, f_lidar) - vec_cast<T>(d.accel_meas);

    for (int k = 0; k < 3; ++k) {
      r[k] = r_gyro[k] * inv_gyro_sigma;
      r[3 + k] = r_accel[k] * inv_accel_sigma;
    }
    return true;
  }
};

}  // namespace

TrajectoryBlockIds add_trajectory_blocks(Problem& problem, const Trajectory& traj,
                                         const std::string& name_prefix) {
  TrajectoryBlockIds ids;
  const KnotGrid& grid = traj.grid();
  ids.start_time = grid.start_time();
  ids.knot_interval = grid.knot_interval();
  for (int i = 0; i < grid.num_control_points(); ++i) {
    ids.rot_cp.push_back(problem.add_rotation_block(traj.rotation.control_point(i),
                                                    name_prefix + "_rot_" + std::to_string(i)));
    ids.pos_cp.push_back(problem.add_euclidean_block(traj.position.control_point(i),
                                                     name_prefix + "_pos_" + std::to_string(i)));
  }
  return ids;
}

void read_trajectory_blocks(const Problem& problem, const TrajectoryBlockIds& ids,
                            Trajectory* traj) {
  for (int i = 0; i < ids.num_control_points(); ++i) {
    traj->rotation.control_point(i) = problem.block(ids.rot_cp[i]).as_rotation();
    traj->position.control_point(i) = problem.block(ids.pos_cp[i]).value;
  }
}

std::unique_ptr<Factor> make_imu_factor(const TrajectoryBlockIds& traj, int bias_gyro_id,
                                        int bias_accel_id, int gravity_id, int time_offset_id,
                                        const ImuSample& sample, double gyro_sigma,
                                        double accel_sigma, double time_offset_hint) {
  ImuFunctor f;
  if (!bind_window(traj, sample.t + time_offset_hint, 6, &f.bind)) return nullptr;
  f.t = sample.t;
  f.gyro_meas = sample.gyro;
  f.accel_meas = sample.accel;
  f.inv_gyro_sigma = 1.0 / gyro_sigma;
  f.inv_accel_sigma = 1.0 / accel_sigma;

  std::vector<int> blocks;
  for (int k = 0; k < 6; ++k) blocks.push_back(traj.rot_cp[f.bind.first_cp + k]);
  for (int k = 0; k < 6; ++k) blocks.push_back(traj.pos_cp[f.bind.first_cp + k]);
  blocks.push_back(bias_gyro_id);
  blocks.push_back(bias_accel_id);
  blocks.push_back(gravity_id);
  blocks.push_back(time_offset_id);
  return std::make_unique<AutoDiffFactor<45, ImuFunctor>>("imu", std::move(blocks), 6,
                                                          Loss::none(), std::move(f));
}

std::unique_ptr<Factor> make_lidar_plane_factor(const TrajectoryBlockIds& traj, int extr_rot_id,
                                                int extr_pos_id, int time_offset_id, int plane_id,
                                                const LidarPoint& point, double plane_sigma,
                                                Loss loss, double time_offset_hint) {
  LidarPlaneFunctor f;
  if (!bind_window(traj, point.t + time_offset_hint, 4, &f.bind)) return nullptr;
  f.t = point.t;
  f.p_lidar = point.p;
  f.inv_sigma = 1.0 / plane_sigma;

  std::vector<int> blocks;
  for (int k = 0; k < 4; ++k) blocks.push_back(traj.rot_cp[f.bind.first_cp + k]);
  for (int k = 0; k < 4; ++k) blocks.push_back(traj.pos_cp[f.bind.first_cp + k]);
  blocks.push_back(extr_rot_id);
  blocks.push_back(extr_pos_id);
  blocks.push_back(time_offset_id);
  blocks.push_back(plane_id);
  return std::make_unique<AutoDiffFactor<34, LidarPlaneFunctor>>("lidar_plane", std::move(blocks),
                                                                 1, loss, std::move(f));
}

std::unique_ptr<Factor> make_camera_factor(const TrajectoryBlockIds& traj, int extr_rot_id,
                                           int extr_pos_id, int time_offset_id, int landmark_id,
                                           int intrinsics_id, CameraModelType model,
                                           double max_theta, double t_frame, const Vec2& uv,
                                           double pixel_sigma, Loss loss,
                                           double time_offset_hint) {
  CameraFunctor f;
  if (!bind_window(traj, t_frame + time_offset_hint, 6, &f.bind)) return nullptr;
  f.model = model;
  f.max_theta = max_theta;
  f.t_frame = t_frame;
  f.uv_meas = uv;
  f.inv_sigma = 1.0 / pixel_sigma;
  f.offset_for_intrinsics = 0;

  std::vector<int> blocks;
  for (int k = 0; k < 6; ++k) blocks.push_back(traj.rot_cp[f.bind.first_cp + k]);
  for (int k = 0; k < 6; ++k) blocks.push_back(traj.pos_cp[f.bind.first_cp + k]);
  blocks.push_back(extr_rot_id);
  blocks.push_back(extr_pos_id);
  blocks.push_back(time_offset_id);
  blocks.push_back(landmark_id);
  blocks.push_back(intrinsics_id);
  return std::make_unique<AutoDiffFactor<54, CameraFunctor>>("camera", std::move(blocks), 2, loss,
                                                             std::move(f));
}

std::unique_ptr<Factor> make_lidar_camera_factor(const TrajectoryBlockIds& traj, int extr_rot_id,
                                                 int extr_pos_id, int time_offset_id,
                                                 int intrinsics_id, CameraModelType model,
                                                 double max_theta, double t_frame, const Vec2& uv,
                                                 const Vec3& map_point, double pixel_sigma,
                                                 Loss loss, double time_offset_hint) {
  LidarCameraFunctor f;
  if (!bind_window(traj, t_frame + time_offset_hint, 6, &f.cam.bind)) return nullptr;
  f.cam.model = model;
  f.cam.max_theta = max_theta;
  f.cam.t_frame = t_frame;
  f.cam.uv_meas = uv;
  f.cam.inv_sigma = 1.0 / pixel_sigma;
  f.cam.offset_for_intrinsics = 1;
  f.map_point = map_point;

  std::vector<int> blocks;
  for (int k = 0; k < 6; ++k) blocks.push_back(traj.rot_cp[f.cam.bind.first_cp + k]);
  for (int k = 0; k < 6; ++k) blocks.push_back(traj.pos_cp[f.cam.bind.first_cp + k]);
  blocks.push_back(extr_rot_id);
  blocks.push_back(extr_pos_id);
  blocks.push_back(time_offset_id);
  blocks.push_back(intrinsics_id);
  return std::make_unique<AutoDiffFactor<51, LidarCameraFunctor>>(
      "lidar_camera", std::move(blocks), 2, loss, std::move(f));
}

std::unique_ptr<Factor> make_init_imu_factor(int rot_imu_lidar_id, int lever_id, int gravity_id,
                                             const InitImuSampleData& data, double gyro_sigma,
                                             double accel_sigma) {
  InitImuFunctor f;
  f.d = data;
  f.inv_gyro_sigma = 1.0 / gyro_sigma;
  f.inv_accel_sigma = 1.0 / accel_sigma;
  return std::make_unique<AutoDiffFactor<8, InitImuFunctor>>(
      "imu_init", std::vector<int>{rot_imu_lidar_id, lever_id, gravity_id}, 6, Loss::none(),
      std::move(f));
}

}  // namespace rigcal
