#include "rigcal/io.hpp"

#include <json.hpp>
#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string_view>
#include <unordered_map>

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace rigcal {
namespace {

// ---------------------------------------------------------------------------
// Formatting / parsing primitives. %.17g round-trips IEEE doubles exactly.

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

[[noreturn]] void fail_at(const std::string& path, std::size_t line, const std::string& msg) {
  throw ValidationError(path + ":" + std::to_string(line) + ": " + msg);
}

[[noreturn]] void fail_file(const std::string& path, const std::string& msg) {
  throw ValidationError(path + ": " + msg);
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t begin = 0;
  while (begin <= line.size()) {
    const std::size_t end = line.find(sep, begin);
    if (end == std::string_view::npos) {
      out.push_back(trim(line.substr(begin)));
      break;
    }
    out.push_back(trim(line.substr(begin, end - begin)));
    begin = end + 1;
  }
  return out;
}

// Whitespace-separated tokens (any run of spaces/tabs).
std::vector<std::string_view> tokenize(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

double parse_double(std::string_view tok, const std::string& path, std::size_t line) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    fail_at(path, line, "expected a number, got '" + std::string(tok) + "'");
  }
  return v;
}

long parse_int(std::string_view tok, const std::string& path, std::size_t line) {
  long v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size()) {
    fail_at(path, line, "expected an integer, got '" + std::string(tok) + "'");
  }
  return v;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) fail_file(path, "cannot open for writing");
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_file(path, "cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Iterates the lines of a text file, skipping blanks and '#' comments.
template <typename Fn>
void for_data_lines(const std::string& path, Fn&& fn) {
  const std::string text = read_text_file(path);
  std::size_t line_no = 0;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    const std::size_t end = text.find('\n', begin);
    const std::string_view raw(text.data() + begin,
                               (end == std::string::npos ? text.size() : end) - begin);
    ++line_no;
    begin = (end == std::string::npos) ? text.size() + 1 : end + 1;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;
    fn(line, line_no);
  }
}

// ---------------------------------------------------------------------------
// CSV streams.

constexpr std::size_t kScanRecordBytes = 5 * sizeof(double);

void check_strictly_increasing(double prev, double t, const std::string& path,
                               std::size_t line) {
  if (t <= prev) {
    fail_at(path, line,
            "timestamps must be strictly increasing (" + fmt(t) + " after " + fmt(prev) + ")");
  }
}

}  // namespace

void save_imu_csv(const std::vector<ImuSample>& samples, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "# t,wx,wy,wz,ax,ay,az\n";
  for (const ImuSample& s : samples) {
    out << fmt(s.t) << ',' << fmt(s.gyro.x()) << ',' << fmt(s.gyro.y()) << ','
        << fmt(s.gyro.z()) << ',' << fmt(s.accel.x()) << ',' << fmt(s.accel.y()) << ','
        << fmt(s.accel.z()) << '\n';
  }
}

std::vector<ImuSample> load_imu_csv(const std::string& path) {
  std::vector<ImuSample> samples;
  double prev = -std::numeric_limits<double>::infinity();
  for_data_lines(path, [&](std::string_view line, std::size_t line_no) {
    const auto cols = split(line, ',');
    if (cols.size() != 7) {
      fail_at(path, line_no, "expected 7 comma-separated values (t,wx,wy,wz,ax,ay,az)");
    }
    ImuSample s;
    s.t = parse_double(cols[0], path, line_no);
    for (int i = 0; i < 3; ++i) s.gyro[i] = parse_double(cols[1 + i], path, line_no);
    for (int i = 0; i < 3; ++i) s.accel[i] = parse_double(cols[4 + i], path, line_no);
    check_strictly_increasing(prev, s.t, path, line_no);
    prev = s.t;
    samples.push_back(s);
  });
  if (samples.empty()) fail_file(path, "no samples");
  return samples;
}

void save_odometry_csv(const std::vector<TimedPose>& poses, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "# t,x,y,z,qx,qy,qz,qw\n";
  for (const TimedPose& tp : poses) {
    const Eigen::Quaterniond q = tp.pose.rotation.quaternion();
    out << fmt(tp.t) << ',' << fmt(tp.pose.translation.x()) << ','
        << fmt(tp.pose.translation.y()) << ',' << fmt(tp.pose.translation.z()) << ','
        << fmt(q.x()) << ',' << fmt(q.y()) << ',' << fmt(q.z()) << ',' << fmt(q.w()) << '\n';
  }
}

std::vector<TimedPose> load_odometry_csv(const std::string& path) {
  std::vector<TimedPose> poses;
  double prev = -std::numeric_limits<double>::infinity();
  for_data_lines(path, [&](std::string_view line, std::size_t line_no) {
    const auto cols = split(line, ',');
    if (cols.size() != 8) {
      fail_at(path, line_no, "expected 8 comma-separated values (t,x,y,z,qx,qy,qz,qw)");
    }
    double v[8];
    for (int i = 0; i < 8; ++i) v[i] = parse_double(cols[i], path, line_no);
    check_strictly_increasing(prev, v[0], path, line_no);
    prev = v[0];
    TimedPose tp;
    tp.t = v[0];
    tp.pose.translation = Vec3(v[1], v[2], v[3]);
    const Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (std::abs(q.norm() - 1.0) > 1e-6) fail_at(path, line_no, "quaternion is not unit");
    tp.pose.rotation = Rotation(q);
    poses.push_back(tp);
  });
  if (poses.empty()) fail_file(path, "no poses");
  return poses;
}

void save_scan_ascii(const LidarScan& scan, const std::string& path) {
  std::ofstream out = open_out(path);
  out << "# t,x,y,z,intensity\n";
  for (const LidarPoint& p : scan.points) {
    out << fmt(p.t) << ',' << fmt(p.p.x()) << ',' << fmt(p.p.y()) << ',' << fmt(p.p.z()) << ','
        << fmt(p.intensity) << '\n';
  }
}

namespace {

LidarScan finalize_scan(std::vector<LidarPoint> points, const std::string& path) {
  if (points.empty()) fail_file(path, "scan has no points");
  LidarScan scan;
  scan.t = points.front().t;
  scan.points = std::move(points);
  return scan;
}

}  // namespace

LidarScan load_scan_ascii(const std::string& path) {
  std::vector<LidarPoint> points;
  double prev = -std::numeric_limits<double>::infinity();
  for_data_lines(path, [&](std::string_view line, std::size_t line_no) {
    const auto cols = split(line, ',');
    if (cols.size() != 5) {
      fail_at(path, line_no, "expected 5 comma-separated values (t,x,y,z,intensity)");
    }
    LidarPoint p;
    p.t = parse_double(cols[0], path, line_no);
    for (int i = 0; i < 3; ++i) p.p[i] = parse_double(cols[1 + i], path, line_no);
    p.intensity = parse_double(cols[4], path, line_no);
    check_strictly_increasing(prev, p.t, path, line_no);
    prev = p.t;
    points.push_back(p);
  });
  return finalize_scan(std::move(points), path);
}

void save_scan_binary(const LidarScan& scan, const std::string& path) {
  std::ofstream out = open_out(path, std::ios::binary);
  std::vector<double> buffer;
  buffer.reserve(scan.points.size() * 5);
  for (const LidarPoint& p : scan.points) {
    buffer.push_back(p.t);
    buffer.push_back(p.p.x());
    buffer.push_back(p.p.y());
    buffer.push_back(p.p.z());
    buffer.push_back(p.intensity);
  }
  out.write(reinterpret_cast<const char*>(buffer.data()),
            static_cast<std::streamsize>(buffer.size() * sizeof(double)));
  if (!out) fail_file(path, "write failed");
}

LidarScan load_scan_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail_file(path, "cannot open");
  const auto size = fs::file_size(path);
  if (size % kScanRecordBytes != 0) {
    fail_file(path, "size is not a multiple of the 40-byte point record");
  }
  const std::size_t count = size / kScanRecordBytes;
  std::vector<double> buffer(count * 5);
  in.read(reinterpret_cast<char*>(buffer.data()), static_cast<std::streamsize>(size));
  if (!in) fail_file(path, "short read");
  std::vector<LidarPoint> points(count);
  double prev = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < count; ++i) {
    LidarPoint& p = points[i];
    p.t = buffer[i * 5];
    p.p = Vec3(buffer[i * 5 + 1], buffer[i * 5 + 2], buffer[i * 5 + 3]);
    p.intensity = buffer[i * 5 + 4];
    check_strictly_increasing(prev, p.t, path, i + 1);
    prev = p.t;
  }
  return finalize_scan(std::move(points), path);
}

// ---------------------------------------------------------------------------
// JSON streams.

void save_tracks_json(const std::vector<FeatureTrack>& tracks, int camera_index,
                      const std::string& camera_id, const std::string& path) {
  ordered_json root = ordered_json::array();
  for (const FeatureTrack& track : tracks) {
    ordered_json observations = ordered_json::array();
    for (const TrackObservation& obs : track.observations) {
      if (obs.camera != camera_index) continue;
      observations.push_back({{"camera_id", camera_id},
                              {"t", obs.t},
                              {"u", obs.uv.x()},
                              {"v", obs.uv.y()}});
    }
    if (observations.empty()) continue;
    root.push_back({{"track_id", track.id}, {"observations", std::move(observations)}});
  }
  std::ofstream out = open_out(path);
  out << root.dump(1) << '\n';
}

namespace {

ordered_json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail_file(path, "cannot open");
  try {
    return ordered_json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail_file(path, std::string("JSON parse error: ") + e.what());
  }
}

double json_number(const ordered_json& node, const char* key, const std::string& path) {
  if (!node.contains(key) || !node[key].is_number()) {
    fail_file(path, std::string("missing numeric field '") + key + "'");
  }
  return node[key].get<double>();
}

std::string json_string(const ordered_json& node, const char* key, const std::string& path) {
  if (!node.contains(key) || !node[key].is_string()) {
    fail_file(path, std::string("missing string field '") + key + "'");
  }
  return node[key].get<std::string>();
}

}  // namespace

void load_tracks_json(const std::string& path, const RigConfig& config,
                      std::vector<FeatureTrack>* tracks) {
  const ordered_json root = parse_json_file(path);
  if (!root.is_array()) fail_file(path, "expected a top-level array of tracks");

  std::unordered_map<int, std::size_t> by_id;
  for (std::size_t i = 0; i < tracks->size(); ++i) by_id[(*tracks)[i].id] = i;

  for (const ordered_json& entry : root) {
    const long id = static_cast<long>(json_number(entry, "track_id", path));
    if (!entry.contains("observations") || !entry["observations"].is_array()) {
      fail_file(path, "track " + std::to_string(id) + " has no observations array");
    }
    auto [it, inserted] = by_id.try_emplace(static_cast<int>(id), tracks->size());
    if (inserted) {
      tracks->emplace_back();
      tracks->back().id = static_cast<int>(id);
    }
    FeatureTrack& track = (*tracks)[it->second];
    double prev = -std::numeric_limits<double>::infinity();
    for (const ordered_json& node : entry["observations"]) {
      TrackObservation obs;
      const std::string cam_id = json_string(node, "camera_id", path);
      const int cam = config.camera_index(cam_id);
      if (cam < 0) fail_file(path, "unknown sensor id '" + cam_id + "'");
      obs.camera = cam;
      obs.t = json_number(node, "t", path);
      obs.uv = Vec2(json_number(node, "u", path), json_number(node, "v", path));
      if (obs.t <= prev) {
        fail_file(path, "track " + std::to_string(id) +
                            ": observation timestamps must be strictly increasing");
      }
      prev = obs.t;
      track.observations.push_back(obs);
    }
  }
}

void save_correspondences_json(const std::vector<CrossModalMatch>& matches,
                               const RigConfig& config, const std::string& path) {
  ordered_json root = ordered_json::array();
  for (const CrossModalMatch& m : matches) {
    if (m.camera < 0 || m.camera >= static_cast<int>(config.cameras.size())) {
      throw ValidationError("correspondence references camera index " +
                            std::to_string(m.camera) + " outside the rig");
    }
    root.push_back({{"camera_id", config.cameras[m.camera].id},
                    {"t", m.t},
                    {"u", m.uv.x()},
                    {"v", m.uv.y()},
                    {"px", m.point.x()},
                    {"py", m.point.y()},
                    {"pz", m.point.z()}});
  }
  std::ofstream out = open_out(path);
  out << root.dump(1) << '\n';
}

std::vector<CrossModalMatch> load_correspondences_json(const std::string& path,
                                                       const RigConfig& config) {
  const ordered_json root = parse_json_file(path);
  if (!root.is_array()) fail_file(path, "expected a top-level array of matches");
  std::vector<CrossModalMatch> matches;
  double prev = -std::numeric_limits<double>::infinity();
  for (const ordered_json& node : root) {
    CrossModalMatch m;
    const std::string cam_id = json_string(node, "camera_id", path);
    const int cam = config.camera_index(cam_id);
    if (cam < 0) fail_file(path, "unknown sensor id '" + cam_id + "'");
    m.camera = cam;
    m.t = json_number(node, "t", path);
    m.uv = Vec2(json_number(node, "u", path), json_number(node, "v", path));
    m.point = Vec3(json_number(node, "px", path), json_number(node, "py", path),
                   json_number(node, "pz", path));
    // Matches from the same frame legitimately share a timestamp.
    if (m.t < prev) fail_file(path, "match timestamps must be non-decreasing");
    prev = m.t;
    matches.push_back(m);
  }
  return matches;
}

// ---------------------------------------------------------------------------
// YAML configuration.

namespace {

void emit_vec(YAML::Emitter& out, const char* key, const double* v, int n) {
  out << YAML::Key << key << YAML::Value << YAML::Flow << YAML::BeginSeq;
  for (int i = 0; i < n; ++i) out << v[i];
  out << YAML::EndSeq;
}

void emit_extrinsics(YAML::Emitter& out, const SensorExtrinsics& ext) {
  const Vec3& t = ext.T_imu_sensor.translation;
  const Eigen::Quaterniond q = ext.T_imu_sensor.rotation.quaternion();
  const double tv[3] = {t.x(), t.y(), t.z()};
  const double qv[4] = {q.x(), q.y(), q.z(), q.w()};
  emit_vec(out, "translation", tv, 3);
  emit_vec(out, "quaternion_xyzw", qv, 4);
  out << YAML::Key << "time_offset" << YAML::Value << ext.time_offset;
}

std::string camera_model_name(CameraModelType model) {
  return model == CameraModelType::kPinholeRadtan4 ? "pinhole_radtan4"
                                                   : "fisheye_equidistant4";
}

CameraModelType camera_model_from_name(const std::string& name, const std::string& path) {
  if (name == "pinhole_radtan4") return CameraModelType::kPinholeRadtan4;
  if (name == "fisheye_equidistant4") return CameraModelType::kFisheyeEquidistant4;
  fail_file(path, "unknown camera model '" + name + "'");
}

YAML::Node yaml_require(const YAML::Node& node, const std::string& key,
                        const std::string& path) {
  const YAML::Node child = node[key];
  if (!child) fail_file(path, "missing key '" + key + "'");
  return child;
}

double yaml_double(const YAML::Node& node, const std::string& key, const std::string& path) {
  try {
    return yaml_require(node, key, path).as<double>();
  } catch (const YAML::Exception& e) {
    fail_file(path, "key '" + key + "': " + e.what());
  }
}

template <int N>
Eigen::Matrix<double, N, 1> yaml_vec(const YAML::Node& node, const std::string& key,
                                     const std::string& path) {
  const YAML::Node child = yaml_require(node, key, path);
  if (!child.IsSequence() || child.size() != N) {
    fail_file(path, "key '" + key + "' must be a sequence of " + std::to_string(N));
  }
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v[i] = child[i].as<double>();
  return v;
}

SensorExtrinsics yaml_extrinsics(const YAML::Node& node, const std::string& path) {
  SensorExtrinsics ext;
  ext.T_imu_sensor.translation = yaml_vec<3>(node, "translation", path);
  const Vec4 q = yaml_vec<4>(node, "quaternion_xyzw", path);
  const Eigen::Quaterniond quat(q[3], q[0], q[1], q[2]);
  if (std::abs(quat.norm() - 1.0) > 1e-6) fail_file(path, "quaternion is not unit");
  ext.T_imu_sensor.rotation = Rotation(quat);
  ext.time_offset = yaml_double(node, "time_offset", path);
  return ext;
}

YAML::Emitter& begin_rig_emitter(YAML::Emitter& out, const RigConfig& config) {
  out.SetDoublePrecision(17);
  out.SetFloatPrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "knot_interval" << YAML::Value << config.knot_interval;
  out << YAML::Key << "imu" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "rate_hz" << YAML::Value << config.imu.rate_hz;
  out << YAML::Key << "gyro_sigma" << YAML::Value << config.imu.gyro_sigma;
  out << YAML::Key << "accel_sigma" << YAML::Value << config.imu.accel_sigma;
  out << YAML::Key << "time_offset" << YAML::Value << config.imu.time_offset;
  out << YAML::EndMap;

  out << YAML::Key << "lidars" << YAML::Value << YAML::BeginSeq;
  for (const LidarCalibration& l : config.lidars) {
    out << YAML::BeginMap;
    out << YAML::Key << "id" << YAML::Value << l.id;
    emit_extrinsics(out, l.extrinsics);
    out << YAML::Key << "range_sigma" << YAML::Value << l.range_sigma;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;

  out << YAML::Key << "cameras" << YAML::Value << YAML::BeginSeq;
  for (const CameraCalibration& c : config.cameras) {
    out << YAML::BeginMap;
    out << YAML::Key << "id" << YAML::Value << c.id;
    emit_extrinsics(out, c.extrinsics);
    out << YAML::Key << "pixel_sigma" << YAML::Value << c.pixel_sigma;
    out << YAML::Key << "model" << YAML::Value << camera_model_name(c.intrinsics.model);
    out << YAML::Key << "width" << YAML::Value << c.intrinsics.width;
    out << YAML::Key << "height" << YAML::Value << c.intrinsics.height;
    out << YAML::Key << "fx" << YAML::Value << c.intrinsics.fx;
    out << YAML::Key << "fy" << YAML::Value << c.intrinsics.fy;
    out << YAML::Key << "cx" << YAML::Value << c.intrinsics.cx;
    out << YAML::Key << "cy" << YAML::Value << c.intrinsics.cy;
    const Vec4& d = c.intrinsics.distortion;
    const double dv[4] = {d[0], d[1], d[2], d[3]};
    emit_vec(out, "distortion", dv, 4);
    out << YAML::Key << "max_theta" << YAML::Value << c.intrinsics.max_theta;
    out << YAML::EndMap;
  }
  out << YAML::EndSeq;
  return out;
}

RigConfig parse_rig_yaml(const YAML::Node& root, const std::string& path) {
  RigConfig config;
  config.knot_interval = yaml_double(root, "knot_interval", path);
  const YAML::Node imu = yaml_require(root, "imu", path);
  config.imu.rate_hz = yaml_double(imu, "rate_hz", path);
  config.imu.gyro_sigma = yaml_double(imu, "gyro_sigma", path);
  config.imu.accel_sigma = yaml_double(imu, "accel_sigma", path);
  config.imu.time_offset = yaml_double(imu, "time_offset", path);

  const YAML::Node lidars = yaml_require(root, "lidars", path);
  for (const YAML::Node& node : lidars) {
    LidarCalibration l;
    l.id = yaml_require(node, "id", path).as<std::string>();
    l.extrinsics = yaml_extrinsics(node, path);
    l.range_sigma = yaml_double(node, "range_sigma", path);
    config.lidars.push_back(l);
  }
  if (root["cameras"]) {
    for (const YAML::Node& node : root["cameras"]) {
      CameraCalibration c;
      c.id = yaml_require(node, "id", path).as<std::string>();
      c.extrinsics = yaml_extrinsics(node, path);
      c.pixel_sigma = yaml_double(node, "pixel_sigma", path);
      c.intrinsics.model =
          camera_model_from_name(yaml_require(node, "model", path).as<std::string>(), path);
      c.intrinsics.width = static_cast<int>(yaml_double(node, "width", path));
      c.intrinsics.height = static_cast<int>(yaml_double(node, "height", path));
      c.intrinsics.fx = yaml_double(node, "fx", path);
      c.intrinsics.fy = yaml_double(node, "fy", path);
      c.intrinsics.cx = yaml_double(node, "cx", path);
      c.intrinsics.cy = yaml_double(node, "cy", path);
      c.intrinsics.distortion = yaml_vec<4>(node, "distortion", path);
      c.intrinsics.max_theta = yaml_double(node, "max_theta", path);
      config.cameras.push_back(c);
    }
  }
  try {
    config.validate();
  } catch (const ValidationError& e) {
    fail_file(path, e.what());
  }
  return config;
}

YAML::Node yaml_load(const std::string& path) {
  try {
    return YAML::LoadFile(path);
  } catch (const YAML::Exception& e) {
    fail_file(path, std::string("YAML parse error: ") + e.what());
  }
}

}  // namespace

void save_rig_yaml(const RigConfig& config, const std::string& path) {
  YAML::Emitter out;
  begin_rig_emitter(out, config) << YAML::EndMap;
  std::ofstream file = open_out(path);
  file << out.c_str() << '\n';
}

RigConfig load_rig_yaml(const std::string& path) {
  return parse_rig_yaml(yaml_load(path), path);
}

void save_truth_yaml(const CalibrationState& truth, const std::string& path) {
  RigConfig config;
  config.lidars = truth.lidars;
  config.cameras = truth.cameras;
  config.imu.time_offset = truth.imu_time_offset;

  YAML::Emitter out;
  begin_rig_emitter(out, config);
  out << YAML::Key << "truth" << YAML::Value << YAML::BeginMap;
  const Vec3& bg = truth.imu_bias.gyro;
  const Vec3& ba = truth.imu_bias.accel;
  const Vec3& g = truth.gravity;
  const double bgv[3] = {bg.x(), bg.y(), bg.z()};
  const double bav[3] = {ba.x(), ba.y(), ba.z()};
  const double gv[3] = {g.x(), g.y(), g.z()};
  emit_vec(out, "bias_gyro", bgv, 3);
  emit_vec(out, "bias_accel", bav, 3);
  emit_vec(out, "gravity", gv, 3);
  out << YAML::EndMap << YAML::EndMap;
  std::ofstream file = open_out(path);
  file << out.c_str() << '\n';
}

CalibrationState load_truth_yaml(const std::string& path) {
  const YAML::Node root = yaml_load(path);
  CalibrationState state = state_from_config(parse_rig_yaml(root, path));
  const YAML::Node truth = yaml_require(root, "truth", path);
  state.imu_bias.gyro = yaml_vec<3>(truth, "bias_gyro", path);
  state.imu_bias.accel = yaml_vec<3>(truth, "bias_accel", path);
  state.gravity = yaml_vec<3>(truth, "gravity", path);
  return state;
}

// ---------------------------------------------------------------------------
// Dataset directory.

void save_dataset(const SensorDataset& dataset, const std::string& directory,
                  const DatasetWriteOptions& options) {
  dataset.validate();
  const fs::path dir(directory);
  fs::create_directories(dir);
  save_rig_yaml(dataset.config, (dir / "rig.yaml").string());
  save_imu_csv(dataset.imu, (dir / "imu.csv").string());

  for (std::size_t i = 0; i < dataset.lidars.size(); ++i) {
    const LidarData& data = dataset.lidars[i];
    const fs::path lidar_dir = dir / ("lidar" + std::to_string(i));
    fs::create_directories(lidar_dir / "scans");
    save_odometry_csv(data.odometry, (lidar_dir / "odometry.csv").string());
    for (std::size_t k = 0; k < data.scans.size(); ++k) {
      char name[32];
      std::snprintf(name, sizeof(name), "%06zu.%s", k, options.binary_scans ? "bin" : "txt");
      const std::string path = (lidar_dir / "scans" / name).string();
      if (options.binary_scans) {
        save_scan_binary(data.scans[k], path);
      } else {
        save_scan_ascii(data.scans[k], path);
      }
    }
  }

  for (std::size_t c = 0; c < dataset.config.cameras.size(); ++c) {
    const fs::path cam_dir = dir / ("cam" + std::to_string(c));
    fs::create_directories(cam_dir);
    save_tracks_json(dataset.tracks, static_cast<int>(c), dataset.config.cameras[c].id,
                     (cam_dir / "tracks.json").string());
  }

  if (dataset.has_correspondences) {
    save_correspondences_json(dataset.correspondences, dataset.config,
                              (dir / "correspondences.json").string());
  }
}

SensorDataset load_dataset(const std::string& directory, std::ostream* log) {
  const fs::path dir(directory);
  if (!fs::is_directory(dir)) {
    throw ValidationError(directory + ": dataset directory does not exist");
  }
  SensorDataset dataset;
  dataset.config = load_rig_yaml((dir / "rig.yaml").string());
  dataset.imu = load_imu_csv((dir / "imu.csv").string());

  for (std::size_t i = 0; i < dataset.config.lidars.size(); ++i) {
    const fs::path lidar_dir = dir / ("lidar" + std::to_string(i));
    LidarData data;
    data.id = dataset.config.lidars[i].id;
    data.odometry = load_odometry_csv((lidar_dir / "odometry.csv").string());

    const fs::path scan_dir = lidar_dir / "scans";
    if (!fs::is_directory(scan_dir)) {
      fail_file(scan_dir.string(), "scan directory does not exist");
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(scan_dir)) {
      const std::string ext = entry.path().extension().string();
      if (ext == ".txt" || ext == ".bin") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    double prev = -std::numeric_limits<double>::infinity();
    for (const fs::path& file : files) {
      LidarScan scan = file.extension() == ".bin" ? load_scan_binary(file.string())
                                                  : load_scan_ascii(file.string());
      if (scan.t <= prev) {
        fail_file(file.string(), "scan start times must be strictly increasing");
      }
      prev = scan.t;
      data.scans.push_back(std::move(scan));
    }
    if (data.scans.empty()) fail_file(scan_dir.string(), "no scan files");
    dataset.lidars.push_back(std::move(data));
  }

  for (std::size_t c = 0; c < dataset.config.cameras.size(); ++c) {
    const fs::path path = dir / ("cam" + std::to_string(c)) / "tracks.json";
    load_tracks_json(path.string(), dataset.config, &dataset.tracks);
  }
  for (FeatureTrack& track : dataset.tracks) {
    std::sort(track.observations.begin(), track.observations.end(),
              [](const TrackObservation& a, const TrackObservation& b) {
                return a.t != b.t ? a.t < b.t : a.camera < b.camera;
              });
  }
  std::sort(dataset.tracks.begin(), dataset.tracks.end(),
            [](const FeatureTrack& a, const FeatureTrack& b) { return a.id < b.id; });

  const fs::path corr = dir / "correspondences.json";
  if (fs::exists(corr)) {
    dataset.correspondences = load_correspondences_json(corr.string(), dataset.config);
    dataset.has_correspondences = true;
  }

  dataset.validate();

  if (log) {
    const auto span = [](double lo, double hi) { return hi - lo; };
    *log << "dataset " << directory << ":\n";
    *log << "  imu: " << dataset.imu.size() << " samples over "
         << span(dataset.imu.front().t, dataset.imu.back().t) << " s\n";
    for (std::size_t i = 0; i < dataset.lidars.size(); ++i) {
      std::size_t points = 0;
      for (const LidarScan& scan : dataset.lidars[i].scans) points += scan.points.size();
      *log << "  " << dataset.config.lidars[i].id << ": " << dataset.lidars[i].scans.size()
           << " scans, " << points << " points, " << dataset.lidars[i].odometry.size()
           << " odometry poses\n";
    }
    std::vector<std::size_t> obs_count(dataset.config.cameras.size(), 0);
    std::vector<std::size_t> track_count(dataset.config.cameras.size(), 0);
    for (const FeatureTrack& track : dataset.tracks) {
      std::vector<bool> present(dataset.config.cameras.size(), false);
      for (const TrackObservation& obs : track.observations) {
        ++obs_count[obs.camera];
        present[obs.camera] = true;
      }
      for (std::size_t c = 0; c < present.size(); ++c) track_count[c] += present[c];
    }
    for (std::size_t c = 0; c < dataset.config.cameras.size(); ++c) {
      *log << "  " << dataset.config.cameras[c].id << ": " << track_count[c] << " tracks, "
           << obs_count[c] << " observations\n";
    }
    if (dataset.has_correspondences) {
      *log << "  correspondences: " << dataset.correspondences.size() << "\n";
    } else {
      *log << "  correspondences: none (cross-modal stage disabled)\n";
    }
  }
  return dataset;
}

// ---------------------------------------------------------------------------
// Calibration report.

namespace {

constexpr char kReportHeader[] = "rigcal-report v1";
constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;

void write_pose_block(std::ostream& out, const SensorExtrinsics& ext) {
  const Eigen::Quaterniond q = ext.T_imu_sensor.rotation.quaternion();
  const Vec3 euler = rotation_to_euler_zyx(ext.T_imu_sensor.rotation) * kRadToDeg;
  const Vec3& t = ext.T_imu_sensor.translation;
  out << "  quaternion_xyzw " << fmt(q.x()) << ' ' << fmt(q.y()) << ' ' << fmt(q.z()) << ' '
      << fmt(q.w()) << '\n';
  out << "  rotation_zyx_deg " << fmt(euler.x()) << ' ' << fmt(euler.y()) << ' '
      << fmt(euler.z()) << '\n';
  out << "  translation_m " << fmt(t.x()) << ' ' << fmt(t.y()) << ' ' << fmt(t.z()) << '\n';
  out << "  time_offset_ms " << fmt(ext.time_offset * 1000.0) << '\n';
  out << "  time_offset_s " << fmt(ext.time_offset) << '\n';
}

}  // namespace

std::string format_report(const CalibrationReport& report) {
  std::ostringstream out;
  out << kReportHeader << "\n\n";

  out << "imu\n";
  out << "  time_offset_ms " << fmt(report.imu_time_offset * 1000.0) << '\n';
  out << "  time_offset_s " << fmt(report.imu_time_offset) << '\n';
  out << "  bias_gyro " << fmt(report.imu_bias.gyro.x()) << ' ' << fmt(report.imu_bias.gyro.y())
      << ' ' << fmt(report.imu_bias.gyro.z()) << '\n';
  out << "  bias_accel " << fmt(report.imu_bias.accel.x()) << ' '
      << fmt(report.imu_bias.accel.y()) << ' ' << fmt(report.imu_bias.accel.z()) << '\n';
  out << "  gravity " << fmt(report.gravity.x()) << ' ' << fmt(report.gravity.y()) << ' '
      << fmt(report.gravity.z()) << '\n';

  for (const LidarCalibration& l : report.lidars) {
    out << "\nlidar " << l.id << '\n';
    write_pose_block(out, l.extrinsics);
    out << "  range_sigma_m " << fmt(l.range_sigma) << '\n';
  }
  for (const CameraCalibration& c : report.cameras) {
    out << "\ncamera " << c.id << '\n';
    write_pose_block(out, c.extrinsics);
    out << "  pixel_sigma_px " << fmt(c.pixel_sigma) << '\n';
    out << "  model " << camera_model_name(c.intrinsics.model) << '\n';
    out << "  image_size " << c.intrinsics.width << ' ' << c.intrinsics.height << '\n';
    out << "  focal_px " << fmt(c.intrinsics.fx) << ' ' << fmt(c.intrinsics.fy) << '\n';
    out << "  principal_point_px " << fmt(c.intrinsics.cx) << ' ' << fmt(c.intrinsics.cy)
        << '\n';
    out << "  distortion " << fmt(c.intrinsics.distortion[0]) << ' '
        << fmt(c.intrinsics.distortion[1]) << ' ' << fmt(c.intrinsics.distortion[2]) << ' '
        << fmt(c.intrinsics.distortion[3]) << '\n';
    out << "  max_theta_rad " << fmt(c.intrinsics.max_theta) << '\n';
  }

  if (!report.residual_stats.empty()) {
    out << "\nresiduals\n";
    for (const FactorClassReport& f : report.residual_stats) {
      out << "  factor " << f.name << ' ' << f.count << ' ' << f.dropped << ' ' << fmt(f.rms)
          << '\n';
    }
  }
  if (!report.metrics.empty()) {
    out << "\nmetrics\n";
    for (const auto& [name, value] : report.metrics) {
      std::string safe = name;
      for (char& ch : safe) {
        if (ch == ' ' || ch == '\t') ch = '_';
      }
      out << "  metric " << safe << ' ' << fmt(value) << '\n';
    }
  }
  if (!report.observability_notes.empty() || !report.warnings.empty()) {
    out << "\nnotes\n";
    for (const std::string& note : report.observability_notes) out << "  note " << note << '\n';
    for (const std::string& warning : report.warnings) out << "  warning " << warning << '\n';
  }
  out << "\nend\n";
  return out.str();
}

CalibrationReport parse_report(const std::string& text) {
  CalibrationReport report;
  const std::string path = "<report>";
  enum class Section { kNone, kImu, kLidar, kCamera, kResiduals, kMetrics, kNotes, kEnd };
  Section section = Section::kNone;
  SensorExtrinsics* pose_target = nullptr;
  bool saw_header = false;

  std::size_t line_no = 0;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    const std::size_t end = text.find('\n', begin);
    const std::string_view raw(text.data() + begin,
                               (end == std::string::npos ? text.size() : end) - begin);
    ++line_no;
    begin = (end == std::string::npos) ? text.size() + 1 : end + 1;
    const std::string_view line = trim(raw);
    if (line.empty() || line.front() == '#') continue;

    if (!saw_header) {
      if (line != kReportHeader) fail_at(path, line_no, "missing report header");
      saw_header = true;
      continue;
    }
    const auto tokens = tokenize(line);
    const std::string_view key = tokens[0];
    const auto need = [&](std::size_t n) {
      if (tokens.size() != n + 1) {
        fail_at(path, line_no,
                std::string(key) + " expects " + std::to_string(n) + " values");
      }
    };
    const auto num = [&](std::size_t i) { return parse_double(tokens[i], path, line_no); };

    if (key == "imu") {
      section = Section::kImu;
      pose_target = nullptr;
    } else if (key == "lidar") {
      need(1);
      section = Section::kLidar;
      report.lidars.emplace_back();
      report.lidars.back().id = std::string(tokens[1]);
      pose_target = &report.lidars.back().extrinsics;
    } else if (key == "camera") {
      need(1);
      section = Section::kCamera;
      report.cameras.emplace_back();
      report.cameras.back().id = std::string(tokens[1]);
      pose_target = &report.cameras.back().extrinsics;
    } else if (key == "residuals") {
      section = Section::kResiduals;
    } else if (key == "metrics") {
      section = Section::kMetrics;
    } else if (key == "notes") {
      section = Section::kNotes;
    } else if (key == "end") {
      section = Section::kEnd;
      break;
    } else if (section == Section::kImu) {
      if (key == "time_offset_s") {
        need(1);
        report.imu_time_offset = num(1);
      } else if (key == "bias_gyro") {
        need(3);
        report.imu_bias.gyro = Vec3(num(1), num(2), num(3));
      } else if (key == "bias_accel") {
        need(3);
        report.imu_bias.accel = Vec3(num(1), num(2), num(3));
      } else if (key == "gravity") {
        need(3);
        report.gravity = Vec3(num(1), num(2), num(3));
      } else if (key != "time_offset_ms") {
        fail_at(path, line_no, "unknown imu field '" + std::string(key) + "'");
      }
    } else if (section == Section::kLidar || section == Section::kCamera) {
      CameraCalibration* cam =
          section == Section::kCamera ? &report.cameras.back() : nullptr;
      if (key == "quaternion_xyzw") {
        need(4);
        const Eigen::Quaterniond q(num(4), num(1), num(2), num(3));
        if (std::abs(q.norm() - 1.0) > 1e-6) fail_at(path, line_no, "quaternion is not unit");
        pose_target->T_imu_sensor.rotation = Rotation(q);
      } else if (key == "translation_m") {
        need(3);
        pose_target->T_imu_sensor.translation = Vec3(num(1), num(2), num(3));
      } else if (key == "time_offset_s") {
        need(1);
        pose_target->time_offset = num(1);
      } else if (key == "rotation_zyx_deg" || key == "time_offset_ms") {
        // Convenience lines; the canonical values are the quaternion and the
        // offset in seconds.
      } else if (section == Section::kLidar && key == "range_sigma_m") {
        need(1);
        report.lidars.back().range_sigma = num(1);
      } else if (cam && key == "pixel_sigma_px") {
        need(1);
        cam->pixel_sigma = num(1);
      } else if (cam && key == "model") {
        need(1);
        cam->intrinsics.model = camera_model_from_name(std::string(tokens[1]), path);
      } else if (cam && key == "image_size") {
        need(2);
        cam->intrinsics.width = static_cast<int>(parse_int(tokens[1], path, line_no));
        cam->intrinsics.height = static_cast<int>(parse_int(tokens[2], path, line_no));
      } else if (cam && key == "focal_px") {
        need(2);
        cam->intrinsics.fx = num(1);
        cam->intrinsics.fy = num(2);
      } else if (cam && key == "principal_point_px") {
        need(2);
        cam->intrinsics.cx = num(1);
        cam->intrinsics.cy = num(2);
      } else if (cam && key == "distortion") {
        need(4);
        cam->intrinsics.distortion = Vec4(num(1), num(2), num(3), num(4));
      } else if (cam && key == "max_theta_rad") {
        need(1);
        cam->intrinsics.max_theta = num(1);
      } else {
        fail_at(path, line_no, "unknown sensor field '" + std::string(key) + "'");
      }
    } else if (section == Section::kResiduals) {
      if (key != "factor") fail_at(path, line_no, "expected 'factor' rows");
      need(4);
      FactorClassReport f;
      f.name = std::string(tokens[1]);
      f.count = static_cast<int>(parse_int(tokens[2], path, line_no));
      f.dropped = static_cast<int>(parse_int(tokens[3], path, line_no));
      f.rms = num(4);
      report.residual_stats.push_back(f);
    } else if (section == Section::kMetrics) {
      if (key != "metric") fail_at(path, line_no, "expected 'metric' rows");
      need(2);
      report.metrics.emplace_back(std::string(tokens[1]), num(2));
    } else if (section == Section::kNotes) {
      const std::string_view rest = trim(line.substr(key.size()));
      if (key == "note") {
        report.observability_notes.emplace_back(rest);
      } else if (key == "warning") {
        report.warnings.emplace_back(rest);
      } else {
        fail_at(path, line_no, "expected 'note' or 'warning' rows");
      }
    } else {
      fail_at(path, line_no, "unexpected line '" + std::string(key) + "'");
    }
  }
  if (!saw_header) throw ValidationError("report: empty document");
  if (section != Section::kEnd) throw ValidationError("report: missing 'end' terminator");
  return report;
}

void save_report(const CalibrationReport& report, const std::string& path) {
  std::ofstream out = open_out(path);
  out << format_report(report);
}

CalibrationReport load_report(const std::string& path) {
  try {
    return parse_report(read_text_file(path));
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    if (what.rfind("<report>", 0) == 0) {
      throw ValidationError(path + what.substr(sizeof("<report>") - 1));
    }
    throw;
  }
}

// ---------------------------------------------------------------------------
// Images and map export.

void save_pgm(const GrayImage& image, const std::string& path) {
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() !=
          static_cast<std::size_t>(image.width) * static_cast<std::size_t>(image.height)) {
    throw ValidationError("image dimensions do not match the pixel buffer");
  }
  std::ofstream out = open_out(path, std::ios::binary);
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) fail_file(path, "write failed");
}

void save_map_ply(const VoxelPlaneMap& map, const std::string& path) {
  std::size_t total = 0;
  for (const MapVoxel* voxel : map.planar_voxels()) total += voxel->points.size();

  std::ofstream out = open_out(path);
  out << "ply\nformat ascii 1.0\n";
  out << "comment adaptive voxel plane map export\n";
  out << "element vertex " << total << '\n';
  out << "property double x\nproperty double y\nproperty double z\n";
  out << "property int voxel_id\nproperty int plane_id\n";
  out << "end_header\n";
  int voxel_id = 0;
  for (const MapVoxel* voxel : map.planar_voxels()) {
    for (const MapPointRef& ref : voxel->points) {
      out << fmt(ref.p_world.x()) << ' ' << fmt(ref.p_world.y()) << ' '
          << fmt(ref.p_world.z()) << ' ' << voxel_id << ' ' << voxel_id << '\n';
    }
    ++voxel_id;
  }
}

}  // namespace rigcal
