#include <doctest.h>

#include <rigcal/io.hpp>
#include <rigcal/simulator.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace rigcal;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("rigcal_io_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string str(const std::string& name = "") const { return (path / name).string(); }
};

SimulationResult tiny_sim(std::uint64_t seed = 5) {
  RigSpec rig = default_rig();
  for (auto& l : rig.lidars) {
    l.scan_rows = 6;
    l.scan_cols = 40;
  }
  rig.imu.rate_hz = 50.0;
  rig.num_landmarks = 250;
  rig.imu.gyro_sigma = 1e-3;
  rig.imu.accel_sigma = 1e-2;
  rig.lidars[0].range_sigma = 0.01;
  rig.cameras[0].pixel_sigma = 0.4;
  rig.correspondence_pixel_sigma = 0.3;
  MotionSpec motion;
  motion.duration = 6.0;
  return generate(rig, motion, seed);
}

bool same_extrinsics(const SensorExtrinsics& a, const SensorExtrinsics& b) {
  return a.T_imu_sensor.rotation.quaternion().coeffs() ==
             b.T_imu_sensor.rotation.quaternion().coeffs() &&
         a.T_imu_sensor.translation == b.T_imu_sensor.translation &&
         a.time_offset == b.time_offset;
}

CalibrationReport sample_report() {
  const SimulationResult sim = tiny_sim(17);
  CalibrationReport report;
  report.lidars = sim.truth.lidars;
  report.cameras = sim.truth.cameras;
  report.imu_bias = sim.truth.imu_bias;
  report.imu_time_offset = sim.truth.imu_time_offset;
  report.gravity = sim.truth.gravity;
  report.residual_stats = {{"imu", 1200, 0, 0.98765432109876543},
                           {"lidar_plane", 52341, 17, 1.0204081632653061}};
  report.metrics = {{"mme_lidar0", -5.4321098765432109},
                    {"thickness_cm lidar0 lidar1", 1.9999999999999998}};
  report.observability_notes = {"z translation of lidar extrinsics frozen (planar motion)"};
  report.warnings = {"cross-modal stage skipped: no correspondences"};
  return report;
}

}  // namespace

TEST_SUITE_BEGIN("io");

TEST_CASE("imu csv round trip is bit exact") {
  TempDir dir("imu");
  const SimulationResult sim = tiny_sim();
  const std::string path = dir.str("imu.csv");
  save_imu_csv(sim.dataset.imu, path);
  const auto loaded = load_imu_csv(path);
  REQUIRE(loaded.size() == sim.dataset.imu.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    CHECK(loaded[i].t == sim.dataset.imu[i].t);
    CHECK(loaded[i].gyro == sim.dataset.imu[i].gyro);
    CHECK(loaded[i].accel == sim.dataset.imu[i].accel);
  }
}

TEST_CASE("out-of-order imu row fails with file and line context") {
  TempDir dir("imu_bad");
  const std::string path = dir.str("imu.csv");
  {
    std::ofstream out(path);
    out << "# t,wx,wy,wz,ax,ay,az\n";
    out << "0.0,0,0,0,0,0,-9.81\n";
    out << "0.01,0,0,0,0,0,-9.81\n";
    out << "0.005,0,0,0,0,0,-9.81\n";
  }
  try {
    load_imu_csv(path);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    const std::string what = e.what();
    CHECK(what.find("imu.csv:4") != std::string::npos);
    CHECK(what.find("strictly increasing") != std::string::npos);
  }
}

TEST_CASE("malformed imu value names the offending row") {
  TempDir dir("imu_bad2");
  const std::string path = dir.str("imu.csv");
  {
    std::ofstream out(path);
    out << "0.0,0,0,0,0,0,nine\n";
  }
  try {
    load_imu_csv(path);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find(":1") != std::string::npos);
  }
}

TEST_CASE("ascii and binary scans load identically and bit exact") {
  TempDir dir("scan");
  const SimulationResult sim = tiny_sim();
  const LidarScan& scan = sim.dataset.lidars[0].scans[2];
  save_scan_ascii(scan, dir.str("scan.txt"));
  save_scan_binary(scan, dir.str("scan.bin"));
  const LidarScan ascii = load_scan_ascii(dir.str("scan.txt"));
  const LidarScan binary = load_scan_binary(dir.str("scan.bin"));
  REQUIRE(ascii.points.size() == scan.points.size());
  REQUIRE(binary.points.size() == scan.points.size());
  CHECK(ascii.t == scan.t);
  CHECK(binary.t == scan.t);
  for (std::size_t i = 0; i < scan.points.size(); ++i) {
    CHECK(ascii.points[i].t == scan.points[i].t);
    CHECK(ascii.points[i].p == scan.points[i].p);
    CHECK(ascii.points[i].intensity == scan.points[i].intensity);
    CHECK(binary.points[i].t == scan.points[i].t);
    CHECK(binary.points[i].p == scan.points[i].p);
    CHECK(binary.points[i].intensity == scan.points[i].intensity);
  }
}

TEST_CASE("truncated binary scan is rejected") {
  TempDir dir("scan_bad");
  const std::string path = dir.str("scan.bin");
  {
    std::ofstream out(path, std::ios::binary);
    const double values[7] = {0, 1, 2, 3, 4, 5, 6};  // not a multiple of 5
    out.write(reinterpret_cast<const char*>(values), sizeof(values));
  }
  CHECK_THROWS_AS(load_scan_binary(path), ValidationError);
}

TEST_CASE("rig yaml round trip is bit exact") {
  TempDir dir("rig");
  const SimulationResult sim = tiny_sim();
  const std::string path = dir.str("rig.yaml");
  save_rig_yaml(sim.dataset.config, path);
  const RigConfig loaded = load_rig_yaml(path);

  REQUIRE(loaded.lidars.size() == sim.dataset.config.lidars.size());
  REQUIRE(loaded.cameras.size() == sim.dataset.config.cameras.size());
  CHECK(loaded.knot_interval == sim.dataset.config.knot_interval);
  CHECK(loaded.imu.rate_hz == sim.dataset.config.imu.rate_hz);
  CHECK(loaded.imu.gyro_sigma == sim.dataset.config.imu.gyro_sigma);
  CHECK(loaded.imu.accel_sigma == sim.dataset.config.imu.accel_sigma);
  CHECK(loaded.imu.time_offset == sim.dataset.config.imu.time_offset);
  for (std::size_t i = 0; i < loaded.lidars.size(); ++i) {
    CHECK(loaded.lidars[i].id == sim.dataset.config.lidars[i].id);
    CHECK(same_extrinsics(loaded.lidars[i].extrinsics, sim.dataset.config.lidars[i].extrinsics));
    CHECK(loaded.lidars[i].range_sigma == sim.dataset.config.lidars[i].range_sigma);
  }
  for (std::size_t c = 0; c < loaded.cameras.size(); ++c) {
    const CameraCalibration& a = loaded.cameras[c];
    const CameraCalibration& b = sim.dataset.config.cameras[c];
    CHECK(a.id == b.id);
    CHECK(same_extrinsics(a.extrinsics, b.extrinsics));
    CHECK(a.pixel_sigma == b.pixel_sigma);
    CHECK(a.intrinsics.model == b.intrinsics.model);
    CHECK(a.intrinsics.width == b.intrinsics.width);
    CHECK(a.intrinsics.height == b.intrinsics.height);
    CHECK(a.intrinsics.as_vector() == b.intrinsics.as_vector());
    CHECK(a.intrinsics.max_theta == b.intrinsics.max_theta);
  }
}

TEST_CASE("truth yaml carries biases and gravity") {
  TempDir dir("truth");
  const SimulationResult sim = tiny_sim();
  const std::string path = dir.str("truth.yaml");
  save_truth_yaml(sim.truth, path);
  const CalibrationState loaded = load_truth_yaml(path);
  CHECK(loaded.imu_bias.gyro == sim.truth.imu_bias.gyro);
  CHECK(loaded.imu_bias.accel == sim.truth.imu_bias.accel);
  CHECK(loaded.gravity == sim.truth.gravity);
  CHECK(loaded.imu_time_offset == sim.truth.imu_time_offset);
  REQUIRE(loaded.lidars.size() == sim.truth.lidars.size());
  for (std::size_t i = 0; i < loaded.lidars.size(); ++i) {
    CHECK(same_extrinsics(loaded.lidars[i].extrinsics, sim.truth.lidars[i].extrinsics));
  }
  for (std::size_t c = 0; c < loaded.cameras.size(); ++c) {
    CHECK(same_extrinsics(loaded.cameras[c].extrinsics, sim.truth.cameras[c].extrinsics));
    CHECK(loaded.cameras[c].intrinsics.as_vector() ==
          sim.truth.cameras[c].intrinsics.as_vector());
  }
}

TEST_CASE("dataset directory round trip is lossless") {
  for (const bool binary : {true, false}) {
    TempDir dir(binary ? "ds_bin" : "ds_txt");
    const SimulationResult sim = tiny_sim();
    DatasetWriteOptions options;
    options.binary_scans = binary;
    save_dataset(sim.dataset, dir.str(), options);

    std::ostringstream log;
    const SensorDataset loaded = load_dataset(dir.str(), &log);
    CHECK(log.str().find("imu:") != std::string::npos);

    REQUIRE(loaded.imu.size() == sim.dataset.imu.size());
    CHECK(loaded.imu.back().accel == sim.dataset.imu.back().accel);

    REQUIRE(loaded.lidars.size() == sim.dataset.lidars.size());
    for (std::size_t i = 0; i < loaded.lidars.size(); ++i) {
      const LidarData& a = loaded.lidars[i];
      const LidarData& b = sim.dataset.lidars[i];
      CHECK(a.id == b.id);
      REQUIRE(a.scans.size() == b.scans.size());
      REQUIRE(a.odometry.size() == b.odometry.size());
      for (std::size_t k = 0; k < a.scans.size(); ++k) {
        REQUIRE(a.scans[k].points.size() == b.scans[k].points.size());
        CHECK(a.scans[k].t == b.scans[k].t);
        const std::size_t mid = a.scans[k].points.size() / 2;
        CHECK(a.scans[k].points[mid].t == b.scans[k].points[mid].t);
        CHECK(a.scans[k].points[mid].p == b.scans[k].points[mid].p);
        CHECK(a.scans[k].points[mid].intensity == b.scans[k].points[mid].intensity);
      }
      for (std::size_t k = 0; k < a.odometry.size(); ++k) {
        CHECK(a.odometry[k].t == b.odometry[k].t);
        CHECK(a.odometry[k].pose.translation == b.odometry[k].pose.translation);
        CHECK(a.odometry[k].pose.rotation.quaternion().coeffs() ==
              b.odometry[k].pose.rotation.quaternion().coeffs());
      }
    }

    REQUIRE(loaded.tracks.size() == sim.dataset.tracks.size());
    for (std::size_t i = 0; i < loaded.tracks.size(); ++i) {
      const FeatureTrack& a = loaded.tracks[i];
      const FeatureTrack& b = sim.dataset.tracks[i];
      CHECK(a.id == b.id);
      REQUIRE(a.observations.size() == b.observations.size());
      for (std::size_t k = 0; k < a.observations.size(); ++k) {
        CHECK(a.observations[k].camera == b.observations[k].camera);
        CHECK(a.observations[k].t == b.observations[k].t);
        CHECK(a.observations[k].uv == b.observations[k].uv);
      }
    }

    REQUIRE(loaded.has_correspondences == sim.dataset.has_correspondences);
    REQUIRE(loaded.correspondences.size() == sim.dataset.correspondences.size());
    for (std::size_t i = 0; i < loaded.correspondences.size(); ++i) {
      CHECK(loaded.correspondences[i].camera == sim.dataset.correspondences[i].camera);
      CHECK(loaded.correspondences[i].t == sim.dataset.correspondences[i].t);
      CHECK(loaded.correspondences[i].uv == sim.dataset.correspondences[i].uv);
      CHECK(loaded.correspondences[i].point == sim.dataset.correspondences[i].point);
    }
  }
}

TEST_CASE("missing correspondences file disables the cross-modal stage") {
  TempDir dir("ds_nocorr");
  SimulationResult sim = tiny_sim();
  save_dataset(sim.dataset, dir.str());
  fs::remove(dir.path / "correspondences.json");
  const SensorDataset loaded = load_dataset(dir.str());
  CHECK(!loaded.has_correspondences);
  CHECK(loaded.correspondences.empty());
}

TEST_CASE("loading a nonexistent directory fails") {
  CHECK_THROWS_AS(load_dataset("/nonexistent/rigcal_dataset"), ValidationError);
}

TEST_CASE("unknown camera id in tracks fails with the id named") {
  TempDir dir("tracks_bad");
  const std::string path = dir.str("tracks.json");
  {
    std::ofstream out(path);
    out << R"([{"track_id": 0, "observations": [{"camera_id": "cam9", "t": 0.1, "u": 1.0, "v": 2.0}]}])";
  }
  RigConfig config = tiny_sim().dataset.config;
  std::vector<FeatureTrack> tracks;
  try {
    load_tracks_json(path, config, &tracks);
    FAIL("expected a validation error");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("cam9") != std::string::npos);
  }
}

TEST_CASE("report text round trip is byte identical and bit exact") {
  const CalibrationReport report = sample_report();
  const std::string text = format_report(report);
  const CalibrationReport parsed = parse_report(text);
  CHECK(format_report(parsed) == text);

  CHECK(parsed.imu_time_offset == report.imu_time_offset);
  CHECK(parsed.imu_bias.gyro == report.imu_bias.gyro);
  CHECK(parsed.imu_bias.accel == report.imu_bias.accel);
  CHECK(parsed.gravity == report.gravity);
  REQUIRE(parsed.lidars.size() == report.lidars.size());
  for (std::size_t i = 0; i < parsed.lidars.size(); ++i) {
    CHECK(parsed.lidars[i].id == report.lidars[i].id);
    CHECK(same_extrinsics(parsed.lidars[i].extrinsics, report.lidars[i].extrinsics));
    CHECK(parsed.lidars[i].range_sigma == report.lidars[i].range_sigma);
  }
  REQUIRE(parsed.cameras.size() == report.cameras.size());
  for (std::size_t c = 0; c < parsed.cameras.size(); ++c) {
    CHECK(same_extrinsics(parsed.cameras[c].extrinsics, report.cameras[c].extrinsics));
    CHECK(parsed.cameras[c].intrinsics.as_vector() == report.cameras[c].intrinsics.as_vector());
    CHECK(parsed.cameras[c].intrinsics.model == report.cameras[c].intrinsics.model);
    CHECK(parsed.cameras[c].intrinsics.max_theta == report.cameras[c].intrinsics.max_theta);
  }
  REQUIRE(parsed.residual_stats.size() == report.residual_stats.size());
  for (std::size_t i = 0; i < parsed.residual_stats.size(); ++i) {
    CHECK(parsed.residual_stats[i].name == report.residual_stats[i].name);
    CHECK(parsed.residual_stats[i].count == report.residual_stats[i].count);
    CHECK(parsed.residual_stats[i].dropped == report.residual_stats[i].dropped);
    CHECK(parsed.residual_stats[i].rms == report.residual_stats[i].rms);
  }
  REQUIRE(parsed.metrics.size() == report.metrics.size());
  CHECK(parsed.metrics[0].first == "mme_lidar0");
  CHECK(parsed.metrics[0].second == report.metrics[0].second);
  // Metric names are space-sanitized on save.
  CHECK(parsed.metrics[1].first == "thickness_cm_lidar0_lidar1");
  CHECK(parsed.metrics[1].second == report.metrics[1].second);
  CHECK(parsed.observability_notes == report.observability_notes);
  CHECK(parsed.warnings == report.warnings);
}

TEST_CASE("report file io matches in-memory formatting") {
  TempDir dir("report");
  const CalibrationReport report = sample_report();
  const std::string path = dir.str("report.txt");
  save_report(report, path);
  const CalibrationReport loaded = load_report(path);
  CHECK(format_report(loaded) == format_report(report));
}

TEST_CASE("report without terminator is rejected") {
  const std::string text = "rigcal-report v1\nimu\n  time_offset_s 0\n";
  CHECK_THROWS_AS(parse_report(text), ValidationError);
}

TEST_CASE("pgm writer emits a valid P5 header and payload") {
  TempDir dir("pgm");
  GrayImage image;
  image.width = 4;
  image.height = 2;
  image.pixels = {0, 64, 128, 255, 10, 20, 30, 40};
  const std::string path = dir.str("img.pgm");
  save_pgm(image, path);

  std::ifstream in(path, std::ios::binary);
  std::string header;
  std::getline(in, header);
  CHECK(header == "P5");
  int w, h, maxval;
  in >> w >> h >> maxval;
  CHECK(w == 4);
  CHECK(h == 2);
  CHECK(maxval == 255);
  in.get();  // single separator byte
  std::vector<std::uint8_t> payload(8);
  in.read(reinterpret_cast<char*>(payload.data()), 8);
  CHECK(payload == image.pixels);

  GrayImage bad;
  bad.width = 3;
  bad.height = 2;
  bad.pixels = {1, 2, 3};
  CHECK_THROWS_AS(save_pgm(bad, dir.str("bad.pgm")), ValidationError);
}

TEST_CASE("map export writes one vertex per planar point") {
  TempDir dir("ply");
  VoxelPlaneMap map;
  int index = 0;
  for (int sx = 0; sx < 12; ++sx) {
    for (int sy = 0; sy < 12; ++sy) {
      MapPointRef ref;
      ref.lidar = 0;
      ref.scan = sx % 3;
      ref.point = index++;
      ref.t = 0.01 * index;
      ref.p_world = Vec3(0.1 * sx, 0.1 * sy, 1.0);
      ref.p_sensor = ref.p_world;
      map.insert(ref);
    }
  }
  map.build();
  REQUIRE(!map.planar_voxels().empty());
  const std::string path = dir.str("map.ply");
  save_map_ply(map, path);

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "ply");
  std::size_t vertices = 0;
  while (std::getline(in, line)) {
    if (line.rfind("element vertex", 0) == 0) {
      vertices = std::stoul(line.substr(15));
    }
    if (line == "end_header") break;
  }
  CHECK(vertices == 144);
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) ++rows;
  }
  CHECK(rows == vertices);
}

TEST_SUITE_END();
