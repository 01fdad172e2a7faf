#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace rigcal {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

/// Input data or configuration violates a documented precondition.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// An optimization stage failed to produce a usable estimate.
class SolverError : public std::runtime_error {
 public:
  explicit SolverError(const std::string& what) : std::runtime_error(what) {}
};

/// The data does not constrain the requested parameters and no prior was
/// available to resolve the ambiguity.
class DegeneracyError : public std::runtime_error {
 public:
  explicit DegeneracyError(const std::string& what) : std::runtime_error(what) {}
};

/// A trajectory was queried outside its valid time span.
class SpanError : public std::runtime_error {
 public:
  SpanError(double t, double t_min, double t_max)
      : std::runtime_error("query time " + std::to_string(t) + " outside valid span [" +
                           std::to_string(t_min) + ", " + std::to_string(t_max) + "]"),
        query_time(t),
        span_min(t_min),
        span_max(t_max) {}

  double query_time;
  double span_min;
  double span_max;
};

constexpr double kGravityMagnitude = 9.81;

}  // namespace rigcal
