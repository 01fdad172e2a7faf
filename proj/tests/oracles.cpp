#include "oracles.hpp"

#include <cmath>

namespace oracle {

using rigcal::Mat3;
using rigcal::Vec3;

Mat3 expm_series(const Vec3& phi) {
  Mat3 S;
  S << 0.0, -phi.z(), phi.y(), phi.z(), 0.0, -phi.x(), -phi.y(), phi.x(), 0.0;
  Mat3 result = Mat3::Identity();
  Mat3 term = Mat3::Identity();
  for (int k = 1; k <= 40; ++k) {
    term = (term * S).eval() / static_cast<double>(k);
    result += term;
  }
  return result;
}

Eigen::Quaterniond hamilton(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b) {
  Eigen::Quaterniond r;
  r.w() = a.w() * b.w() - a.x() * b.x() - a.y() * b.y() - a.z() * b.z();
  r.x() = a.w() * b.x() + a.x() * b.w() + a.y() * b.z() - a.z() * b.y();
  r.y() = a.w() * b.y() - a.x() * b.z() + a.y() * b.w() + a.z() * b.x();
  r.z() = a.w() * b.z() + a.x() * b.y() - a.y() * b.x() + a.z() * b.w();
  return r;
}

namespace {

double coxdeboor(const std::vector<double>& tau, int j, int k, double t) {
  if (k == 1) {
    return (t >= tau[j] && t < tau[j + 1]) ? 1.0 : 0.0;
  }
  double left = 0.0, right = 0.0;
  const double dl = tau[j + k - 1] - tau[j];
  const double dr = tau[j + k] - tau[j + 1];
  if (dl > 0.0) left = (t - tau[j]) / dl * coxdeboor(tau, j, k - 1, t);
  if (dr > 0.0) right = (tau[j + k] - t) / dr * coxdeboor(tau, j + 1, k - 1, t);
  return left + right;
}

}  // namespace

std::vector<double> cubic_basis(double start, double dt, int num_cp, double t) {
  std::vector<double> tau(num_cp + 4);
  for (int j = 0; j < num_cp + 4; ++j) tau[j] = start + (j - 3) * dt;
  std::vector<double> basis(num_cp);
  for (int j = 0; j < num_cp; ++j) basis[j] = coxdeboor(tau, j, 4, t);
  return basis;
}

Vec3 bspline_position(const std::vector<Vec3>& cp, double start, double dt, double t) {
  const std::vector<double> b = cubic_basis(start, dt, static_cast<int>(cp.size()), t);
  Vec3 p = Vec3::Zero();
  for (size_t j = 0; j < cp.size(); ++j) p += b[j] * cp[j];
  return p;
}

Mat3 rotation_product_form(const std::vector<Mat3>& cp, double start, double dt, double t) {
  const int num_cp = static_cast<int>(cp.size());
  const std::vector<double> b = cubic_basis(start, dt, num_cp, t);
  const int i = std::min(static_cast<int>(std::floor((t - start) / dt)), num_cp - 4);

  // Cumulative weights over the four active control points.
  double lambda[3];
  lambda[0] = b[i + 1] + b[i + 2] + b[i + 3];
  lambda[1] = b[i + 2] + b[i + 3];
  lambda[2] = b[i + 3];

  Mat3 R = cp[i];
  for (int j = 0; j < 3; ++j) {
    const Mat3 rel = cp[i + j].transpose() * cp[i + j + 1];
    const Eigen::AngleAxisd aa(rel);
    const Vec3 d = aa.angle() * aa.axis();
    R = R * expm_series(lambda[j] * d);
  }
  return R;
}

}  // namespace oracle
