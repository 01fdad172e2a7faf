#pragma once

// Reference implementations used as independent cross-checks in the tests.
// These deliberately avoid the code paths of the library: the matrix
// exponential is a truncated power series, quaternion products are expanded
// component by component, and B-spline bases come from the Cox-de Boor
// recursion over the explicit knot vector.

#include <rigcal/types.hpp>

#include <Eigen/Geometry>

#include <vector>

namespace oracle {

/// Matrix exponential of skew(phi) via a 40-term power series.
rigcal::Mat3 expm_series(const rigcal::Vec3& phi);

/// Hamilton product by the component formulas.
Eigen::Quaterniond hamilton(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b);

/// Cox-de Boor basis values N_{j,4}(t) for every control point j of a uniform
/// cubic B-spline with knots tau_j = start + (j - 3) dt. Valid for t strictly
/// inside the span.
std::vector<double> cubic_basis(double start, double dt, int num_cp, double t);

/// De Boor position evaluation (basis-weighted control-point sum).
rigcal::Vec3 bspline_position(const std::vector<rigcal::Vec3>& cp, double start, double dt,
                              double t);

/// Term-by-term product form of the cumulative rotation spline, assembled from
/// the Cox-de Boor basis, Eigen's angle-axis logarithm and the series
/// exponential.
rigcal::Mat3 rotation_product_form(const std::vector<rigcal::Mat3>& cp, double start, double dt,
                                   double t);

}  // namespace oracle
