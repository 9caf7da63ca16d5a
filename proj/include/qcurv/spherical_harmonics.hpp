#pragma once

#include <cmath>
#include <complex>
#include <numbers>

#include <Eigen/Core>
#include <boost/math/special_functions/spherical_harmonic.hpp>

namespace qcurv {

/// Index of the real harmonic (l, m), -l <= m <= l, in degree-major order.
inline int sh_index(int l, int m) { return l * l + l + m; }

/// Real orthonormal spherical harmonics on the unit sphere, sampled at one point.
///
/// For m > 0 the basis uses sqrt(2) Re Y_l^m, for m < 0 sqrt(2) Im Y_l^|m|.
/// The tangential gradient is returned in the orthonormal frame
/// (e_theta, e_phi); `grad_theta` and `grad_phi` may be null.
inline void real_spherical_harmonics(int lmax, double theta, double phi, Eigen::Ref<Eigen::VectorXd> values,
                                     Eigen::VectorXd* grad_theta = nullptr, Eigen::VectorXd* grad_phi = nullptr) {
  using boost::math::spherical_harmonic;
  const int n = (lmax + 1) * (lmax + 1);
  if (grad_theta) grad_theta->resize(n);
  if (grad_phi) grad_phi->resize(n);
  const double sin_t = std::sin(theta);
  const double cot_t = std::cos(theta) / sin_t;
  const std::complex<double> phase_down = std::polar(1.0, -phi);
  for (int l = 0; l <= lmax; ++l) {
    for (int m = 0; m <= l; ++m) {
      const std::complex<double> y = spherical_harmonic(l, m, theta, phi);
      // d/dtheta Y_l^m = m cot(theta) Y_l^m + sqrt((l-m)(l+m+1)) e^{-i phi} Y_l^{m+1}
      std::complex<double> dy = double(m) * cot_t * y;
      if (m < l) dy += std::sqrt(double((l - m) * (l + m + 1))) * phase_down * spherical_harmonic(l, m + 1, theta, phi);
      // (1/sin theta) d/dphi Y_l^m = i m Y_l^m / sin theta
      const std::complex<double> dphi = std::complex<double>(0.0, double(m)) * y / sin_t;
      if (m == 0) {
        values[sh_index(l, 0)] = y.real();
        if (grad_theta) (*grad_theta)[sh_index(l, 0)] = dy.real();
        if (grad_phi) (*grad_phi)[sh_index(l, 0)] = 0.0;
      } else {
        values[sh_index(l, m)] = std::numbers::sqrt2 * y.real();
        values[sh_index(l, -m)] = std::numbers::sqrt2 * y.imag();
        if (grad_theta) {
          (*grad_theta)[sh_index(l, m)] = std::numbers::sqrt2 * dy.real();
          (*grad_theta)[sh_index(l, -m)] = std::numbers::sqrt2 * dy.imag();
        }
        if (grad_phi) {
          (*grad_phi)[sh_index(l, m)] = std::numbers::sqrt2 * dphi.real();
          (*grad_phi)[sh_index(l, -m)] = std::numbers::sqrt2 * dphi.imag();
        }
      }
    }
  }
}

}  // namespace qcurv
