#pragma once

#include <cmath>
#include <vector>

#include <boost/math/special_functions/legendre.hpp>

#include "qcurv/errors.hpp"

namespace qcurv {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// n-point Gauss-Legendre rule on [-1, 1], nodes ascending.
inline QuadratureRule gauss_legendre(int n) {
  if (n < 1) throw ConfigError("Gauss-Legendre rule needs at least one node");
  const std::vector<double> positive = boost::math::legendre_p_zeros<double>(n);
  QuadratureRule rule;
  auto weight = [n](double x) {
    const double dp = boost::math::legendre_p_prime(n, x);
    return 2.0 / ((1.0 - x * x) * dp * dp);
  };
  for (auto it = positive.rbegin(); it != positive.rend(); ++it) {
    if (*it == 0.0) continue;
    rule.nodes.push_back(-*it);
    rule.weights.push_back(weight(*it));
  }
  if (n % 2 == 1) {
    rule.nodes.push_back(0.0);
    rule.weights.push_back(weight(0.0));
  }
  for (double x : positive) {
    if (x == 0.0) continue;
    rule.nodes.push_back(x);
    rule.weights.push_back(weight(x));
  }
  return rule;
}

/// Affine image of a rule on [-1, 1] onto [a, b].
inline QuadratureRule map_rule(const QuadratureRule& ref, double a, double b) {
  QuadratureRule out;
  const double half = 0.5 * (b - a);
  for (std::size_t i = 0; i < ref.nodes.size(); ++i) {
    out.nodes.push_back(a + half * (ref.nodes[i] + 1.0));
    out.weights.push_back(half * ref.weights[i]);
  }
  return out;
}

}  // namespace qcurv
