#pragma once

#include <cmath>
#include <optional>
#include <string>

#include <Eigen/Core>

#include "qcurv/barycenter.hpp"
#include "qcurv/errors.hpp"
#include "qcurv/product.hpp"

namespace qcurv {

/// A function on a product 4-manifold.
///
/// Representations: coefficients in the truncated product basis, node
/// values, and (for bubble test functions) an analytic descriptor. A field
/// built from coefficients is band-limited and its node values are exact
/// syntheses; a field built from node values carries a lossy projection.
class ScalarField {
 public:
  static ScalarField from_coefficients(ManifoldPtr m, Eigen::VectorXd coeffs) {
    if (coeffs.size() != m->mode_count()) throw ConfigError("field: coefficient count does not match the basis");
    ScalarField f(std::move(m));
    if (!f.m_->spectral_only()) f.values_ = f.m_->synthesize(coeffs);
    f.coeffs_ = std::move(coeffs);
    f.band_limited_ = true;
    return f;
  }

  static ScalarField from_node_values(ManifoldPtr m, Eigen::MatrixXd values) {
    m->require_nodes("field from node values");
    if (values.rows() != m->nodes_a() || values.cols() != m->nodes_b())
      throw ConfigError("field: node value array does not match the grid");
    ScalarField f(std::move(m));
    f.coeffs_ = f.m_->analyze(values);
    f.values_ = std::move(values);
    f.band_limited_ = false;
    return f;
  }

  static ScalarField constant(ManifoldPtr m, double c) {
    Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(m->mode_count());
    coeffs[0] = m->constant_coefficient(c);
    return from_coefficients(std::move(m), std::move(coeffs));
  }

  /// Bubble field; node values are attached when the model has nodes.
  static ScalarField from_bubble(ManifoldPtr m, BubbleTerm term, std::optional<Eigen::MatrixXd> values) {
    ScalarField f(std::move(m));
    if (values) {
      f.coeffs_ = f.m_->analyze(*values);
      f.values_ = std::move(values);
    }
    f.bubble_ = std::move(term);
    f.band_limited_ = false;
    return f;
  }

  const ManifoldPtr& manifold() const { return m_; }
  bool band_limited() const { return band_limited_; }
  bool has_coefficients() const { return coeffs_.has_value(); }
  bool has_node_values() const { return values_.has_value(); }
  const std::optional<BubbleTerm>& bubble() const { return bubble_; }

  const Eigen::VectorXd& coefficients() const {
    if (!coeffs_) throw SpectralOnlyError("field has no basis coefficients");
    return *coeffs_;
  }
  const Eigen::MatrixXd& node_values() const {
    if (!values_) throw SpectralOnlyError("field has no node values");
    return *values_;
  }

  /// True when every non-constant coefficient vanishes (band-limited fields only).
  bool is_constant() const {
    return band_limited_ && coeffs_ && coeffs_->tail(coeffs_->size() - 1).cwiseAbs().maxCoeff() == 0.0;
  }

  /// Mean value from the constant coefficient (exact for band-limited fields).
  double mean_from_coefficients() const { return coefficients()[0] / std::sqrt(m_->volume()); }

  ScalarField scaled(double t) const {
    ScalarField f = *this;
    if (f.coeffs_) *f.coeffs_ *= t;
    if (f.values_) *f.values_ *= t;
    if (f.bubble_) {
      f.bubble_->scale *= t;
      f.bubble_->shift *= t;
    }
    return f;
  }

  ScalarField shifted(double c) const {
    ScalarField f = *this;
    if (f.coeffs_) (*f.coeffs_)[0] += m_->constant_coefficient(c);
    if (f.values_) f.values_->array() += c;
    if (f.bubble_) f.bubble_->shift += c;
    return f;
  }

  /// Sum of two band-limited fields.
  ScalarField operator+(const ScalarField& other) const {
    if (!band_limited_ || !other.band_limited_) throw ConfigError("field sum requires band-limited operands");
    if (m_ != other.m_) throw ConfigError("field sum across different manifolds");
    return from_coefficients(m_, *coeffs_ + *other.coeffs_);
  }

 private:
  explicit ScalarField(ManifoldPtr m) : m_(std::move(m)) {}

  ManifoldPtr m_;
  std::optional<Eigen::VectorXd> coeffs_;
  std::optional<Eigen::MatrixXd> values_;
  std::optional<BubbleTerm> bubble_;
  bool band_limited_ = false;
};

}  // namespace qcurv
