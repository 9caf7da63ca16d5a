#pragma once

// Command driver behind the `qcurv` executable: configuration parsing,
// model construction, command execution and report serialization.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "qcurv/qcurv.hpp"

namespace qcurv::app {

using json = nlohmann::ordered_json;

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"invariants", "spectrum", "solve", "continuation", "adams",
                                              "improved-adams", "bubble", "project", "green", "minmax"};
  return names;
}

/// FNV-1a 64-bit hash, hex encoded.
inline std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

/// Reads one JSON object, records resolved values and rejects unknown keys.
class Section {
 public:
  Section(const json& src, std::string path, json& resolved) : src_(src), path_(std::move(path)), out_(resolved) {
    if (!src_.is_null() && !src_.is_object()) fail("must be an object");
    if (!out_.is_object()) out_ = json::object();
  }

  [[noreturn]] void fail(const std::string& msg) const { throw ConfigError("config: " + path_ + ": " + msg); }

  bool has(const std::string& key) const { return src_.is_object() && src_.contains(key) && !src_[key].is_null(); }

  double number(const std::string& key, std::optional<double> def, const std::function<bool(double)>& ok = nullptr,
                const std::string& rule = "") {
    used_.push_back(key);
    double v;
    if (has(key)) {
      if (!src_[key].is_number()) fail(key + " must be a number");
      v = src_[key].get<double>();
    } else if (def) {
      v = *def;
    } else {
      fail(key + " is required");
    }
    if (!std::isfinite(v)) fail(key + " must be finite");
    if (ok && !ok(v)) fail(key + " = " + json(v).dump() + " violates: " + rule);
    out_[key] = v;
    return v;
  }

  int integer(const std::string& key, std::optional<int> def, const std::function<bool(int)>& ok = nullptr,
              const std::string& rule = "") {
    used_.push_back(key);
    int v;
    if (has(key)) {
      if (!src_[key].is_number_integer()) fail(key + " must be an integer");
      v = src_[key].get<int>();
    } else if (def) {
      v = *def;
    } else {
      fail(key + " is required");
    }
    if (ok && !ok(v)) fail(key + " = " + std::to_string(v) + " violates: " + rule);
    out_[key] = v;
    return v;
  }

  bool boolean(const std::string& key, bool def) {
    used_.push_back(key);
    bool v = def;
    if (has(key)) {
      if (!src_[key].is_boolean()) fail(key + " must be true or false");
      v = src_[key].get<bool>();
    }
    out_[key] = v;
    return v;
  }

  std::string string(const std::string& key, std::optional<std::string> def, const std::vector<std::string>& choices = {}) {
    used_.push_back(key);
    std::string v;
    if (has(key)) {
      if (!src_[key].is_string()) fail(key + " must be a string");
      v = src_[key].get<std::string>();
    } else if (def) {
      v = *def;
    } else {
      fail(key + " is required");
    }
    if (!choices.empty() && std::find(choices.begin(), choices.end(), v) == choices.end()) {
      std::string list;
      for (const auto& c : choices) list += (list.empty() ? "" : ", ") + c;
      fail(key + " = '" + v + "' is not one of: " + list);
    }
    out_[key] = v;
    return v;
  }

  std::vector<double> numbers(const std::string& key, std::optional<std::vector<double>> def,
                              const std::function<bool(double)>& ok = nullptr, const std::string& rule = "") {
    used_.push_back(key);
    std::vector<double> v;
    if (has(key)) {
      if (!src_[key].is_array()) fail(key + " must be an array of numbers");
      for (const auto& e : src_[key]) {
        if (!e.is_number()) fail(key + " must contain numbers only");
        v.push_back(e.get<double>());
      }
    } else if (def) {
      v = *def;
    } else {
      fail(key + " is required");
    }
    for (double x : v)
      if (!std::isfinite(x) || (ok && !ok(x))) fail(key + " entry " + json(x).dump() + " violates: " + rule);
    out_[key] = v;
    return v;
  }

  /// Points given as [a, b] node index pairs.
  std::vector<ProductPoint> points(const std::string& key, std::optional<std::vector<ProductPoint>> def) {
    used_.push_back(key);
    std::vector<ProductPoint> v;
    if (has(key)) {
      if (!src_[key].is_array()) fail(key + " must be an array of [a, b] pairs");
      for (const auto& e : src_[key]) {
        if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer())
          fail(key + " entries must be [a, b] integer pairs");
        v.push_back({e[0].get<int>(), e[1].get<int>()});
      }
    } else if (def) {
      v = *def;
    } else {
      fail(key + " is required");
    }
    json arr = json::array();
    for (const auto& p : v) arr.push_back({p.a, p.b});
    out_[key] = arr;
    return v;
  }

  /// Raw sub-object for a nested section.
  const json& child(const std::string& key) {
    used_.push_back(key);
    static const json null_json;
    return has(key) ? src_[key] : null_json;
  }
  json& resolved_child(const std::string& key) { return out_[key]; }
  const std::string& path() const { return path_; }

  void finish() const {
    if (!src_.is_object()) return;
    for (auto it = src_.begin(); it != src_.end(); ++it)
      if (std::find(used_.begin(), used_.end(), it.key()) == used_.end()) fail("unknown key '" + it.key() + "'");
  }

 private:
  const json& src_;
  std::string path_;
  json& out_;
  std::vector<std::string> used_;
};

struct BarycenterSpec {
  std::vector<Barycenter> listed;
  int random_count = 0;
  int k = 1;
};

/// Everything a command needs, validated.
struct RunConfig {
  json resolved = json::object();
  std::string command;
  std::uint64_t seed = 0;
  std::string out_dir = "out";

  bool sphere4 = false;
  int sphere4_lmax = 5;
  ManifoldPtr manifold;
  PaneitzRoute route = PaneitzRoute::Auto;

  double tol_zero_rel = 1e-8;
  double conformal_sup_bound = 20.0;
  int spectrum_n_low = 20;

  double delta = 0.0;  // cutoff delta
  SolveOptions solver;

  struct Bubble {
    std::vector<double> lambdas;
    std::vector<Barycenter> sigmas;
    int random_k = 2;
    int random_count = 0;
  } bubble;

  struct Adams {
    std::vector<double> lambdas;
    ProductPoint center;
    int random_samples = 100;
    std::vector<double> random_amplitudes;
    double random_s_cap = INFINITY;
  } adams;

  struct Improved {
    int ell = 1;
    double gamma0 = 0.4;
    double delta0 = 0.0;
    double radius = 0.0;
    std::vector<ProductPoint> centers;
    std::vector<double> lambdas;
  } improved;

  struct Project {
    int k = 2;
    int samples = 20;
    double lambda = 80.0;
    double radius = 0.0;
    double eps = 0.05;
    int candidates = 64;
    int max_atoms = 200;
  } project;

  struct Green {
    std::vector<ProductPoint> poles;
    int n_modes = 0;
    bool rescale = true;
  } green;

  struct Minmax {
    int k = 2;
    double lambda_bar = 80.0;
    int n_sigma = 10;
    int n_t = 21;
    std::vector<double> rhos;
  } minmax;
};

namespace detail {

inline SurfaceFactor parse_factor(Section s, const std::filesystem::path& base_dir) {
  const std::string kind = s.string("kind", std::nullopt, {"sphere", "flat-torus", "mesh", "synthetic"});
  SurfaceFactor f;
  if (kind == "sphere") {
    const int lmax = s.integer("lmax", 6, [](int v) { return v >= 2; }, "lmax >= 2");
    const int nt = s.integer("n_theta", 2 * lmax + 2, [&](int v) { return v >= 2 * lmax + 2; }, "n_theta >= 2 lmax + 2");
    f = make_sphere_factor(lmax, nt);
  } else if (kind == "flat-torus") {
    const double l1 = s.number("l1", 2.0 * std::numbers::pi, [](double v) { return v > 0; }, "l1 > 0");
    const double l2 = s.number("l2", 2.0 * std::numbers::pi, [](double v) { return v > 0; }, "l2 > 0");
    const int kmax = s.integer("kmax", 4, [](int v) { return v >= 1; }, "kmax >= 1");
    f = make_flat_torus_factor(l1, l2, kmax);
  } else if (kind == "mesh") {
    std::filesystem::path p = s.string("path", std::nullopt);
    if (p.is_relative()) p = base_dir / p;
    const int n_eig = s.integer("n_eig", 30, [](int v) { return v >= 2; }, "n_eig >= 2");
    f = load_mesh_factor(p.string(), n_eig);
  } else {
    const double kappa = s.number("kappa", std::nullopt);
    const auto ev = s.numbers("eigenvalues", std::nullopt, [](double v) { return v >= 0; }, "eigenvalues >= 0");
    const double area = s.number("area", std::nullopt, [](double v) { return v > 0; }, "area > 0");
    SyntheticOptions so;
    so.injectivity_radius = s.number("injectivity_radius", 0.0, [](double v) { return v >= 0; }, ">= 0 (0: default)");
    so.diameter = s.number("diameter", 0.0, [](double v) { return v >= 0; }, ">= 0 (0: default)");
    so.anchors = s.integer("anchors", 4, [](int v) { return v >= 1; }, "anchors >= 1");
    so.anchor_separation = s.number("anchor_separation", 0.0, [](double v) { return v >= 0; }, ">= 0 (0: default)");
    f = make_synthetic_factor(kappa, ev, area, so);
  }
  s.finish();
  return f;
}

inline Barycenter parse_barycenter(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) throw ConfigError("config: " + path + " must be a non-empty array of atoms");
  Barycenter b;
  for (const auto& at : j) {
    if (!at.is_object()) throw ConfigError("config: " + path + " atoms must be objects {t, a, b}");
    for (auto it = at.begin(); it != at.end(); ++it)
      if (it.key() != "t" && it.key() != "a" && it.key() != "b")
        throw ConfigError("config: " + path + ": unknown key '" + it.key() + "'");
    if (!at.contains("t") || !at["t"].is_number() || !at.contains("a") || !at["a"].is_number_integer() ||
        !at.contains("b") || !at["b"].is_number_integer())
      throw ConfigError("config: " + path + " atoms need numeric t and integer a, b");
    b.atoms.push_back({at["t"].get<double>(), {at["a"].get<int>(), at["b"].get<int>()}});
  }
  return b;
}

inline json barycenter_json(const Barycenter& b) {
  json arr = json::array();
  for (const auto& at : b.atoms) arr.push_back({{"t", at.t}, {"a", at.x.a}, {"b", at.x.b}});
  return arr;
}

inline std::vector<double> geometric_lambdas() {
  std::vector<double> v;
  for (int j = 0; j <= 20; ++j) v.push_back(5.0 * std::pow(2.0, j / 4.0));
  return v;
}

}  // namespace detail

/// Parses and validates a configuration; builds the model.
inline RunConfig parse_config(const json& root, const std::string& command, std::optional<std::uint64_t> seed_override,
                              std::optional<std::string> out_override, const std::filesystem::path& base_dir = ".") {
  if (std::find(command_names().begin(), command_names().end(), command) == command_names().end())
    throw ConfigError("unknown command '" + command + "'");
  if (!root.is_object()) throw ConfigError("config: top level must be a JSON object");
  RunConfig rc;
  rc.command = command;
  Section top(root, "config", rc.resolved);

  // scalar keys first so that the resolved file lists them on top
  {
    const double s = top.number("seed", 0.0, [](double v) { return v >= 0 && v == std::floor(v) && v < 9.007e15; },
                                "non-negative integer");
    rc.seed = seed_override ? *seed_override : static_cast<std::uint64_t>(s);
    rc.resolved["seed"] = rc.seed;
  }
  rc.out_dir = out_override ? *out_override : top.string("out_dir", std::string("out"));
  if (out_override) {
    top.string("out_dir", std::string("out"));
    rc.resolved["out_dir"] = *out_override;
  }

  {
    Section model(top.child("model"), "model", rc.resolved["model"]);
    const std::string kind = model.string("kind", std::string("product"), {"product", "sphere4"});
    if (kind == "sphere4") {
      rc.sphere4 = true;
      rc.sphere4_lmax = model.integer("lmax", 5, [](int v) { return v >= 1 && v <= 40; }, "1 <= lmax <= 40");
    } else {
      SurfaceFactor fa = detail::parse_factor(Section(model.child("factor_a"), "model.factor_a",
                                                      model.resolved_child("factor_a")),
                                              base_dir);
      SurfaceFactor fb = detail::parse_factor(Section(model.child("factor_b"), "model.factor_b",
                                                      model.resolved_child("factor_b")),
                                              base_dir);
      std::optional<double> s_max;
      if (model.has("s_max")) s_max = model.number("s_max", std::nullopt, [](double v) { return v > 0; }, "s_max > 0");
      const std::string route = model.string("paneitz_route", std::string("auto"), {"auto", "closed-form", "quadrature"});
      rc.route = route == "closed-form" ? PaneitzRoute::ClosedForm
                 : route == "quadrature" ? PaneitzRoute::Quadrature
                                         : PaneitzRoute::Auto;
      rc.manifold = make_product(std::move(fa), std::move(fb), s_max);
      rc.resolved["model"]["s_max"] = rc.manifold->s_max();
    }
    model.finish();
  }

  {
    Section tol(top.child("tolerances"), "tolerances", rc.resolved["tolerances"]);
    rc.tol_zero_rel = tol.number("zero_rel", 1e-8, [](double v) { return v > 0 && v < 1; }, "0 < zero_rel < 1");
    rc.conformal_sup_bound =
        tol.number("conformal_sup_bound", 20.0, [](double v) { return v > 0; }, "conformal_sup_bound > 0");
    rc.solver.residual_tol = tol.number("residual", 1e-8, [](double v) { return v > 0; }, "residual > 0");
    rc.solver.grad_tol = tol.number("gradient", 1e-10, [](double v) { return v > 0; }, "gradient > 0");
    tol.finish();
  }
  {
    Section sp(top.child("spectrum"), "spectrum", rc.resolved["spectrum"]);
    rc.spectrum_n_low = sp.integer("n_low", 20, [](int v) { return v >= 1; }, "n_low >= 1");
    sp.finish();
  }

  const bool product = !rc.sphere4;
  double min_diam = 1.0, inj = 1.0;
  if (product) {
    min_diam = std::min(rc.manifold->factor_a().diameter, rc.manifold->factor_b().diameter);
    inj = rc.manifold->injectivity_radius();
  }
  {
    Section cut(top.child("cutoff"), "cutoff", rc.resolved["cutoff"]);
    rc.delta = cut.number("delta", 0.2 * min_diam, [](double v) { return v > 0; }, "delta > 0");
    cut.finish();
    if (product && std::isfinite(inj) && !(2.0 * rc.delta < inj))
      throw ConfigError("config: cutoff.delta = " + std::to_string(rc.delta) +
                        " must be below half the injectivity radius " + std::to_string(inj));
  }

  {
    Section s(top.child("solver"), "solver", rc.resolved["solver"]);
    auto& o = rc.solver;
    o.max_iters = s.integer("max_iters", 500, [](int v) { return v >= 1; }, "max_iters >= 1");
    o.newton_max_iters = s.integer("newton_max_iters", 30, [](int v) { return v >= 1; }, "newton_max_iters >= 1");
    o.armijo = s.number("armijo", 1e-4, [](double v) { return v > 0 && v < 1; }, "0 < armijo < 1");
    o.shrink = s.number("shrink", 0.5, [](double v) { return v > 0 && v < 1; }, "0 < shrink < 1");
    o.max_backtracks = s.integer("max_backtracks", 60, [](int v) { return v >= 1; }, "max_backtracks >= 1");
    o.rho = s.number("rho", 1.0, [](double v) { return v >= 0.5 && v <= 1.5; }, "0.5 <= rho <= 1.5");
    o.rho_schedule = s.numbers("rho_schedule", std::vector<double>{0.9, 0.925, 0.95, 0.975, 1.0},
                               [](double v) { return v >= 0.5 && v <= 1.5; }, "within [0.5, 1.5]");
    const std::string init = s.string("init", std::string("random"), {"zero", "random", "bubble"});
    o.init = init == "zero" ? InitKind::Zero : init == "random" ? InitKind::Random : InitKind::Bubble;
    o.init_amplitude = s.number("init_amplitude", 0.5, [](double v) { return v > 0; }, "init_amplitude > 0");
    o.basin_factor = s.number("basin_factor", 1e-2, [](double v) { return v > 0; }, "basin_factor > 0");
    o.rho_floor = s.number("rho_floor", 1e-3, [](double v) { return v > 0; }, "rho_floor > 0");
    if (o.init == InitKind::Bubble) {
      const double lam = s.number("init_lambda", 5.0, [](double v) { return v > 0; }, "init_lambda > 0");
      Barycenter b = s.has("init_sigma") ? detail::parse_barycenter(s.child("init_sigma"), "solver.init_sigma")
                                         : Barycenter{{{1.0, {0, 0}}}};
      s.child("init_sigma");
      s.resolved_child("init_sigma") = detail::barycenter_json(b);
      o.init_bubble = BubbleTerm{b, lam, CutoffSpec{rc.delta}, 1.0, 0.0};
    } else {
      s.child("init_lambda");
      s.child("init_sigma");
    }
    s.finish();
    o.seed = rc.seed;
    o.validate();
  }

  {
    Section s(top.child("bubble"), "bubble", rc.resolved["bubble"]);
    rc.bubble.lambdas = s.numbers("lambdas", std::vector<double>{10, 20, 40, 80}, [](double v) { return v > 0; },
                                  "lambda > 0");
    if (s.has("sigmas")) {
      const json& arr = s.child("sigmas");
      if (!arr.is_array()) s.fail("sigmas must be an array of barycenters");
      json out = json::array();
      for (std::size_t i = 0; i < arr.size(); ++i) {
        rc.bubble.sigmas.push_back(detail::parse_barycenter(arr[i], "bubble.sigmas[" + std::to_string(i) + "]"));
        out.push_back(detail::barycenter_json(rc.bubble.sigmas.back()));
      }
      s.resolved_child("sigmas") = out;
    } else {
      s.child("sigmas");
      s.resolved_child("sigmas") = json::array();
    }
    rc.bubble.random_k = s.integer("random_k", 2, [](int v) { return v >= 1; }, "random_k >= 1");
    rc.bubble.random_count = s.integer("random_count", rc.bubble.sigmas.empty() ? 10 : 0,
                                       [](int v) { return v >= 0; }, "random_count >= 0");
    s.finish();
  }

  {
    Section s(top.child("adams"), "adams", rc.resolved["adams"]);
    rc.adams.lambdas = s.numbers("lambdas", detail::geometric_lambdas(), [](double v) { return v > 0; }, "lambda > 0");
    const auto c = s.points("center", std::vector<ProductPoint>{{0, 0}});
    if (c.size() != 1) s.fail("center must hold exactly one [a, b] pair");
    rc.adams.center = c[0];
    rc.adams.random_samples = s.integer("random_samples", 100, [](int v) { return v >= 0; }, "random_samples >= 0");
    rc.adams.random_amplitudes = s.numbers("random_amplitudes", std::vector<double>{0.25, 0.5, 1.0, 2.0, 3.0},
                                           [](double v) { return v > 0; }, "amplitude > 0");
    rc.adams.random_s_cap = s.number("random_s_cap", 1e300, [](double v) { return v > 0; }, "random_s_cap > 0");
    s.finish();
  }

  {
    Section s(top.child("improved_adams"), "improved_adams", rc.resolved["improved_adams"]);
    rc.improved.ell = s.integer("ell", 1, [](int v) { return v >= 0; }, "ell >= 0");
    rc.improved.gamma0 = s.number("gamma0", 0.4, [](double v) { return v > 0 && v <= 1; }, "0 < gamma0 <= 1");
    rc.improved.delta0 = s.number("delta0", 4.0 * rc.delta, [](double v) { return v > 0; }, "delta0 > 0");
    rc.improved.radius = s.number("radius", 2.0 * rc.delta, [](double v) { return v > 0; }, "radius > 0");
    std::vector<ProductPoint> def;
    if (product && rc.improved.ell >= 1 && !rc.manifold->spectral_only())
      for (const auto& at : spread_barycenter(*rc.manifold, rc.improved.ell + 1).atoms) def.push_back(at.x);
    rc.improved.centers = s.points("centers", def);
    rc.improved.lambdas = s.numbers("lambdas", detail::geometric_lambdas(), [](double v) { return v > 0; }, "lambda > 0");
    s.finish();
  }

  {
    Section s(top.child("project"), "project", rc.resolved["project"]);
    rc.project.k = s.integer("k", 2, [](int v) { return v >= 1; }, "k >= 1");
    rc.project.samples = s.integer("samples", 20, [](int v) { return v >= 1; }, "samples >= 1");
    rc.project.lambda = s.number("lambda", 80.0, [](double v) { return v > 0; }, "lambda > 0");
    rc.project.radius = s.number("radius", 2.0 * rc.delta, [](double v) { return v > 0; }, "radius > 0");
    rc.project.eps = s.number("eps", 0.05, [](double v) { return v > 0 && v < 1; }, "0 < eps < 1");
    rc.project.candidates = s.integer("candidates", 64, [](int v) { return v >= 1; }, "candidates >= 1");
    rc.project.max_atoms = s.integer("max_atoms", 200, [](int v) { return v >= 1; }, "max_atoms >= 1");
    s.finish();
  }

  {
    Section s(top.child("green"), "green", rc.resolved["green"]);
    std::vector<ProductPoint> def{{0, 0}};
    if (product && !rc.manifold->spectral_only()) {
      const int na = rc.manifold->nodes_a(), nb = rc.manifold->nodes_b();
      def = {{0, 0}, {na / 3, nb / 2}, {na / 2, nb / 5}, {(2 * na) / 3, (3 * nb) / 4}, {na - 1, nb - 1}};
    }
    rc.green.poles = s.points("poles", def);
    if (rc.green.poles.empty()) s.fail("poles must not be empty");
    rc.green.n_modes = s.integer("n_modes", 0, [](int v) { return v >= 0; }, "n_modes >= 0 (0: all)");
    rc.green.rescale = s.boolean("rescale", true);
    s.finish();
  }

  {
    Section s(top.child("minmax"), "minmax", rc.resolved["minmax"]);
    rc.minmax.k = s.integer("k", 2, [](int v) { return v >= 1; }, "k >= 1");
    rc.minmax.lambda_bar = s.number("lambda_bar", 80.0, [](double v) { return v > 0; }, "lambda_bar > 0");
    rc.minmax.n_sigma = s.integer("n_sigma", 10, [](int v) { return v >= 1; }, "n_sigma >= 1");
    rc.minmax.n_t = s.integer("n_t", 21, [](int v) { return v >= 2; }, "n_t >= 2");
    rc.minmax.rhos = s.numbers("rhos", std::vector<double>{0.9, 0.95, 1.0, 1.05, 1.1},
                               [](double v) { return v >= 0.5 && v <= 1.5; }, "within [0.5, 1.5]");
    s.finish();
  }
  top.finish();

  if (rc.sphere4 && command != "invariants" && command != "spectrum")
    throw ConfigError("command '" + command + "' needs a product model; sphere4 supports invariants and spectrum");
  return rc;
}

/// One CSV table: header plus rows of already formatted cells.
struct CsvTable {
  std::string name;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  template <class... Ts>
  void add(const Ts&... cells) {
    rows.push_back({cell(cells)...});
  }
  static std::string cell(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
  }
  static std::string cell(int v) { return std::to_string(v); }
  static std::string cell(long v) { return std::to_string(v); }
  static std::string cell(std::size_t v) { return std::to_string(v); }
  static std::string cell(const std::string& v) { return v; }
  static std::string cell(const char* v) { return v; }

  std::string str() const {
    std::string out;
    for (std::size_t i = 0; i < header.size(); ++i) out += (i ? "," : "") + header[i];
    out += "\n";
    for (const auto& r : rows) {
      for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + r[i];
      out += "\n";
    }
    return out;
  }
};

struct RunResult {
  json report;
  std::vector<CsvTable> tables;
};

namespace detail {

inline json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json spectrum_json(const SpectrumSummary& s) {
  return {{"negative_count", s.negative_count}, {"kernel_dim", s.kernel_dim}, {"tol_zero", s.tol_zero},
          {"lowest", s.lowest}};
}

inline json factor_summary(const SurfaceFactor& f) {
  const FactorChecks c = check_factor(f);
  json j = {{"kind", to_string(f.kind)},
            {"label", f.label},
            {"area", f.area},
            {"euler_char", f.euler_char},
            {"kappa", num(f.kappa)},
            {"eigenpairs", f.eigen_count()},
            {"nodes", f.node_count()},
            {"diameter", f.diameter},
            {"injectivity_radius", num(f.injectivity_radius)},
            {"checks",
             {{"area_error", c.area_error},
              {"gram_residual", c.gram_residual},
              {"gauss_bonnet_error", c.gauss_bonnet_error},
              {"lambda0", c.lambda0}}}};
  return j;
}

/// Max |Gram - I| of the product basis, from the factor Gram matrices.
inline double product_gram_residual(const ProductManifold4D& m) {
  if (m.spectral_only()) return 0.0;
  const auto& fa = m.factor_a();
  const auto& fb = m.factor_b();
  const Eigen::MatrixXd ga = fa.eigenfunctions.transpose() * fa.weights.asDiagonal() * fa.eigenfunctions;
  const Eigen::MatrixXd gb = fb.eigenfunctions.transpose() * fb.weights.asDiagonal() * fb.eigenfunctions;
  double worst = 0.0;
  const auto& modes = m.modes();
  for (std::size_t p = 0; p < modes.size(); ++p)
    for (std::size_t q = 0; q < modes.size(); ++q) {
      const double g = ga(modes[p].i, modes[q].i) * gb(modes[p].j, modes[q].j);
      worst = std::max(worst, std::abs(g - (p == q ? 1.0 : 0.0)));
    }
  return worst;
}

inline json model_summary(const RunConfig& rc, const ConformalProblem* prob) {
  if (rc.sphere4) {
    const Sphere4Model s4{rc.sphere4_lmax};
    return {{"kind", "sphere4"},
            {"lmax", s4.lmax},
            {"volume", s4.volume()},
            {"euler_char", Sphere4Model::euler_char},
            {"k_p", total_q(s4)},
            {"gauss_bonnet_defect", gauss_bonnet_defect(s4)}};
  }
  const auto& m = *rc.manifold;
  json j = {{"kind", "product"},
            {"spectral_only", m.spectral_only()},
            {"volume", m.volume()},
            {"euler_char", m.euler_char()},
            {"constant_curvature", m.constant_curvature()},
            {"factor_a", factor_summary(m.factor_a())},
            {"factor_b", factor_summary(m.factor_b())},
            {"product_gram_residual", product_gram_residual(m)}};
  if (prob) {
    j["k_p"] = prob->k_p;
    j["k_p_over_8pi2"] = prob->k_p / (8.0 * std::numbers::pi * std::numbers::pi);
    j["gauss_bonnet_defect"] = gauss_bonnet_defect(rc.manifold);
    j["paneitz_representation"] =
        prob->paneitz.representation() == PaneitzOperator::Representation::Diagonal ? "diagonal" : "dense";
  }
  return j;
}

inline json history_json(const std::vector<IterateRecord>& h) {
  json arr = json::array();
  for (const auto& r : h)
    arr.push_back({{"phase", r.phase},
                   {"energy", r.energy},
                   {"grad_norm", r.grad_norm},
                   {"residual_norm", r.residual_norm},
                   {"sup_norm", r.sup_norm},
                   {"step", r.step}});
  return arr;
}

inline json regime_json(const Regime& r) {
  return {{"tag", r.tag}, {"k", r.k}, {"negative_count", r.negative_count}};
}

inline json solve_json(const SolveReport& r) {
  return {{"status", r.status},
          {"regime", regime_json(r.regime)},
          {"rho", r.rho},
          {"iterations", r.history.size()},
          {"residual", r.residual},
          {"grad_norm", r.grad_norm},
          {"sup_norm", r.sup_norm},
          {"q_bar", r.q_bar},
          {"q_tilde_mean", r.q_tilde_mean},
          {"q_tilde_deviation", r.q_tilde_deviation},
          {"solved_k_p", r.solved_k_p},
          {"k_p_drift", r.k_p_drift},
          {"normalized_log_integral", r.normalized_log_integral},
          {"normalized_mean", r.normalized_coefficients.size() ? r.normalized_coefficients[0] : 0.0}};
}

inline void add_history_table(RunResult& res, const std::string& name, const std::vector<IterateRecord>& h,
                              double rho) {
  CsvTable t{name, {"rho", "iter", "phase", "energy", "grad_norm", "residual_norm", "sup_norm", "step"}, {}};
  for (std::size_t i = 0; i < h.size(); ++i)
    t.add(rho, i, h[i].phase, h[i].energy, h[i].grad_norm, h[i].residual_norm, h[i].sup_norm, h[i].step);
  res.tables.push_back(std::move(t));
}

inline std::vector<Barycenter> bubble_sigmas(const RunConfig& rc, Rng& rng) {
  std::vector<Barycenter> out = rc.bubble.sigmas;
  for (int i = 0; i < rc.bubble.random_count; ++i)
    out.push_back(random_barycenter(*rc.manifold, rng, rc.bubble.random_k, 4.0 * rc.delta));
  if (out.empty()) throw ConfigError("config: bubble: no sigmas given and random_count = 0");
  return out;
}

}  // namespace detail

inline RunResult run_invariants(const RunConfig& rc) {
  RunResult res;
  CsvTable t{"invariants", {"name", "value"}, {}};
  if (rc.sphere4) {
    const Sphere4Model s4{rc.sphere4_lmax};
    const SpectrumSummary sp = spectrum(s4, rc.spectrum_n_low, rc.tol_zero_rel);
    res.report["result"] = {{"k_p", total_q(s4)},
                            {"q", q_curvature(s4)},
                            {"gauss_bonnet_defect", gauss_bonnet_defect(s4)},
                            {"spectrum", detail::spectrum_json(sp)}};
    t.add("k_p", total_q(s4));
    t.add("gauss_bonnet_defect", gauss_bonnet_defect(s4));
    res.tables.push_back(std::move(t));
    return res;
  }
  const ConformalProblem prob = make_problem(rc.manifold, rc.route);
  const SpectrumSummary sp = spectrum(prob.paneitz, rc.spectrum_n_low, rc.tol_zero_rel);
  const auto& m = *rc.manifold;
  json r = {{"k_p", prob.k_p},
            {"k_p_over_8pi2", prob.k_p / (8.0 * std::numbers::pi * std::numbers::pi)},
            {"gauss_bonnet_defect", gauss_bonnet_defect(rc.manifold)},
            {"volume", m.volume()},
            {"euler_char", m.euler_char()},
            {"spectrum", detail::spectrum_json(sp)}};
  try {
    r["regime"] = detail::regime_json(classify_regime(prob.k_p, sp.negative_count));
  } catch (const PreconditionError& e) {
    r["regime"] = {{"tag", "degenerate"}, {"message", e.what()}};
  }
  if (!m.spectral_only()) {
    const Eigen::MatrixXd q = prob.q.node_values();
    const Eigen::MatrixXd wn = m.weyl_norm_sq();
    r["q_min"] = q.minCoeff();
    r["q_max"] = q.maxCoeff();
    r["scalar_curvature_min"] = m.scalar_curvature().minCoeff();
    r["scalar_curvature_max"] = m.scalar_curvature().maxCoeff();
    r["weyl_norm_sq_min"] = wn.minCoeff();
    r["weyl_norm_sq_max"] = wn.maxCoeff();
  } else {
    r["q_constant"] = prob.q.mean_from_coefficients();
  }
  for (const auto& key : {"k_p", "k_p_over_8pi2", "gauss_bonnet_defect", "volume"}) t.add(key, r[key].get<double>());
  t.add("euler_char", static_cast<double>(m.euler_char()));
  t.add("negative_count", static_cast<double>(sp.negative_count));
  t.add("kernel_dim", static_cast<double>(sp.kernel_dim));
  res.report["result"] = r;
  res.tables.push_back(std::move(t));
  return res;
}

inline RunResult run_spectrum(const RunConfig& rc) {
  RunResult res;
  CsvTable t{"eigenvalues", {"index", "eigenvalue"}, {}};
  if (rc.sphere4) {
    const Sphere4Model s4{rc.sphere4_lmax};
    const SpectrumSummary sp = spectrum(s4, rc.spectrum_n_low, rc.tol_zero_rel);
    json degrees = json::array();
    CsvTable d{"sphere4_degrees", {"l", "multiplicity", "laplace_eigenvalue", "paneitz_eigenvalue"}, {}};
    for (int l = 0; l <= s4.lmax; ++l) {
      degrees.push_back({{"l", l},
                         {"multiplicity", Sphere4Model::multiplicity(l)},
                         {"paneitz_eigenvalue", sphere4_paneitz_eigenvalue(l)}});
      d.add(l, Sphere4Model::multiplicity(l), Sphere4Model::laplace_eigenvalue(l), sphere4_paneitz_eigenvalue(l));
    }
    res.report["result"] = {{"spectrum", detail::spectrum_json(sp)}, {"degrees", degrees}};
    for (std::size_t i = 0; i < sp.lowest.size(); ++i) t.add(i, sp.lowest[i]);
    res.tables.push_back(std::move(t));
    res.tables.push_back(std::move(d));
    return res;
  }
  const ConformalProblem prob = make_problem(rc.manifold, rc.route);
  const SpectrumSummary sp = spectrum(prob.paneitz, rc.spectrum_n_low, rc.tol_zero_rel);
  res.report["result"] = {{"spectrum", detail::spectrum_json(sp)}, {"dimension", prob.paneitz.dimension()}};
  for (std::size_t i = 0; i < sp.lowest.size(); ++i) t.add(i, sp.lowest[i]);
  res.tables.push_back(std::move(t));
  CsvTable modes{"modes", {"mode", "i", "j", "alpha", "beta", "s", "diagonal"}, {}};
  const Eigen::VectorXd diag = prob.paneitz.diagonal_values();
  for (int k = 0; k < rc.manifold->mode_count(); ++k) {
    const auto& md = rc.manifold->modes()[k];
    modes.add(k, md.i, md.j, md.alpha, md.beta, md.s, diag[k]);
  }
  res.tables.push_back(std::move(modes));
  return res;
}

inline RunResult run_solve(const RunConfig& rc) {
  RunResult res;
  const ConformalProblem prob = make_problem(rc.manifold, rc.route);
  const SolveReport r = minimize_ii(prob, rc.solver);
  res.report["result"] = detail::solve_json(r);
  res.report["result"]["history"] = detail::history_json(r.history);
  detail::add_history_table(res, "history", r.history, r.rho);
  CsvTable c{"coefficients", {"mode", "i", "j", "s", "coefficient"}, {}};
  for (int k = 0; k < rc.manifold->mode_count(); ++k) {
    const auto& md = rc.manifold->modes()[k];
    c.add(k, md.i, md.j, md.s, r.coefficients[k]);
  }
  res.tables.push_back(std::move(c));
  return res;
}

inline RunResult run_continuation(const RunConfig& rc) {
  RunResult res;
  const ConformalProblem prob = make_problem(rc.manifold, rc.route);
  const ContinuationReport cr = continuation_rho(prob, rc.solver);
  const bool q_const = prob.q.is_constant();
  const double closed_form = -0.25 * std::log(rc.manifold->volume());
  json steps = json::array();
  CsvTable t{"continuation", {"rho", "status", "residual", "sup_norm", "q_bar", "normalized_mean", "closed_form_gap"}, {}};
  for (const auto& s : cr.steps) {
    json j = detail::solve_json(s);
    const double mean = rc.manifold->constant_coefficient(1.0) > 0
                            ? s.normalized_coefficients[0] / std::sqrt(rc.manifold->volume())
                            : 0.0;
    // closed form: constant solutions u = -log(V)/4 in the normalized gauge
    double gap = NAN;
    if (q_const) gap = std::max(std::abs(mean - closed_form), s.normalized_coefficients.tail(s.normalized_coefficients.size() - 1).cwiseAbs().maxCoeff());
    j["closed_form_gap"] = detail::num(gap);
    steps.push_back(j);
    t.add(s.rho, s.status, s.residual, s.sup_norm, s.q_bar, mean, gap);
  }
  double median = 0.0;
  if (!cr.sup_norms.empty()) {
    std::vector<double> v = cr.sup_norms;
    std::sort(v.begin(), v.end());
    median = v.size() % 2 ? v[v.size() / 2] : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
  }
  res.report["result"] = {{"completed", cr.completed},
                          {"message", cr.message},
                          {"rhos", cr.rhos},
                          {"sup_norms", cr.sup_norms},
                          {"sup_norm_median", median},
                          {"closed_form_constant", q_const ? json(closed_form) : json(nullptr)},
                          {"steps", steps}};
  res.tables.push_back(std::move(t));
  return res;
}

/// Single-bubble family sigma = delta_center over the configured lambdas, plus the constant baseline.
inline std::vector<ScalarField> single_bubble_family(const ManifoldPtr& m, ProductPoint center,
                                                     const std::vector<double>& lambdas, double delta) {
  std::vector<ScalarField> fam;
  Barycenter s{{{1.0, center}}};
  for (double l : lambdas) fam.push_back(bubble_field(m, s, l, CutoffSpec{delta}));
  return fam;
}

inline RunResult run_adams(const RunConfig& rc) {
  RunResult res;
  const ConformalProblem prob = make_problem(rc.manifold, rc.route);
  std::vector<ScalarField> fam = single_bubble_family(rc.manifold, rc.adams.center, rc.adams.lambdas, rc.delta);
  const InequalityReport rep = adams_report(prob, fam, "single-bubble");
  // constant baseline row and calibration over bubbles plus the constant
  InequalityReport calib = rep;
  InequalitySample base = adams_sample(prob, ScalarField::constant(rc.manifold, 0.0));
  base.residual = base.log_term - rep.coefficient * base.quadratic;
  calib.samples.push_back(base);
  calib.calibrated_c = std::max(rep.calibrated_c, base.residual);

  Rng rng(rc.seed);
  int holds = 0;
  double worst_margin = -INFINITY;
  CsvTable t{"adams_samples", {"family", "index", "parameter", "quadratic", "log_term", "residual", "included"}, {}};
  for (std::size_t i = 0; i < rep.samples.size(); ++i) {
    const auto& s = rep.samples[i];
    t.add("single-bubble", i, rc.adams.lambdas[i], s.quadratic, s.log_term, s.residual, s.included ? 1 : 0);
  }
  t.add("constant", 0, 0.0, base.quadratic, base.log_term, base.residual, 1);
  for (int i = 0; i < rc.adams.random_samples; ++i) {
    const double amp = rc.adams.random_amplitudes[i % rc.adams.random_amplitudes.size()];
    const ScalarField u = random_band_limited(rc.manifold, rng, amp, rc.adams.random_s_cap);
    InequalitySample s = adams_sample(prob, u);
    s.residual = s.log_term - rep.coefficient * s.quadratic;
    const bool ok = adams_bound_holds(calib, s);
    holds += ok;
    worst_margin = std::max(worst_margin, s.residual - calib.calibrated_c);
    t.add("random", i, amp, s.quadratic, s.log_term, s.residual, ok ? 1 : 0);
  }
  const double coef = rep.coefficient;
  res.report["result"] = {{"coefficient", coef},
                          {"tail_slope", detail::num(rep.tail_slope)},
                          {"tail_slope_ratio", detail::num(rep.tail_slope / coef)},
                          {"tail_ratio_sup", detail::num(rep.tail_ratio_sup)},
                          {"tail_count", rep.tail_count},
                          {"calibrated_c", calib.calibrated_c},
                          {"random_samples", rc.adams.random_samples},
                          {"random_within_bound", holds},
                          {"random_worst_margin", detail::num(worst_margin)},
                          {"slope_in_band", rep.tail_slope / coef >= 0.9 && rep.tail_slope / coef <= 1.0},
                          {"truncation", {{"s_max", rep.s_max}, {"modes", rep.mode_count}}}};
  res.tables.push_back(std::move(t));
  return res;
}

struct ImprovedAdamsOutcome {
  InequalityReport two;
  InequalityReport single;  // single-bubble reference over matched energies
  double matched_single_slope = 0.0;
  double ratio = 0.0;
  double window_lo = 0.0, window_hi = 0.0;
  std::vector<double> single_lambdas;
};

/// Equal-weight bubbles at the region centers versus a single bubble whose
/// lambda range is extended until its energies cover the same tail window.
inline ImprovedAdamsOutcome improved_adams_comparison(const ConformalProblem& prob, int ell, const SpreadRegions& reg,
                                                      const std::vector<double>& lambdas, double delta) {
  ImprovedAdamsOutcome out;
  Barycenter sigma;
  const int n = static_cast<int>(reg.centers.size());
  for (int i = 0; i < n; ++i) sigma.atoms.push_back({1.0 / n, reg.centers[i]});
  double acc = 0.0;
  for (int i = 0; i + 1 < n; ++i) acc += sigma.atoms[i].t;
  sigma.atoms.back().t = 1.0 - acc;
  std::vector<ScalarField> fam;
  for (double l : lambdas) fam.push_back(bubble_field(prob.manifold, sigma, l, CutoffSpec{delta}));
  out.two = improved_adams_report(prob, ell, reg, fam, "multi-bubble");

  // tail window of the filtered multi-bubble family
  std::vector<double> qs;
  for (const auto& s : out.two.samples)
    if (s.included) qs.push_back(s.quadratic);
  std::sort(qs.begin(), qs.end(), std::greater<>());
  if (qs.size() < 2) throw NumericError("improved Adams: fewer than two samples pass the spreading filter");
  const std::size_t k = std::max<std::size_t>(2, (qs.size() + 3) / 4);
  out.window_hi = qs.front();
  out.window_lo = qs[k - 1];

  // single bubble at the first center, lambda grown geometrically past the window
  std::vector<ScalarField> single;
  double lam = lambdas.front();
  const double ratio = lambdas.size() > 1 ? lambdas[1] / lambdas[0] : std::pow(2.0, 0.25);
  for (int guard = 0; guard < 400; ++guard, lam *= ratio) {
    single.push_back(bubble_field(prob.manifold, Barycenter{{{1.0, reg.centers[0]}}}, lam, CutoffSpec{delta}));
    out.single_lambdas.push_back(lam);
    if (ii_value(prob, single.back()).quadratic > out.window_hi) break;
  }
  out.single = adams_report(prob, single, "single-bubble-matched");
  std::vector<double> x, y;
  for (const auto& s : out.single.samples)
    if (s.quadratic >= out.window_lo && s.quadratic <= out.window_hi) {
      x.push_back(s.quadratic);
      y.push_back(s.log_term);
    }
  if (x.size() < 2) {
    // window narrower than the lambda spacing: use the two samples bracketing it
    std::size_t j = 0;
    while (j + 1 < out.single.samples.size() && out.single.samples[j + 1].quadratic < out.window_lo) ++j;
    x = {out.single.samples[j].quadratic, out.single.samples.back().quadratic};
    y = {out.single.samples[j].log_term, out.single.samples.back().log_term};
  }
  out.matched_single_slope = ls_slope(x, y);
  out.ratio = out.two.tail_slope / out.matched_single_slope;
  return out;
}

inline RunResult run_improved_adams(const RunConfig& rc) {
  RunResult res;
  const ConformalProblem prob = make_problem(rc.manifold, rc.route);
  SpreadRegions reg{rc.improved.centers, rc.improved.radius, rc.improved.gamma0, rc.improved.delta0};
  if (rc.improved.ell == 0) {
    const auto fam = single_bubble_family(rc.manifold, rc.improved.centers.empty() ? ProductPoint{0, 0}
                                                                                   : rc.improved.centers[0],
                                          rc.improved.lambdas, rc.delta);
    const InequalityReport rep = improved_adams_report(prob, 0, reg, fam, "single-bubble");
    res.report["result"] = {{"ell", 0},
                            {"coefficient", rep.coefficient},
                            {"tail_slope", detail::num(rep.tail_slope)},
                            {"tail_slope_ratio", detail::num(rep.tail_slope / rep.coefficient)},
                            {"calibrated_c", rep.calibrated_c}};
    CsvTable t{"improved_adams_samples", {"family", "index", "lambda", "quadratic", "log_term", "included"}, {}};
    for (std::size_t i = 0; i < rep.samples.size(); ++i)
      t.add("single-bubble", i, rc.improved.lambdas[i], rep.samples[i].quadratic, rep.samples[i].log_term, 1);
    res.tables.push_back(std::move(t));
    return res;
  }
  const ImprovedAdamsOutcome o = improved_adams_comparison(prob, rc.improved.ell, reg, rc.improved.lambdas, rc.delta);
  // a single bubble at one center checked against the spreading condition
  const ScalarField lone = bubble_field(rc.manifold, Barycenter{{{1.0, reg.centers[0]}}}, rc.improved.lambdas.back(),
                                        CutoffSpec{rc.delta});
  const InequalityReport lone_rep = improved_adams_report(prob, rc.improved.ell, reg, {lone}, "single-check");
  int included = 0;
  for (const auto& s : o.two.samples) included += s.included;
  res.report["result"] = {{"ell", rc.improved.ell},
                          {"coefficient", o.two.coefficient},
                          {"filtered_count", included},
                          {"tail_slope", detail::num(o.two.tail_slope)},
                          {"tail_slope_ratio", detail::num(o.two.tail_slope / o.two.coefficient)},
                          {"matched_single_slope", o.matched_single_slope},
                          {"slope_ratio_to_single", o.ratio},
                          {"energy_window", {o.window_lo, o.window_hi}},
                          {"single_bubble_excluded", !lone_rep.samples[0].included},
                          {"single_bubble_fractions", lone_rep.samples[0].region_fractions}};
  CsvTable t{"improved_adams_samples", {"family", "index", "lambda", "quadratic", "log_term", "included"}, {}};
  for (std::size_t i = 0; i < o.two.samples.size(); ++i)
    t.add("multi-bubble", i, rc.improved.lambdas[i], o.two.samples[i].quadratic, o.two.samples[i].log_term,
          o.two.samples[i].included ? 1 : 0);
  for (std::size_t i = 0; i < o.single.samples.size(); ++i)
    t.add("single-bubble", i, o.single_lambdas[i], o.single.samples[i].quadratic, o.single.samples[i].log_term, 1);
  res.tables.push_back(std::move(t));
  return res;
}

inline RunResult run_bubble(const RunConfig& rc) {
  RunResult res;
  const ConformalProblem prob = make_problem(rc.manifold, rc.route);
  Rng rng(rc.seed);
  const auto sigmas = detail::bubble_sigmas(rc, rng);
  CsvTable t{"bubble_energy", {"sigma", "lambda", "quadratic", "linear", "log_term", "total", "route", "w1_to_sigma"}, {}};
  json arr = json::array();
  int decreasing = 0, increasing_tail = 0;
  for (std::size_t si = 0; si < sigmas.size(); ++si) {
    std::vector<double> totals;
    json rows = json::array();
    for (double lam : rc.bubble.lambdas) {
      const ScalarField phi = bubble_field(rc.manifold, sigmas[si], lam, CutoffSpec{rc.delta});
      const EnergyBreakdown e = ii_value(prob, phi);
      double w1 = NAN;
      if (!rc.manifold->spectral_only()) {
        const ConformalMeasure cm = conformal_measure(phi);
        w1 = measure_distance(*rc.manifold, cm.measure, to_measure(sigmas[si]), rc.project.max_atoms).value;
      }
      totals.push_back(e.total);
      rows.push_back({{"lambda", lam},
                      {"quadratic", e.quadratic},
                      {"linear", e.linear},
                      {"log_term", e.log_term},
                      {"total", e.total},
                      {"route", e.route},
                      {"w1_to_sigma", detail::num(w1)}});
      t.add(si, lam, e.quadratic, e.linear, e.log_term, e.total, e.route, w1);
    }
    bool dec = true;
    for (std::size_t i = 1; i < totals.size(); ++i) dec = dec && totals[i] < totals[i - 1];
    const bool inc_tail = totals.size() >= 2 && totals.back() > totals[totals.size() - 2];
    decreasing += dec;
    increasing_tail += inc_tail;
    arr.push_back({{"sigma", detail::barycenter_json(sigmas[si])},
                   {"strictly_decreasing", dec},
                   {"increasing_at_end", inc_tail},
                   {"energies", rows}});
  }
  res.report["result"] = {{"k_p", prob.k_p},
                          {"sigma_count", sigmas.size()},
                          {"strictly_decreasing_count", decreasing},
                          {"increasing_at_end_count", increasing_tail},
                          {"families", arr}};
  res.tables.push_back(std::move(t));
  return res;
}

inline RunResult run_project(const RunConfig& rc) {
  RunResult res;
  rc.manifold->require_nodes("projection onto barycenters");
  Rng rng(rc.seed);
  const double diam = rc.manifold->diameter();
  CsvTable t{"project", {"sample", "lambda", "w1_to_sigma", "w1_bound", "psi_distance", "residual"}, {}};
  json arr = json::array();
  double worst_w1 = 0.0, worst_psi = 0.0;
  for (int i = 0; i < rc.project.samples; ++i) {
    const Barycenter sigma = random_barycenter(*rc.manifold, rng, rc.project.k, 4.0 * rc.delta);
    const ScalarField phi = bubble_field(rc.manifold, sigma, rc.project.lambda, CutoffSpec{rc.delta});
    const ConformalMeasure cm = conformal_measure(phi);
    const MeasureDistance md = measure_distance(*rc.manifold, cm.measure, to_measure(sigma), rc.project.max_atoms);
    const double w1 = md.value + md.compression_bound + cm.lumping_bound;
    const ConcentrationReport conc =
        concentration_points(*rc.manifold, cm.measure, rc.project.k, rc.project.eps, rc.project.radius,
                             rc.project.candidates);
    const Barycenter psi = project_psi(phi, rc.project.k, rc.project.radius, rc.project.candidates);
    const double dpsi = barycenter_distance(*rc.manifold, psi, sigma);
    worst_w1 = std::max(worst_w1, w1);
    worst_psi = std::max(worst_psi, dpsi);
    arr.push_back({{"sigma", detail::barycenter_json(sigma)},
                   {"psi", detail::barycenter_json(psi)},
                   {"w1_to_sigma", md.value},
                   {"w1_error_bound", md.compression_bound + cm.lumping_bound},
                   {"psi_distance", dpsi},
                   {"residual", conc.residual},
                   {"concentrated", conc.concentrated}});
    t.add(i, rc.project.lambda, md.value, md.compression_bound + cm.lumping_bound, dpsi, conc.residual);
  }
  res.report["result"] = {{"diameter", diam},
                          {"lambda", rc.project.lambda},
                          {"worst_w1_with_bound", worst_w1},
                          {"worst_psi_distance", worst_psi},
                          {"w1_relative", worst_w1 / diam},
                          {"psi_relative", worst_psi / diam},
                          {"samples", arr}};
  res.tables.push_back(std::move(t));
  return res;
}

inline RunResult run_green(const RunConfig& rc) {
  RunResult res;
  const ConformalProblem prob = make_problem(rc.manifold, rc.route);
  GreenOptions go;
  go.n_modes = rc.green.n_modes;
  go.rescale = rc.green.rescale;
  std::vector<GreenData> gs;
  for (const auto& p : rc.green.poles) gs.push_back(green_function(prob, p, go));
  CsvTable t{"green", {"pole_a", "pole_b", "s_diag", "laplacian", "gradient_norm", "quantity", "weak_residual"}, {}};
  json poles = json::array();
  double qmin = INFINITY, qmax = -INFINITY, wmax = 0.0, sym = 0.0;
  for (const auto& g : gs) {
    qmin = std::min(qmin, g.quantity);
    qmax = std::max(qmax, g.quantity);
    wmax = std::max(wmax, g.weak_residual);
    poles.push_back({{"pole", {g.pole.a, g.pole.b}},
                     {"s_diag", g.s_diag},
                     {"laplacian", g.laplacian},
                     {"gradient_norm", g.gradient_norm},
                     {"scalar_curvature", g.scalar_curvature},
                     {"quantity", g.quantity},
                     {"weak_residual", g.weak_residual},
                     {"fit", g.fit},
                     {"shell_radii", g.shell_radii},
                     {"shell_means", g.shell_means}});
    t.add(g.pole.a, g.pole.b, g.s_diag, g.laplacian, g.gradient_norm, g.quantity, g.weak_residual);
  }
  for (std::size_t i = 0; i < gs.size(); ++i)
    for (std::size_t j = i + 1; j < gs.size(); ++j) {
      if (gs[i].pole == gs[j].pole) continue;
      sym = std::max(sym, green_symmetry_gap(gs[i], gs[j]));
    }
  const double mean_abs = 0.5 * (std::abs(qmin) + std::abs(qmax));
  res.report["result"] = {{"q_scale", gs.front().q_scale},
                          {"n_modes", gs.front().n_modes},
                          {"max_weak_residual", wmax},
                          {"max_symmetry_gap", sym},
                          {"quantity_min", qmin},
                          {"quantity_max", qmax},
                          {"quantity_relative_spread", mean_abs > 0 ? (qmax - qmin) / mean_abs : 0.0},
                          {"poles", poles}};
  res.tables.push_back(std::move(t));
  return res;
}

inline RunResult run_minmax(const RunConfig& rc) {
  RunResult res;
  const ConformalProblem prob = make_problem(rc.manifold, rc.route);
  const WitnessReport w = minmax_witness(prob, rc.minmax.k, rc.minmax.lambda_bar, rc.minmax.n_sigma, rc.minmax.n_t,
                                         rc.minmax.rhos, CutoffSpec{rc.delta}, rc.seed);
  CsvTable wt{"witness", {"rho", "witness", "witness_over_rho"}, {}};
  for (std::size_t i = 0; i < w.rhos.size(); ++i) wt.add(w.rhos[i], w.witness[i], w.witness_over_rho[i]);
  CsvTable pt{"profiles", {"sigma", "t", "energy"}, {}};
  json samples = json::array();
  int mountain = 0;
  for (std::size_t s = 0; s < w.samples.size(); ++s) {
    const auto& ws = w.samples[s];
    const double e0 = ws.profile.front();
    const double peak = *std::max_element(ws.profile.begin(), ws.profile.end());
    const bool mp = peak > e0 && ws.profile.back() < e0;
    mountain += mp;
    samples.push_back({{"sigma", detail::barycenter_json(ws.sigma)},
                       {"profile", ws.profile},
                       {"mountain_pass", mp}});
    for (std::size_t i = 0; i < ws.t_values.size(); ++i) pt.add(s, ws.t_values[i], ws.profile[i]);
  }
  res.report["result"] = {{"k", w.k},
                          {"lambda_bar", w.lambda_bar},
                          {"regime", detail::regime_json(w.regime)},
                          {"rhos", w.rhos},
                          {"witness", w.witness},
                          {"witness_over_rho", w.witness_over_rho},
                          {"monotone", w.monotone},
                          {"mountain_pass_count", mountain},
                          {"samples", samples}};
  res.tables.push_back(std::move(wt));
  res.tables.push_back(std::move(pt));
  return res;
}

/// Runs a command on a validated configuration; nothing is written here.
inline RunResult execute(const RunConfig& rc) {
  RunResult res;
  const std::string& c = rc.command;
  if (c == "invariants") res = run_invariants(rc);
  else if (c == "spectrum") res = run_spectrum(rc);
  else if (c == "solve") res = run_solve(rc);
  else if (c == "continuation") res = run_continuation(rc);
  else if (c == "adams") res = run_adams(rc);
  else if (c == "improved-adams") res = run_improved_adams(rc);
  else if (c == "bubble") res = run_bubble(rc);
  else if (c == "project") res = run_project(rc);
  else if (c == "green") res = run_green(rc);
  else if (c == "minmax") res = run_minmax(rc);
  else throw ConfigError("unknown command '" + c + "'");

  json report;
  report["command"] = c;
  json hashed = rc.resolved;
  hashed.erase("out_dir");
  report["config_hash"] = fnv1a_hex(hashed.dump());
  report["seed"] = rc.seed;
  if (!rc.sphere4)
    report["truncation"] = {{"s_max", rc.manifold->s_max()}, {"modes", rc.manifold->mode_count()}};
  std::optional<ConformalProblem> prob;
  if (!rc.sphere4) prob = make_problem(rc.manifold, rc.route);
  report["model"] = detail::model_summary(rc, prob ? &*prob : nullptr);
  report["result"] = res.report["result"];
  res.report = std::move(report);
  return res;
}

/// Writes report.json, config.resolved.json and the CSV tables.
inline void write_outputs(const RunConfig& rc, const RunResult& res) {
  namespace fs = std::filesystem;
  fs::create_directories(rc.out_dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream f(fs::path(rc.out_dir) / name, std::ios::binary);
    if (!f) throw ConfigError("cannot write '" + (fs::path(rc.out_dir) / name).string() + "'");
    f << text;
  };
  write("report.json", res.report.dump(2) + "\n");
  write("config.resolved.json", rc.resolved.dump(2) + "\n");
  for (const auto& t : res.tables) write(t.name + ".csv", t.str());
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "' is not valid JSON: " + e.what());
  }
}

}  // namespace qcurv::app
