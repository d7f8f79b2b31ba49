#pragma once

#include "geoflow/chart.hpp"
#include "geoflow/types.hpp"

#include <array>
#include <cmath>
#include <memory>
#include <string>
#include <variant>

namespace geoflow {

/// Contravariant metric A(x) with its first and second coordinate derivatives.
template <typename Scalar>
struct MetricJet {
  Matrix2<Scalar> A = Matrix2<Scalar>::Identity();
  std::array<Matrix2<Scalar>, 2> dA{Matrix2<Scalar>::Zero(), Matrix2<Scalar>::Zero()};
  std::array<std::array<Matrix2<Scalar>, 2>, 2> d2A{
      {{Matrix2<Scalar>::Zero(), Matrix2<Scalar>::Zero()},
       {Matrix2<Scalar>::Zero(), Matrix2<Scalar>::Zero()}}};
};

/// Meridian profile of a surface of revolution,
///   ds^2 = f(v)^2 du^2 + h^2 dv^2,   f(v) = a + b cos v + c sin v.
/// The torus of revolution (R, r) is a = R, b = r, c = 0, h = r; the round
/// unit sphere is a = b = 0, c = 1, h = 1.
template <typename Scalar>
struct RevolutionProfile {
  Scalar a = 0;
  Scalar b = 0;
  Scalar c = 0;
  Scalar meridian_scale = 1;

  Scalar f(Scalar v) const { return a + b * std::cos(v) + c * std::sin(v); }
  Scalar df(Scalar v) const { return -b * std::sin(v) + c * std::cos(v); }
  Scalar d2f(Scalar v) const { return -b * std::cos(v) - c * std::sin(v); }
};

/// Conformal bump e^{2 a beta(x)} g with beta(x) = exp(1 - 1/(1 - |x-c|^2/R^2))
/// inside the radius and exactly zero outside. beta(center) = 1.
template <typename Scalar>
struct ConformalBump {
  Vector2<Scalar> center = Vector2<Scalar>::Zero();
  Scalar radius = 1;
  Scalar amplitude = 0;
};

/// beta, grad beta and Hessian of beta at x.
template <typename Scalar>
struct BumpJet {
  Scalar value = 0;
  Vector2<Scalar> grad = Vector2<Scalar>::Zero();
  Matrix2<Scalar> hess = Matrix2<Scalar>::Zero();
  bool inside = false;
};

template <typename Scalar>
BumpJet<Scalar> bump_jet(const ConformalBump<Scalar>& bump, const SurfaceChart<Scalar>& chart,
                         const Vector2<Scalar>& x) {
  BumpJet<Scalar> out;
  const Vector2<Scalar> delta = chart.difference(x, bump.center);
  const Scalar r2 = bump.radius * bump.radius;
  const Scalar q = delta.squaredNorm() / r2;
  if (!(q < 1)) return out;
  const Scalar one_minus = 1 - q;
  const Scalar g1 = -1 / (one_minus * one_minus);
  const Scalar g2 = -2 / (one_minus * one_minus * one_minus);
  const Scalar beta = std::exp(1 - 1 / one_minus);
  const Vector2<Scalar> dq = Scalar(2) * delta / r2;
  out.inside = true;
  out.value = beta;
  out.grad = beta * g1 * dq;
  out.hess = beta * ((g1 * g1 + g2) * dq * dq.transpose() +
                     g1 * (Scalar(2) / r2) * Matrix2<Scalar>::Identity());
  return out;
}

enum class MetricFamilyTag { FlatTorus, SurfaceOfRevolution, ConformallyPerturbed };

inline const char* to_string(MetricFamilyTag tag) {
  switch (tag) {
    case MetricFamilyTag::FlatTorus: return "flat_torus";
    case MetricFamilyTag::SurfaceOfRevolution: return "surface_of_revolution";
    case MetricFamilyTag::ConformallyPerturbed: return "conformally_perturbed";
  }
  return "unknown";
}

namespace detail {
template <typename Scalar>
struct MetricNode;
}

/// Riemannian metric on a single chart, given through the contravariant
/// (inverse metric) matrix field A(x). Cheap to copy; immutable.
template <typename Scalar>
class MetricField {
 public:
  MetricField() = default;
  explicit MetricField(std::shared_ptr<const detail::MetricNode<Scalar>> node)
      : node_(std::move(node)) {}

  const SurfaceChart<Scalar>& chart() const;
  MetricFamilyTag family() const;

  /// Profile of a SurfaceOfRevolution family; throws otherwise.
  const RevolutionProfile<Scalar>& profile() const;
  /// Base metric and bump of a ConformallyPerturbed family; throws otherwise.
  const MetricField& base() const;
  const ConformalBump<Scalar>& bump() const;

  /// order 0: A only; 1: also dA; 2: also d2A.
  MetricJet<Scalar> jet(const Vector2<Scalar>& x, int order = 2) const;

  Matrix2<Scalar> contravariant(const Vector2<Scalar>& x) const { return jet(x, 0).A; }
  Matrix2<Scalar> covariant(const Vector2<Scalar>& x) const;
  std::array<Matrix2<Scalar>, 2> grad_contravariant(const Vector2<Scalar>& x) const {
    return jet(x, 1).dA;
  }

  bool same_as(const MetricField& other) const { return node_ == other.node_; }

 private:
  void check_domain(const Vector2<Scalar>& x) const;
  std::shared_ptr<const detail::MetricNode<Scalar>> node_;
};

template <typename Scalar>
struct FlatTorusFamily {};

template <typename Scalar>
struct RevolutionFamily {
  RevolutionProfile<Scalar> profile;
};

template <typename Scalar>
struct ConformalFamily {
  MetricField<Scalar> base;
  ConformalBump<Scalar> bump;
};

namespace detail {
template <typename Scalar>
struct MetricNode {
  SurfaceChart<Scalar> chart;
  std::variant<FlatTorusFamily<Scalar>, RevolutionFamily<Scalar>, ConformalFamily<Scalar>> family;
};
}  // namespace detail

template <typename Scalar>
const SurfaceChart<Scalar>& MetricField<Scalar>::chart() const {
  return node_->chart;
}

template <typename Scalar>
MetricFamilyTag MetricField<Scalar>::family() const {
  return static_cast<MetricFamilyTag>(node_->family.index());
}

template <typename Scalar>
const RevolutionProfile<Scalar>& MetricField<Scalar>::profile() const {
  if (const auto* rev = std::get_if<RevolutionFamily<Scalar>>(&node_->family)) return rev->profile;
  throw DomainError("metric is not a surface of revolution");
}

template <typename Scalar>
const MetricField<Scalar>& MetricField<Scalar>::base() const {
  if (const auto* conf = std::get_if<ConformalFamily<Scalar>>(&node_->family)) return conf->base;
  throw DomainError("metric is not conformally perturbed");
}

template <typename Scalar>
const ConformalBump<Scalar>& MetricField<Scalar>::bump() const {
  if (const auto* conf = std::get_if<ConformalFamily<Scalar>>(&node_->family)) return conf->bump;
  throw DomainError("metric is not conformally perturbed");
}

template <typename Scalar>
void MetricField<Scalar>::check_domain(const Vector2<Scalar>& x) const {
  if (!node_->chart.contains(x)) {
    throw DomainError("point (" + std::to_string(double(x[0])) + ", " +
                      std::to_string(double(x[1])) + ") outside chart '" + node_->chart.name() +
                      "'");
  }
}

template <typename Scalar>
MetricJet<Scalar> MetricField<Scalar>::jet(const Vector2<Scalar>& x, int order) const {
  check_domain(x);
  MetricJet<Scalar> out;
  std::visit(
      [&](const auto& fam) {
        using F = std::decay_t<decltype(fam)>;
        if constexpr (std::is_same_v<F, FlatTorusFamily<Scalar>>) {
          // A = I, derivatives vanish.
        } else if constexpr (std::is_same_v<F, RevolutionFamily<Scalar>>) {
          const auto& pr = fam.profile;
          const Scalar v = x[1];
          const Scalar f = pr.f(v);
          if (!(std::abs(f) > Scalar(1e-12))) throw DomainError("degenerate profile f(v) = 0");
          const Scalar h = pr.meridian_scale;
          out.A << 1 / (f * f), 0, 0, 1 / (h * h);
          if (order >= 1) {
            const Scalar f1 = pr.df(v);
            out.dA[1](0, 0) = -2 * f1 / (f * f * f);
            if (order >= 2) {
              const Scalar f2 = pr.d2f(v);
              out.d2A[1][1](0, 0) = -2 * f2 / (f * f * f) + 6 * f1 * f1 / (f * f * f * f);
            }
          }
        } else {
          MetricJet<Scalar> base = fam.base.jet(x, order);
          const Scalar a = fam.bump.amplitude;
          if (a == 0) {
            out = base;
            return;
          }
          const BumpJet<Scalar> b = bump_jet(fam.bump, node_->chart, x);
          if (!b.inside) {
            out = base;
            return;
          }
          const Scalar s = std::exp(-2 * a * b.value);
          out.A = s * base.A;
          if (order >= 1) {
            Vector2<Scalar> ds = -2 * a * s * b.grad;
            for (int k = 0; k < 2; ++k) out.dA[k] = ds[k] * base.A + s * base.dA[k];
            if (order >= 2) {
              for (int j = 0; j < 2; ++j) {
                for (int k = 0; k < 2; ++k) {
                  const Scalar d2s =
                      s * (4 * a * a * b.grad[j] * b.grad[k] - 2 * a * b.hess(j, k));
                  out.d2A[j][k] = d2s * base.A + ds[k] * base.dA[j] + ds[j] * base.dA[k] +
                                  s * base.d2A[j][k];
                }
              }
            }
          }
        }
      },
      node_->family);
  return out;
}

template <typename Scalar>
Matrix2<Scalar> MetricField<Scalar>::covariant(const Vector2<Scalar>& x) const {
  check_domain(x);
  return std::visit(
      [&](const auto& fam) -> Matrix2<Scalar> {
        using F = std::decay_t<decltype(fam)>;
        if constexpr (std::is_same_v<F, FlatTorusFamily<Scalar>>) {
          return Matrix2<Scalar>::Identity();
        } else if constexpr (std::is_same_v<F, RevolutionFamily<Scalar>>) {
          const Scalar f = fam.profile.f(x[1]);
          const Scalar h = fam.profile.meridian_scale;
          Matrix2<Scalar> g;
          g << f * f, 0, 0, h * h;
          return g;
        } else {
          const Matrix2<Scalar> g = fam.base.covariant(x);
          if (fam.bump.amplitude == 0) return g;
          const BumpJet<Scalar> b = bump_jet(fam.bump, node_->chart, x);
          if (!b.inside) return g;
          return std::exp(2 * fam.bump.amplitude * b.value) * g;
        }
      },
      node_->family);
}

// ---- family constructors -------------------------------------------------

/// Flat torus R^2 / (2 pi Z)^2 with A = I.
template <typename Scalar = double>
MetricField<Scalar> flat_torus() {
  const Scalar tp = constants::two_pi<Scalar>;
  auto node = std::make_shared<detail::MetricNode<Scalar>>();
  node->chart = SurfaceChart<Scalar>("flat_torus", {0, tp}, {0, tp}, {true, true});
  node->family = FlatTorusFamily<Scalar>{};
  return MetricField<Scalar>(std::move(node));
}

template <typename Scalar = double>
MetricField<Scalar> surface_of_revolution(const RevolutionProfile<Scalar>& profile,
                                          SurfaceChart<Scalar> chart) {
  if (!(profile.meridian_scale > 0)) throw DomainError("meridian scale must be positive");
  auto node = std::make_shared<detail::MetricNode<Scalar>>();
  node->chart = std::move(chart);
  node->family = RevolutionFamily<Scalar>{profile};
  return MetricField<Scalar>(std::move(node));
}

/// Torus of revolution ds^2 = r^2 dv^2 + (R + r cos v)^2 du^2; v = 0 is the outer equator.
template <typename Scalar = double>
MetricField<Scalar> torus_of_revolution(Scalar major_radius, Scalar minor_radius) {
  if (!(minor_radius > 0) || !(major_radius > minor_radius)) {
    throw DomainError("torus of revolution needs R > r > 0");
  }
  const Scalar tp = constants::two_pi<Scalar>;
  RevolutionProfile<Scalar> prof{major_radius, minor_radius, 0, minor_radius};
  return surface_of_revolution<Scalar>(
      prof, SurfaceChart<Scalar>("torus_of_revolution", {0, tp}, {0, tp}, {true, true}));
}

/// Round unit sphere with the polar caps of angular size `margin` removed
/// (colatitude v in [margin, pi - margin]). Curvature is identically 1.
template <typename Scalar = double>
MetricField<Scalar> sphere_zone(Scalar margin) {
  const Scalar pi = constants::pi<Scalar>;
  if (!(margin > 0) || !(margin < pi / 2)) throw DomainError("sphere zone margin out of range");
  RevolutionProfile<Scalar> prof{0, 0, 1, 1};
  return surface_of_revolution<Scalar>(
      prof, SurfaceChart<Scalar>("sphere_zone", {0, constants::two_pi<Scalar>},
                                 {margin, pi - margin}, {true, false}));
}

/// e^{2 a beta} g. Throws if the bump does not fit in the chart.
template <typename Scalar>
MetricField<Scalar> apply_conformal_bump(const MetricField<Scalar>& metric,
                                         const ConformalBump<Scalar>& bump) {
  const auto& chart = metric.chart();
  if (!(bump.radius > 0)) throw DomainError("bump radius must be positive");
  if (!std::isfinite(bump.amplitude)) throw DomainError("bump amplitude must be finite");
  for (int k = 0; k < 2; ++k) {
    if (chart.periodic(k)) {
      if (!(bump.radius < chart.extent(k) / 2)) {
        throw DomainError("bump wraps onto itself across a periodic coordinate");
      }
    } else if (bump.center[k] - bump.radius < chart.lower(k) ||
               bump.center[k] + bump.radius > chart.upper(k)) {
      throw DomainError("bump overlaps a chart seam of a non-periodic coordinate");
    }
  }
  auto node = std::make_shared<detail::MetricNode<Scalar>>();
  node->chart = chart;
  node->family = ConformalFamily<Scalar>{metric, bump};
  return MetricField<Scalar>(std::move(node));
}

// ---- curvature -------------------------------------------------------------

/// Laplace-Beltrami of a scalar field given its gradient and Hessian in chart
/// coordinates, for the metric with contravariant jet `j`.
template <typename Scalar>
Scalar laplace_beltrami(const MetricJet<Scalar>& j, const Vector2<Scalar>& grad,
                        const Matrix2<Scalar>& hess) {
  const Matrix2<Scalar> Ainv = j.A.inverse();
  Vector2<Scalar> div_a;
  Vector2<Scalar> dlog_det;
  for (int k = 0; k < 2; ++k) {
    div_a[k] = j.dA[0](0, k) + j.dA[1](1, k);
    dlog_det[k] = (Ainv * j.dA[k]).trace();
  }
  return (j.A.cwiseProduct(hess)).sum() + div_a.dot(grad) -
         Scalar(0.5) * dlog_det.dot(j.A * grad);
}

/// Gaussian curvature K(x).
template <typename Scalar>
Scalar gaussian_curvature(const MetricField<Scalar>& metric, const Vector2<Scalar>& x) {
  switch (metric.family()) {
    case MetricFamilyTag::FlatTorus:
      return 0;
    case MetricFamilyTag::SurfaceOfRevolution: {
      if (!metric.chart().contains(x)) throw DomainError("curvature: point outside chart");
      const auto& pr = metric.profile();
      const Scalar f = pr.f(x[1]);
      if (!(std::abs(f) > Scalar(1e-12))) throw DomainError("degenerate profile f(v) = 0");
      const Scalar h = pr.meridian_scale;
      return -pr.d2f(x[1]) / (h * h * f);
    }
    case MetricFamilyTag::ConformallyPerturbed: {
      const auto& base = metric.base();
      const Scalar kb = gaussian_curvature(base, x);
      const auto& bump = metric.bump();
      if (bump.amplitude == 0) return kb;
      const BumpJet<Scalar> b = bump_jet(bump, metric.chart(), x);
      if (!b.inside) return kb;
      const MetricJet<Scalar> jb = base.jet(x, 1);
      const Scalar lap = laplace_beltrami(jb, b.grad, b.hess);
      return std::exp(-2 * bump.amplitude * b.value) * (kb - bump.amplitude * lap);
    }
  }
  return 0;
}

// ---- C^2 size of a perturbation ---------------------------------------------

/// Sup over an n x n sampling grid of the componentwise deviations of A, dA
/// and d2A between two metrics on the same chart. The grid covers the box
/// [lo, hi] (chart coordinates).
template <typename Scalar>
Scalar c2_distance(const MetricField<Scalar>& first, const MetricField<Scalar>& second,
                   const Vector2<Scalar>& lo, const Vector2<Scalar>& hi, int samples_per_axis) {
  if (samples_per_axis < 2) throw DomainError("c2_distance needs at least 2 samples per axis");
  Scalar sup = 0;
  for (int i = 0; i < samples_per_axis; ++i) {
    for (int j = 0; j < samples_per_axis; ++j) {
      const Vector2<Scalar> x(lo[0] + (hi[0] - lo[0]) * i / (samples_per_axis - 1),
                              lo[1] + (hi[1] - lo[1]) * j / (samples_per_axis - 1));
      const MetricJet<Scalar> a = first.jet(x, 2);
      const MetricJet<Scalar> b = second.jet(x, 2);
      sup = std::max(sup, (a.A - b.A).cwiseAbs().maxCoeff());
      for (int k = 0; k < 2; ++k) {
        sup = std::max(sup, (a.dA[k] - b.dA[k]).cwiseAbs().maxCoeff());
        for (int l = 0; l < 2; ++l) {
          sup = std::max(sup, (a.d2A[k][l] - b.d2A[k][l]).cwiseAbs().maxCoeff());
        }
      }
    }
  }
  return sup;
}

/// C^2 size of the bump perturbation of a ConformallyPerturbed metric,
/// sampled over the bump's bounding box.
template <typename Scalar>
Scalar perturbation_c2_size(const MetricField<Scalar>& perturbed, int samples_per_axis = 161) {
  const auto& bump = perturbed.bump();
  if (bump.amplitude == 0) return 0;
  const Vector2<Scalar> r(bump.radius, bump.radius);
  return c2_distance(perturbed.base(), perturbed, Vector2<Scalar>(bump.center - r),
                     Vector2<Scalar>(bump.center + r), samples_per_axis);
}

}  // namespace geoflow
