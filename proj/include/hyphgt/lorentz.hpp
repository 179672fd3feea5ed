#pragma once

// Lorentz (hyperboloid) model of hyperbolic space with curvature c < 0.
//
// Points are rows of an N x (n+1) matrix, time coordinate first, and satisfy
// <x,x>_L = 1/c with x_t > 0, where <x,y>_L = -x_t y_t + x_s . y_s. All
// functions below compose differentiable tensor operations, so gradients
// flow to the inputs and to the curvature tensors.

#include <cstddef>
#include <functional>
#include <span>

#include "hyphgt/tensor.hpp"

namespace hyphgt::lorentz {

using ad::Tensor;

// Learnable negative curvature, c = -softplus(theta).
class Curvature {
  public:
    Curvature() = default;
    Curvature(Tensor theta, bool trainable) : theta_(std::move(theta)), trainable_(trainable) {}

    // Fresh leaf with theta chosen so that c equals `c`.
    static Curvature make(double c, bool trainable);
    static double theta_for(double c);

    Tensor value() const;
    double get() const;
    const Tensor& theta() const { return theta_; }
    bool trainable() const { return trainable_; }

  private:
    Tensor theta_;
    bool trainable_ = false;
};

// Scalar Lorentzian inner product of two coordinate vectors (length >= 2).
double lorentz_inner(std::span<const double> x, std::span<const double> y);
// Row-wise inner product, (N x (n+1)) x (N x (n+1)) -> N x 1. Either side may
// be a single row that broadcasts.
Tensor lorentz_inner(const Tensor& x, const Tensor& y);

// (sqrt(-1/c), 0, ..., 0) as a 1 x (n+1) row.
Tensor origin(std::size_t n, const Tensor& c);
Tensor origin(std::size_t n, double c);

// exp_x(y) = cosh(sqrt|c| |y|_L) x + sinh(sqrt|c| |y|_L) / (sqrt|c| |y|_L) y.
// |y|_L is floored at 1e-9; the cosh/sinh argument must stay <= 50.
Tensor exp_map(const Tensor& x, const Tensor& y, const Tensor& c);
// log_x(z) = arcosh(a)/sinh(arcosh(a)) (z - a x), a = c <x,z>_L floored at 1+1e-12.
Tensor log_map(const Tensor& x, const Tensor& z, const Tensor& c);

// exp_map at the origin for tangent vectors (0, v); takes the spatial part v.
Tensor exp_map_origin(const Tensor& v, const Tensor& c);
// log_map at the origin; returns only the spatial columns (the time column of
// a tangent vector at the origin is identically zero).
Tensor log_map_origin(const Tensor& z, const Tensor& c);

// Hyperbolic transformation from curvature c1 to c2:
//   f = x W + b,  spatial = sqrt(c1/c2) f,  time = sqrt((c1/c2)|f|^2 - 1/c2).
// W is (n+1) x d', b has d' entries.
Tensor ht(const Tensor& x, const Tensor& weight, const Tensor& bias, const Tensor& c1, const Tensor& c2);

using SpatialFn = std::function<Tensor(const Tensor&)>;
// Hyperbolic readjustment/refinement: as ht, with f = fs(x_s) acting only on
// the spatial columns.
Tensor hr(const Tensor& x, const SpatialFn& fs, const Tensor& c1, const Tensor& c2);

// Prepends the time column sqrt(|s|^2 - 1/c) to spatial rows s.
Tensor time_reconstruct(const Tensor& spatial, const Tensor& c);

// max over rows of |c <x,x>_L - 1|.
double manifold_residual(const Tensor& x, double c);
// Same residual divided by (1 + |c| |x|^2): the floor that double rounding of
// the stored coordinates puts under the absolute residual.
double scaled_manifold_residual(const Tensor& x, double c);
// max over rows of |<x,y>_L|, x broadcast when it has a single row.
double tangent_residual(const Tensor& x, const Tensor& y);
double min_time(const Tensor& x);

}  // namespace hyphgt::lorentz
