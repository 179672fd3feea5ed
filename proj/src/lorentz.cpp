#include "hyphgt/lorentz.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "hyphgt/errors.hpp"

namespace hyphgt::lorentz {

namespace {

constexpr double kNormFloor = 1e-9;
constexpr double kArcoshFloor = 1.0 + 1e-12;
constexpr double kMaxHyperbolicArg = 50.0;
constexpr double kManifoldTolerance = 1e-6;

Tensor reciprocal(const Tensor& c) { return ad::div(Tensor::scalar(1.0), c); }

void require_curvature(const Tensor& c, const char* op) {
    if (c.numel() != 1) throw ShapeError(std::string(op) + ": curvature must be a scalar");
    if (!(c.item() < 0.0)) throw ContractError(std::string(op) + ": curvature must be negative");
}

void require_points(const Tensor& x, const char* op) {
    if (x.rank() != 2 || x.cols() < 2) {
        throw ShapeError(std::string(op) + ": expected N x (n+1) points with n >= 1");
    }
}

void check_argument_cap(const Tensor& theta, const char* op) {
    for (double t : theta.data()) {
        if (t > kMaxHyperbolicArg) {
            throw DomainError(std::string(op) + ": hyperbolic argument " + std::to_string(t) +
                              " exceeds 50 (diverging embedding)");
        }
    }
}

// time = sqrt(r |f|^2 - 1/c2), spatial = sqrt(r) f, as one node.
Tensor lift(const Tensor& f, const Tensor& ratio, const Tensor& c2, const char* op) {
    const std::size_t rows = f.rows(), d = f.cols(), w = d + 1;
    const double r = ratio.item(), c = c2.item(), sr = std::sqrt(r);
    auto fv = f.data();
    std::vector<double> out(rows * w);
    for (std::size_t i = 0; i < rows; ++i) {
        double q = 0.0;
        for (std::size_t j = 0; j < d; ++j) q += fv[i * d + j] * fv[i * d + j];
        const double radicand = r * q - 1.0 / c;
        if (radicand < 0.0) throw DomainError(std::string(op) + ": negative radicand for the time coordinate");
        out[i * w] = std::sqrt(radicand);
        for (std::size_t j = 0; j < d; ++j) out[i * w + 1 + j] = sr * fv[i * d + j];
    }
    return ad::custom_op("lift", {rows, w}, std::move(out), {f, ratio, c2}, [rows, d, w, r, c, sr](ad::Node& o) {
        ad::Node& nf = *o.inputs[0];
        const auto& g = o.grad;
        double gr = 0.0, gc = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
            const double t = o.value[i * w], gt = g[i * w];
            const double* fi = nf.value.data() + i * d;
            const double* gs = g.data() + i * w + 1;
            double q = 0.0, st = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                q += fi[j] * fi[j];
                st += gs[j] * fi[j];
            }
            gr += st / (2.0 * sr) + gt * q / (2.0 * t);
            gc += gt / (2.0 * t * c * c);
            if (nf.requires_grad) {
                double* gf = nf.grad_buffer().data() + i * d;
                for (std::size_t j = 0; j < d; ++j) gf[j] += sr * gs[j] + gt * r * fi[j] / t;
            }
        }
        if (o.inputs[1]->requires_grad) o.inputs[1]->grad_buffer()[0] += gr;
        if (o.inputs[2]->requires_grad) o.inputs[2]->grad_buffer()[0] += gc;
    });
}

}  // namespace

Curvature Curvature::make(double c, bool trainable) {
    if (!(c < 0.0)) throw ContractError("curvature must be negative");
    return Curvature(Tensor::scalar(theta_for(c), trainable), trainable);
}

double Curvature::theta_for(double c) { return std::log(std::expm1(-c)); }

Tensor Curvature::value() const { return -ad::softplus(theta_); }

double Curvature::get() const {
    const double t = theta_.item();
    return -(t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t)));
}

double lorentz_inner(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw ShapeError("lorentz_inner: length mismatch");
    if (x.size() < 2) throw ContractError("lorentz_inner: vectors need a time and at least one spatial coordinate");
    double s = -x[0] * y[0];
    for (std::size_t i = 1; i < x.size(); ++i) s += x[i] * y[i];
    return s;
}

Tensor lorentz_inner(const Tensor& x, const Tensor& y) {
    require_points(x, "lorentz_inner");
    require_points(y, "lorentz_inner");
    if (x.cols() != y.cols()) throw ShapeError("lorentz_inner: dimension mismatch");
    Tensor full = ad::sum(x * y, 1);
    Tensor time = ad::slice(x, 1, 0, 1) * ad::slice(y, 1, 0, 1);
    return full - ad::scale(time, 2.0);
}

Tensor origin(std::size_t n, const Tensor& c) {
    if (n < 1) throw ContractError("origin: dimension must be >= 1");
    require_curvature(c, "origin");
    Tensor time = Tensor::zeros({1, 1}) + ad::sqrt(-reciprocal(c));
    return ad::concat({time, Tensor::zeros({1, n})}, 1);
}

Tensor origin(std::size_t n, double c) { return origin(n, Tensor::scalar(c)); }

Tensor exp_map(const Tensor& x, const Tensor& y, const Tensor& c) {
    require_points(x, "exp_map");
    require_points(y, "exp_map");
    require_curvature(c, "exp_map");
    Tensor sq = lorentz_inner(y, y);
    for (double v : sq.data()) {
        if (v < -1e-10) throw DomainError("exp_map: timelike tangent vector (negative Lorentz norm)");
    }
    Tensor norm = ad::sqrt(ad::clamp_min(sq, kNormFloor * kNormFloor));
    Tensor theta = ad::sqrt(-c) * norm;
    check_argument_cap(theta, "exp_map");
    return ad::cosh(theta) * x + ad::sinhc(theta) * y;
}

Tensor log_map(const Tensor& x, const Tensor& z, const Tensor& c) {
    require_points(x, "log_map");
    require_points(z, "log_map");
    require_curvature(c, "log_map");
    const double cv = c.item();
    if (scaled_manifold_residual(z, cv) > kManifoldTolerance || min_time(z) <= 0.0) {
        throw ContractError("log_map: point is not on the manifold");
    }
    Tensor a = c * lorentz_inner(x, z);
    Tensor coef = ad::arcosh_ratio(ad::clamp_min(a, kArcoshFloor));
    return coef * (z - a * x);
}

Tensor exp_map_origin(const Tensor& v, const Tensor& c) {
    if (v.rank() != 2) throw ShapeError("exp_map_origin: expected an N x n matrix");
    require_curvature(c, "exp_map_origin");
    const std::size_t rows = v.rows(), d = v.cols(), w = d + 1;
    const double k = std::sqrt(-c.item());
    auto vv = v.data();
    std::vector<double> out(rows * w);
    for (std::size_t i = 0; i < rows; ++i) {
        double q = 0.0;
        for (std::size_t j = 0; j < d; ++j) q += vv[i * d + j] * vv[i * d + j];
        const double theta = k * std::sqrt(std::max(q, kNormFloor * kNormFloor));
        if (theta > kMaxHyperbolicArg) {
            throw DomainError("exp_map_origin: hyperbolic argument " + std::to_string(theta) +
                              " exceeds 50 (diverging embedding)");
        }
        out[i * w] = std::cosh(theta) / k;
        const double s = ad::fn::sinhc(theta);
        for (std::size_t j = 0; j < d; ++j) out[i * w + 1 + j] = s * vv[i * d + j];
    }
    return ad::custom_op("exp_map_origin", {rows, w}, std::move(out), {v, c}, [rows, d, w, k](ad::Node& o) {
        ad::Node& nv = *o.inputs[0];
        const auto& g = o.grad;
        double gk = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
            const double* vi = nv.value.data() + i * d;
            const double* gs = g.data() + i * w + 1;
            const double gt = g[i * w];
            double q = 0.0, dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
                q += vi[j] * vi[j];
                dot += gs[j] * vi[j];
            }
            const bool floored = q < kNormFloor * kNormFloor;
            const double n = std::sqrt(std::max(q, kNormFloor * kNormFloor));
            const double theta = k * n;
            const double sh = std::sinh(theta), ch = std::cosh(theta);
            const double s = ad::fn::sinhc(theta), ds = ad::fn::sinhc_derivative(theta);
            gk += gt * (sh * n * k - ch) / (k * k) + dot * ds * n;
            if (nv.requires_grad) {
                double* gv = nv.grad_buffer().data() + i * d;
                const double radial = floored ? 0.0 : (gt * sh + dot * ds * k) / n;
                for (std::size_t j = 0; j < d; ++j) gv[j] += s * gs[j] + radial * vi[j];
            }
        }
        if (o.inputs[1]->requires_grad) o.inputs[1]->grad_buffer()[0] += -gk / (2.0 * k);
    });
}

Tensor log_map_origin(const Tensor& z, const Tensor& c) {
    require_points(z, "log_map_origin");
    require_curvature(c, "log_map_origin");
    const std::size_t rows = z.rows(), w = z.cols(), d = w - 1;
    const double k = std::sqrt(-c.item());
    auto zv = z.data();
    std::vector<double> out(rows * d);
    for (std::size_t i = 0; i < rows; ++i) {
        const double coef = ad::fn::arcosh_ratio(std::max(k * zv[i * w], kArcoshFloor));
        for (std::size_t j = 0; j < d; ++j) out[i * d + j] = coef * zv[i * w + 1 + j];
    }
    return ad::custom_op("log_map_origin", {rows, d}, std::move(out), {z, c}, [rows, d, w, k](ad::Node& o) {
        ad::Node& nz = *o.inputs[0];
        const auto& g = o.grad;
        double gk = 0.0;
        for (std::size_t i = 0; i < rows; ++i) {
            const double* zi = nz.value.data() + i * w;
            const double* gi = g.data() + i * d;
            const double a = k * zi[0];
            const bool floored = a < kArcoshFloor;
            const double coef = ad::fn::arcosh_ratio(std::max(a, kArcoshFloor));
            double dot = 0.0;
            for (std::size_t j = 0; j < d; ++j) dot += gi[j] * zi[1 + j];
            const double ga = floored ? 0.0 : dot * ad::fn::arcosh_ratio_derivative(a, coef);
            gk += ga * zi[0];
            if (nz.requires_grad) {
                double* gz = nz.grad_buffer().data() + i * w;
                gz[0] += ga * k;
                for (std::size_t j = 0; j < d; ++j) gz[1 + j] += coef * gi[j];
            }
        }
        if (o.inputs[1]->requires_grad) o.inputs[1]->grad_buffer()[0] += -gk / (2.0 * k);
    });
}

Tensor ht(const Tensor& x, const Tensor& weight, const Tensor& bias, const Tensor& c1, const Tensor& c2) {
    require_points(x, "ht");
    require_curvature(c1, "ht");
    require_curvature(c2, "ht");
    Tensor f = ad::matmul(x, weight) + bias;
    return lift(f, c1 / c2, c2, "ht");
}

Tensor hr(const Tensor& x, const SpatialFn& fs, const Tensor& c1, const Tensor& c2) {
    require_points(x, "hr");
    require_curvature(c1, "hr");
    require_curvature(c2, "hr");
    Tensor f = fs(ad::slice(x, 1, 1, x.cols()));
    return lift(f, c1 / c2, c2, "hr");
}

Tensor time_reconstruct(const Tensor& spatial, const Tensor& c) {
    if (spatial.rank() != 2) throw ShapeError("time_reconstruct: expected an N x d matrix");
    require_curvature(c, "time_reconstruct");
    return lift(spatial, Tensor::scalar(1.0), c, "time_reconstruct");
}

double manifold_residual(const Tensor& x, double c) {
    const std::size_t r = x.rows(), d = x.cols();
    auto v = x.data();
    double worst = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
        const double inner = lorentz_inner(v.subspan(i * d, d), v.subspan(i * d, d));
        worst = std::max(worst, std::abs(c * inner - 1.0));
    }
    return worst;
}

double scaled_manifold_residual(const Tensor& x, double c) {
    const std::size_t r = x.rows(), d = x.cols();
    auto v = x.data();
    double worst = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
        auto row = v.subspan(i * d, d);
        double sq = 0.0;
        for (double e : row) sq += e * e;
        worst = std::max(worst, std::abs(c * lorentz_inner(row, row) - 1.0) / (1.0 + std::abs(c) * sq));
    }
    return worst;
}

double tangent_residual(const Tensor& x, const Tensor& y) {
    const std::size_t d = y.cols();
    auto xv = x.data();
    auto yv = y.data();
    double worst = 0.0;
    for (std::size_t i = 0; i < y.rows(); ++i) {
        const std::size_t xi = x.rows() == 1 ? 0 : i;
        worst = std::max(worst, std::abs(lorentz_inner(xv.subspan(xi * d, d), yv.subspan(i * d, d))));
    }
    return worst;
}

double min_time(const Tensor& x) {
    double m = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < x.rows(); ++i) m = std::min(m, x.data()[i * x.cols()]);
    return m;
}

}  // namespace hyphgt::lorentz
