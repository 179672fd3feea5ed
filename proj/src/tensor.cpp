#include "hyphgt/tensor.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <unordered_set>
#include <utility>

#include "hyphgt/errors.hpp"

namespace hyphgt::ad {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMajor>;
using MutMap = Eigen::Map<RowMajor>;

struct Dims {
    std::size_t r;
    std::size_t c;
};

Dims dims_of(const Shape& s) {
    if (s.empty()) return {1, 1};
    if (s.size() == 1) return {1, s[0]};
    return {s[0], s[1]};
}

std::size_t product(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw ShapeError(std::string(op) + ": expected a 2-D tensor, got shape " +
                         shape_str(t.shape()));
    }
}

void check_finite(const std::vector<double>& v, const char* op) {
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw DomainError(std::string(op) + ": produced a non-finite value");
        }
    }
}

thread_local bool g_grad_enabled = true;

Tensor make_op(const char* op, Shape shape, std::vector<double> value,
               const std::vector<Tensor>& inputs, BackwardFn backward) {
    check_finite(value, op);
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = op;
    bool any = false;
    if (g_grad_enabled)
        for (const auto& in : inputs) any = any || in.requires_grad();
    if (any) {
        node->requires_grad = true;
        node->inputs.reserve(inputs.size());
        for (const auto& in : inputs) node->inputs.push_back(in.node());
        node->backward = std::move(backward);
    }
    return Tensor(std::move(node));
}

// Strides that map an output (i, j) onto a possibly broadcast operand.
struct Bcast {
    std::size_t row_stride;
    std::size_t col_stride;
    std::size_t index(std::size_t i, std::size_t j) const { return i * row_stride + j * col_stride; }
};

Bcast bcast_of(Dims d) { return {d.r == 1 ? 0 : d.c, d.c == 1 ? std::size_t{0} : std::size_t{1}}; }

std::size_t bcast_dim(std::size_t a, std::size_t b, const char* op, const Shape& sa,
                      const Shape& sb) {
    if (a == b || b == 1) return a;
    if (a == 1) return b;
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_str(sa) + " with " +
                     shape_str(sb));
}

template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* op, F f, DA da, DB db) {
    const Dims ad = dims_of(a.shape());
    const Dims bd = dims_of(b.shape());
    const std::size_t r = bcast_dim(ad.r, bd.r, op, a.shape(), b.shape());
    const std::size_t c = bcast_dim(ad.c, bd.c, op, a.shape(), b.shape());
    const std::size_t rank = std::max(a.rank(), b.rank());
    Shape out_shape;
    if (rank == 2) out_shape = {r, c};
    else if (rank == 1) out_shape = {c};

    const Bcast ba = bcast_of(ad);
    const Bcast bb = bcast_of(bd);
    auto av = a.data();
    auto bv = b.data();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            out[i * c + j] = f(av[ba.index(i, j)], bv[bb.index(i, j)]);
        }
    }
    return make_op(op, std::move(out_shape), std::move(out), {a, b},
                   [r, c, ba, bb, da, db](Node& o) {
                       Node& na = *o.inputs[0];
                       Node& nb = *o.inputs[1];
                       const auto& g = o.grad;
                       if (na.requires_grad) {
                           auto& ga = na.grad_buffer();
                           for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < c; ++j) {
                                   const std::size_t k = i * c + j;
                                   const std::size_t ia = ba.index(i, j);
                                   const std::size_t ib = bb.index(i, j);
                                   ga[ia] += g[k] * da(na.value[ia], nb.value[ib], o.value[k]);
                               }
                       }
                       if (nb.requires_grad) {
                           auto& gb = nb.grad_buffer();
                           for (std::size_t i = 0; i < r; ++i)
                               for (std::size_t j = 0; j < c; ++j) {
                                   const std::size_t k = i * c + j;
                                   const std::size_t ia = ba.index(i, j);
                                   const std::size_t ib = bb.index(i, j);
                                   gb[ib] += g[k] * db(na.value[ia], nb.value[ib], o.value[k]);
                               }
                       }
                   });
}

// df receives (x, y) where y = f(x).
template <class F, class DF>
Tensor unary(const Tensor& a, const char* op, F f, DF df) {
    auto av = a.data();
    std::vector<double> out(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
    return make_op(op, a.shape(), std::move(out), {a}, [df](Node& o) {
        Node& na = *o.inputs[0];
        auto& ga = na.grad_buffer();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += o.grad[i] * df(na.value[i], o.value[i]);
    });
}

Tensor constant(double s) { return Tensor::scalar(s); }

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

std::vector<double>& Node::grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
}

// --- Tensor ----------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
    const std::size_t n = product(shape);
    return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
    if (product(shape) != data.size()) {
        throw ShapeError("from_data: shape " + shape_str(shape) + " does not hold " +
                         std::to_string(data.size()) + " values");
    }
    check_finite(data, "from_data");
    auto node = std::make_shared<Node>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value, bool requires_grad) { return from_data({}, {value}, requires_grad); }

Tensor Tensor::vector(std::vector<double> data, bool requires_grad) {
    const std::size_t n = data.size();
    return from_data({n}, std::move(data), requires_grad);
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> data;
    data.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("matrix: ragged initializer");
        data.insert(data.end(), row.begin(), row.end());
    }
    return from_data({r, c}, std::move(data), requires_grad);
}

const Shape& Tensor::shape() const { return node_->shape; }
std::size_t Tensor::numel() const { return node_->value.size(); }
std::size_t Tensor::rows() const { return dims_of(shape()).r; }
std::size_t Tensor::cols() const { return dims_of(shape()).c; }
std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::mutable_data() { return node_->value; }

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not a scalar");
    return node_->value[0];
}

double Tensor::at(std::size_t i) const { return node_->value.at(i); }
double Tensor::at(std::size_t r, std::size_t c) const { return node_->value.at(r * cols() + c); }

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }
void Tensor::set_requires_grad(bool flag) { node_->requires_grad = flag; }
bool Tensor::has_grad() const { return node_->grad.size() == node_->value.size(); }

std::vector<double> Tensor::grad() const {
    if (!has_grad()) return std::vector<double>(numel(), 0.0);
    return node_->grad;
}

void Tensor::zero_grad() {
    if (has_grad()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

const char* Tensor::op() const { return node_->op; }

Tensor Tensor::detach() const { return from_data(shape(), node_->value, false); }

void Tensor::backward() const {
    if (!defined() || numel() != 1) {
        throw ContractError("backward: loss must be a scalar tensor");
    }
    Tape tape = Tape::trace(*this);
    tape.run_backward();
}

// --- Tape ------------------------------------------------------------------

Tape Tape::trace(const Tensor& root) {
    Tape tape;
    tape.root_ = root.node();
    if (!root.requires_grad()) return tape;

    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.node().get(), 0);
    visited.insert(root.node().get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.emplace_back(child, 0);
        } else {
            tape.order_.push_back(node);
            stack.pop_back();
        }
    }
    return tape;
}

std::size_t Tape::operation_count() const {
    return static_cast<std::size_t>(
        std::count_if(order_.begin(), order_.end(), [](const Node* n) { return static_cast<bool>(n->backward); }));
}

void Tape::run_backward() {
    if (order_.empty()) return;
    for (Node* n : order_) {
        if (n->backward) std::vector<double>().swap(n->grad);
        else n->grad.assign(n->value.size(), 0.0);
    }
    root_->grad_buffer()[0] = 1.0;
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        Node* n = *it;
        if (!n->backward) continue;
        n->grad_buffer();
        n->backward(*n);
        if (n != root_.get()) std::vector<double>().swap(n->grad);
    }
}

Tensor custom_op(const char* name, Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                 BackwardFn backward) {
    if (product(shape) != value.size()) throw ShapeError(std::string(name) + ": value size does not match shape");
    return make_op(name, std::move(shape), std::move(value), inputs, std::move(backward));
}

// --- binary ----------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double, double) { return 1.0; },
        [](double, double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
    return binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y, double) { return y; },
        [](double x, double, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
    for (double y : b.data()) {
        if (y == 0.0) throw DomainError("div: zero denominator");
    }
    return binary(
        a, b, "div", [](double x, double y) { return x / y; }, [](double, double y, double) { return 1.0 / y; },
        [](double, double y, double o) { return -o / y; });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator+(const Tensor& a, double s) { return add(a, constant(s)); }
Tensor operator+(double s, const Tensor& a) { return add(constant(s), a); }
Tensor operator-(const Tensor& a, double s) { return sub(a, constant(s)); }
Tensor operator-(double s, const Tensor& a) { return sub(constant(s), a); }
Tensor operator*(const Tensor& a, double s) { return scale(a, s); }
Tensor operator*(double s, const Tensor& a) { return scale(a, s); }
Tensor operator/(const Tensor& a, double s) {
    if (s == 0.0) throw DomainError("div: zero denominator");
    return scale(a, 1.0 / s);
}
Tensor operator-(const Tensor& a) { return scale(a, -1.0); }

Tensor scale(const Tensor& a, double s) {
    return unary(
        a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

// --- unary -----------------------------------------------------------------

Tensor sqrt(const Tensor& a) {
    for (double x : a.data()) {
        if (x < 0.0) throw DomainError("sqrt: negative argument");
    }
    return unary(
        a, "sqrt", [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

Tensor square(const Tensor& a) {
    return unary(
        a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor exp(const Tensor& a) {
    return unary(
        a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log(const Tensor& a) {
    for (double x : a.data()) {
        if (!(x > 0.0)) throw DomainError("log: non-positive argument");
    }
    return unary(
        a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Tensor cosh(const Tensor& a) {
    return unary(
        a, "cosh", [](double x) { return std::cosh(x); }, [](double x, double) { return std::sinh(x); });
}

Tensor sinh(const Tensor& a) {
    return unary(
        a, "sinh", [](double x) { return std::sinh(x); }, [](double x, double) { return std::cosh(x); });
}

Tensor relu(const Tensor& a) {
    return unary(
        a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor& a, double slope) {
    return unary(
        a, "leaky_relu", [slope](double x) { return x > 0.0 ? x : slope * x; },
        [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor elu(const Tensor& a, double alpha) {
    return unary(
        a, "elu", [alpha](double x) { return x > 0.0 ? x : alpha * std::expm1(x); },
        [alpha](double x, double y) { return x > 0.0 ? 1.0 : y + alpha; });
}

Tensor softplus(const Tensor& a) {
    return unary(
        a, "softplus",
        [](double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); },
        [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor clamp_min(const Tensor& a, double lo) {
    return unary(
        a, "clamp_min", [lo](double x) { return x < lo ? lo : x; },
        [lo](double x, double) { return x < lo ? 0.0 : 1.0; });
}

Tensor sinhc(const Tensor& a) {
    return unary(
        a, "sinhc", [](double x) { return fn::sinhc(x); }, [](double x, double) { return fn::sinhc_derivative(x); });
}

Tensor arcosh_ratio(const Tensor& a) {
    for (double x : a.data()) {
        if (x < 1.0) throw DomainError("arcosh_ratio: argument below 1");
    }
    return unary(
        a, "arcosh_ratio", [](double x) { return fn::arcosh_ratio(x); },
        [](double x, double y) { return fn::arcosh_ratio_derivative(x, y); });
}

namespace fn {

double sinhc(double x) {
    if (std::abs(x) < 1e-4) {
        const double x2 = x * x;
        return 1.0 + x2 / 6.0 + x2 * x2 / 120.0;
    }
    return std::sinh(x) / x;
}

double sinhc_derivative(double x) {
    if (std::abs(x) < 1e-4) return x / 3.0 + x * x * x / 30.0;
    return (x * std::cosh(x) - std::sinh(x)) / (x * x);
}

// Second-order series below t = x - 1 < 1e-4; truncation error ~t^3.
double arcosh_ratio(double x) {
    const double t = x - 1.0;
    if (t < 1e-4) return 1.0 - t / 3.0 + 2.0 * t * t / 15.0;
    return std::acosh(x) / std::sqrt(x * x - 1.0);
}

double arcosh_ratio_derivative(double x, double y) {
    const double t = x - 1.0;
    if (t < 1e-4) return -1.0 / 3.0 + 4.0 * t / 15.0;
    return (1.0 - x * y) / (x * x - 1.0);
}

}  // namespace fn

Tensor map_unary(const Tensor& a, const char* name, std::function<double(double)> f,
                 std::function<double(double)> df) {
    return unary(
        a, name, [f](double x) { return f(x); }, [df](double x, double) { return df(x); });
}

// --- linear algebra --------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    if (b.rows() != k) {
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    }
    std::vector<double> out(m * n);
    const auto em = static_cast<Eigen::Index>(m), ek = static_cast<Eigen::Index>(k),
               en = static_cast<Eigen::Index>(n);
    MutMap(out.data(), em, en).noalias() = ConstMap(a.data().data(), em, ek) * ConstMap(b.data().data(), ek, en);
    return make_op("matmul", {m, n}, std::move(out), {a, b}, [em, ek, en](Node& o) {
        Node& na = *o.inputs[0];
        Node& nb = *o.inputs[1];
        ConstMap g(o.grad.data(), em, en);
        if (na.requires_grad) {
            MutMap(na.grad_buffer().data(), em, ek).noalias() += g * ConstMap(nb.value.data(), ek, en).transpose();
        }
        if (nb.requires_grad) {
            MutMap(nb.grad_buffer().data(), ek, en).noalias() += ConstMap(na.value.data(), em, ek).transpose() * g;
        }
    });
}

Tensor transpose(const Tensor& a) {
    require_rank2(a, "transpose");
    const std::size_t r = a.rows(), c = a.cols();
    std::vector<double> out(r * c);
    auto av = a.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = av[i * c + j];
    return make_op("transpose", {c, r}, std::move(out), {a}, [r, c](Node& o) {
        auto& ga = o.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += o.grad[j * r + i];
    });
}

// --- reductions ------------------------------------------------------------

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data()) s += x;
    return make_op("sum", {}, {s}, {a}, [](Node& o) {
        auto& ga = o.inputs[0]->grad_buffer();
        for (double& g : ga) g += o.grad[0];
    });
}

Tensor mean(const Tensor& a) {
    if (a.numel() == 0) throw ShapeError("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum(const Tensor& a, int axis) {
    if (a.rank() < 2) {
        if (axis != 0) throw ShapeError("sum: axis out of range");
        return sum(a);
    }
    require_rank2(a, "sum");
    if (axis != 0 && axis != 1) throw ShapeError("sum: axis out of range");
    const std::size_t r = a.rows(), c = a.cols();
    auto av = a.data();
    if (axis == 0) {
        std::vector<double> out(c, 0.0);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[j] += av[i * c + j];
        return make_op("sum_rows", {1, c}, std::move(out), {a}, [r, c](Node& o) {
            auto& ga = o.inputs[0]->grad_buffer();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += o.grad[j];
        });
    }
    std::vector<double> out(r, 0.0);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i] += av[i * c + j];
    return make_op("sum_cols", {r, 1}, std::move(out), {a}, [r, c](Node& o) {
        auto& ga = o.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += o.grad[i];
    });
}

Tensor mean(const Tensor& a, int axis) {
    const std::size_t n = (a.rank() < 2) ? a.numel() : (axis == 0 ? a.rows() : a.cols());
    if (n == 0) throw ShapeError("mean: empty axis");
    return scale(sum(a, axis), 1.0 / static_cast<double>(n));
}

Tensor softmax(const Tensor& a, int axis) {
    require_rank2(a, "softmax");
    if (axis != 0 && axis != 1) throw ShapeError("softmax: axis out of range");
    const std::size_t r = a.rows(), c = a.cols();
    // Element (line, pos) along the softmax axis.
    const std::size_t lines = axis == 1 ? r : c;
    const std::size_t len = axis == 1 ? c : r;
    auto idx = [axis, c, r](std::size_t line, std::size_t pos) {
        (void)r;
        return axis == 1 ? line * c + pos : pos * c + line;
    };
    auto av = a.data();
    std::vector<double> out(r * c);
    for (std::size_t l = 0; l < lines; ++l) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t p = 0; p < len; ++p) mx = std::max(mx, av[idx(l, p)]);
        double z = 0.0;
        for (std::size_t p = 0; p < len; ++p) {
            const double e = std::exp(av[idx(l, p)] - mx);
            out[idx(l, p)] = e;
            z += e;
        }
        for (std::size_t p = 0; p < len; ++p) out[idx(l, p)] /= z;
    }
    return make_op("softmax", a.shape(), std::move(out), {a}, [lines, len, idx](Node& o) {
        auto& ga = o.inputs[0]->grad_buffer();
        for (std::size_t l = 0; l < lines; ++l) {
            double dot = 0.0;
            for (std::size_t p = 0; p < len; ++p) dot += o.grad[idx(l, p)] * o.value[idx(l, p)];
            for (std::size_t p = 0; p < len; ++p) {
                const std::size_t k = idx(l, p);
                ga[k] += o.value[k] * (o.grad[k] - dot);
            }
        }
    });
}

Tensor row_norm(const Tensor& a) {
    require_rank2(a, "row_norm");
    const std::size_t r = a.rows(), c = a.cols();
    auto av = a.data();
    std::vector<double> out(r);
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += av[i * c + j] * av[i * c + j];
        out[i] = std::sqrt(s);
    }
    // The zero row takes the zero subgradient.
    return make_op("row_norm", {r, 1}, std::move(out), {a}, [r, c](Node& o) {
        Node& na = *o.inputs[0];
        auto& ga = na.grad_buffer();
        for (std::size_t i = 0; i < r; ++i) {
            if (o.value[i] == 0.0) continue;
            const double s = o.grad[i] / o.value[i];
            for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += s * na.value[i * c + j];
        }
    });
}

// --- shape -----------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    if (axis != 0 && axis != 1) throw ShapeError("concat: axis out of range");
    for (const auto& p : parts) require_rank2(p, "concat");
    const std::size_t r0 = parts[0].rows(), c0 = parts[0].cols();
    std::vector<std::size_t> offsets;
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (axis == 0 ? p.cols() != c0 : p.rows() != r0) {
            throw ShapeError("concat: mismatched shape " + shape_str(p.shape()));
        }
        offsets.push_back(total);
        total += axis == 0 ? p.rows() : p.cols();
    }
    const std::size_t r = axis == 0 ? total : r0;
    const std::size_t c = axis == 0 ? c0 : total;
    std::vector<double> out(r * c);
    for (std::size_t k = 0; k < parts.size(); ++k) {
        auto pv = parts[k].data();
        const std::size_t pr = parts[k].rows(), pc = parts[k].cols();
        for (std::size_t i = 0; i < pr; ++i)
            for (std::size_t j = 0; j < pc; ++j) {
                const std::size_t oi = axis == 0 ? i + offsets[k] : i;
                const std::size_t oj = axis == 0 ? j : j + offsets[k];
                out[oi * c + oj] = pv[i * pc + j];
            }
    }
    return make_op("concat", {r, c}, std::move(out), parts, [axis, c, offsets](Node& o) {
        for (std::size_t k = 0; k < o.inputs.size(); ++k) {
            Node& in = *o.inputs[k];
            if (!in.requires_grad) continue;
            auto& g = in.grad_buffer();
            const std::size_t pr = in.shape[0], pc = in.shape[1];
            for (std::size_t i = 0; i < pr; ++i)
                for (std::size_t j = 0; j < pc; ++j) {
                    const std::size_t oi = axis == 0 ? i + offsets[k] : i;
                    const std::size_t oj = axis == 0 ? j : j + offsets[k];
                    g[i * pc + j] += o.grad[oi * c + oj];
                }
        }
    });
}

Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end) {
    require_rank2(a, "slice");
    if (axis != 0 && axis != 1) throw ShapeError("slice: axis out of range");
    const std::size_t r = a.rows(), c = a.cols();
    const std::size_t extent = axis == 0 ? r : c;
    if (begin > end || end > extent) {
        throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") out of bounds for " + shape_str(a.shape()));
    }
    const std::size_t orows = axis == 0 ? end - begin : r;
    const std::size_t ocols = axis == 0 ? c : end - begin;
    const std::size_t r0 = axis == 0 ? begin : 0;
    const std::size_t c0 = axis == 0 ? 0 : begin;
    auto av = a.data();
    std::vector<double> out(orows * ocols);
    for (std::size_t i = 0; i < orows; ++i)
        for (std::size_t j = 0; j < ocols; ++j) out[i * ocols + j] = av[(i + r0) * c + (j + c0)];
    return make_op("slice", {orows, ocols}, std::move(out), {a}, [orows, ocols, r0, c0, c](Node& o) {
        auto& ga = o.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < orows; ++i)
            for (std::size_t j = 0; j < ocols; ++j) ga[(i + r0) * c + (j + c0)] += o.grad[i * ocols + j];
    });
}

Tensor broadcast_rows(const Tensor& row, std::size_t n) {
    if (row.rank() > 2 || row.rows() != 1) {
        throw ShapeError("broadcast_rows: expected a row vector, got " + shape_str(row.shape()));
    }
    const std::size_t c = row.cols();
    auto rv = row.data();
    std::vector<double> out(n * c);
    for (std::size_t i = 0; i < n; ++i) std::copy(rv.begin(), rv.end(), out.begin() + static_cast<std::ptrdiff_t>(i * c));
    return make_op("broadcast_rows", {n, c}, std::move(out), {row}, [n, c](Node& o) {
        auto& ga = o.inputs[0]->grad_buffer();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) ga[j] += o.grad[i * c + j];
    });
}

// --- sparse ----------------------------------------------------------------

Tensor gather_rows(const Tensor& a, std::span<const std::uint32_t> index) {
    require_rank2(a, "gather_rows");
    const std::size_t r = a.rows(), c = a.cols(), e = index.size();
    for (auto i : index) {
        if (i >= r) throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range");
    }
    auto av = a.data();
    std::vector<double> out(e * c);
    for (std::size_t k = 0; k < e; ++k)
        std::copy_n(av.begin() + static_cast<std::ptrdiff_t>(index[k] * c), c,
                    out.begin() + static_cast<std::ptrdiff_t>(k * c));
    std::vector<std::uint32_t> idx(index.begin(), index.end());
    return make_op("gather_rows", {e, c}, std::move(out), {a}, [idx = std::move(idx), c](Node& o) {
        auto& ga = o.inputs[0]->grad_buffer();
        for (std::size_t k = 0; k < idx.size(); ++k)
            for (std::size_t j = 0; j < c; ++j) ga[idx[k] * c + j] += o.grad[k * c + j];
    });
}

Tensor scatter_add_rows(const Tensor& a, std::span<const std::uint32_t> index, std::size_t num_rows) {
    require_rank2(a, "scatter_add_rows");
    const std::size_t e = a.rows(), c = a.cols();
    if (index.size() != e) throw ShapeError("scatter_add_rows: index length differs from row count");
    for (auto i : index) {
        if (i >= num_rows) throw ShapeError("scatter_add_rows: index " + std::to_string(i) + " out of range");
    }
    auto av = a.data();
    std::vector<double> out(num_rows * c, 0.0);
    for (std::size_t k = 0; k < e; ++k)
        for (std::size_t j = 0; j < c; ++j) out[index[k] * c + j] += av[k * c + j];
    std::vector<std::uint32_t> idx(index.begin(), index.end());
    return make_op("scatter_add_rows", {num_rows, c}, std::move(out), {a}, [idx = std::move(idx), c](Node& o) {
        auto& ga = o.inputs[0]->grad_buffer();
        for (std::size_t k = 0; k < idx.size(); ++k)
            for (std::size_t j = 0; j < c; ++j) ga[k * c + j] += o.grad[idx[k] * c + j];
    });
}

Tensor segment_softmax(const Tensor& scores, std::span<const std::uint32_t> segment, std::size_t num_segments) {
    require_rank2(scores, "segment_softmax");
    const std::size_t e = scores.rows(), h = scores.cols();
    if (segment.size() != e) throw ShapeError("segment_softmax: segment length differs from row count");
    for (auto s : segment) {
        if (s >= num_segments) throw ShapeError("segment_softmax: segment id out of range");
    }
    auto sv = scores.data();
    std::vector<double> mx(num_segments * h, -std::numeric_limits<double>::infinity());
    for (std::size_t k = 0; k < e; ++k)
        for (std::size_t j = 0; j < h; ++j) {
            double& m = mx[segment[k] * h + j];
            m = std::max(m, sv[k * h + j]);
        }
    std::vector<double> z(num_segments * h, 0.0);
    std::vector<double> out(e * h);
    for (std::size_t k = 0; k < e; ++k)
        for (std::size_t j = 0; j < h; ++j) {
            const double v = std::exp(sv[k * h + j] - mx[segment[k] * h + j]);
            out[k * h + j] = v;
            z[segment[k] * h + j] += v;
        }
    for (std::size_t k = 0; k < e; ++k)
        for (std::size_t j = 0; j < h; ++j) out[k * h + j] /= z[segment[k] * h + j];
    std::vector<std::uint32_t> seg(segment.begin(), segment.end());
    return make_op("segment_softmax", {e, h}, std::move(out), {scores},
                   [seg = std::move(seg), num_segments, h](Node& o) {
                       auto& ga = o.inputs[0]->grad_buffer();
                       std::vector<double> dot(num_segments * h, 0.0);
                       for (std::size_t k = 0; k < seg.size(); ++k)
                           for (std::size_t j = 0; j < h; ++j)
                               dot[seg[k] * h + j] += o.grad[k * h + j] * o.value[k * h + j];
                       for (std::size_t k = 0; k < seg.size(); ++k)
                           for (std::size_t j = 0; j < h; ++j) {
                               const std::size_t i = k * h + j;
                               ga[i] += o.value[i] * (o.grad[i] - dot[seg[k] * h + j]);
                           }
                   });
}

}  // namespace hyphgt::ad
