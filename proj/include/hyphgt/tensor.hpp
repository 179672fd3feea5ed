#pragma once

// Dense double-precision tensors with define-by-run reverse-mode
// differentiation.
//
// Every operation that receives at least one operand with requires_grad set
// records itself on the graph through its output node (inputs + backward
// rule). Tape::trace() linearises that graph into topological order and
// Tensor::backward() replays it in reverse. The graph is rebuilt on every
// forward pass; nothing persists between passes except leaf tensors.
//
// Most operations are defined for rank <= 2. Rank-1 tensors behave as row
// vectors and rank-0 tensors as 1x1 when broadcasting.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hyphgt::ad {

using Shape = std::vector<std::size_t>;

struct Node;
using NodePtr = std::shared_ptr<Node>;

// Backward rule: reads the output's grad and accumulates into the inputs'.
using BackwardFn = std::function<void(Node& out)>;

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<NodePtr> inputs;
    BackwardFn backward;

    std::size_t numel() const { return value.size(); }
    // Allocates a zeroed gradient buffer on first use.
    std::vector<double>& grad_buffer();
};

class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(NodePtr node) : node_(std::move(node)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double value, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double value, bool requires_grad = false);
    static Tensor vector(std::vector<double> data, bool requires_grad = false);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows,
                         bool requires_grad = false);

    bool defined() const { return static_cast<bool>(node_); }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t numel() const;
    // 2-D view: rank 0 -> 1x1, rank 1 (n) -> 1xn.
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const double> data() const;
    // Mutable access is meant for leaves (parameters, buffers) between passes.
    std::span<double> mutable_data();
    double item() const;
    double at(std::size_t i) const;
    double at(std::size_t r, std::size_t c) const;

    bool requires_grad() const;
    void set_requires_grad(bool flag);
    bool has_grad() const;
    // Gradient from the last backward pass; all zeros when never reached.
    std::vector<double> grad() const;
    void zero_grad();

    const char* op() const;
    Tensor detach() const;

    // Populates grad on every reachable requires_grad leaf (and on the root).
    // Gradients are overwritten, not accumulated across calls; intermediate
    // gradients are released once propagated.
    void backward() const;

    const NodePtr& node() const { return node_; }

  private:
    NodePtr node_;
};

// Topologically ordered view of the recorded operations feeding a tensor.
class Tape {
  public:
    static Tape trace(const Tensor& root);

    // Nodes in topological order: every node appears after all of its inputs.
    const std::vector<Node*>& nodes() const { return order_; }
    std::size_t size() const { return order_.size(); }
    // Number of recorded (non-leaf) operations.
    std::size_t operation_count() const;

    // Seeds d(root)/d(root) = 1 and runs every backward rule once, in reverse.
    void run_backward();

  private:
    std::vector<Node*> order_;
    NodePtr root_;
    std::vector<NodePtr> keep_alive_;
};

// --- elementwise binary (2-D broadcasting) ---------------------------------
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// Throws DomainError on a zero denominator; callers clamp beforehand.
Tensor div(const Tensor& a, const Tensor& b);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator+(const Tensor& a, double s);
Tensor operator+(double s, const Tensor& a);
Tensor operator-(const Tensor& a, double s);
Tensor operator-(double s, const Tensor& a);
Tensor operator*(const Tensor& a, double s);
Tensor operator*(double s, const Tensor& a);
Tensor operator/(const Tensor& a, double s);
Tensor operator-(const Tensor& a);

Tensor scale(const Tensor& a, double s);

// --- elementwise unary -----------------------------------------------------
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor cosh(const Tensor& a);
Tensor sinh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope = 0.2);
Tensor elu(const Tensor& a, double alpha = 1.0);
Tensor softplus(const Tensor& a);
// max(a, lo); gradient is zero where the floor is active.
Tensor clamp_min(const Tensor& a, double lo);
// sinh(x)/x with the removable singularity at 0 filled in.
Tensor sinhc(const Tensor& a);
// arcosh(x)/sqrt(x^2-1) for x >= 1, continuous at 1 (value 1).
Tensor arcosh_ratio(const Tensor& a);

// User-supplied elementwise op: value f(x), derivative df(x).
Tensor map_unary(const Tensor& a, const char* name, std::function<double(double)> f,
                 std::function<double(double)> df);

// --- linear algebra / shape ------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Full reduction to a rank-0 scalar.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// Reduction over one axis of a 2-D tensor; the reduced axis is kept with size 1.
Tensor sum(const Tensor& a, int axis);
Tensor mean(const Tensor& a, int axis);

// Softmax along an axis of a 2-D tensor, max-subtracted.
Tensor softmax(const Tensor& a, int axis);
// Euclidean norm of each row: (N x d) -> (N x 1).
Tensor row_norm(const Tensor& a);

Tensor concat(const std::vector<Tensor>& parts, int axis);
// Half-open range [begin, end) along an axis of a 2-D tensor.
Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end);
// Repeats a row vector (1 x d or d) n times -> (n x d).
Tensor broadcast_rows(const Tensor& row, std::size_t n);

// --- sparse helpers (message passing) --------------------------------------
// out[i] = a[index[i]]
Tensor gather_rows(const Tensor& a, std::span<const std::uint32_t> index);
// out[index[i]] += a[i], out has num_rows rows.
Tensor scatter_add_rows(const Tensor& a, std::span<const std::uint32_t> index,
                        std::size_t num_rows);
// Column-wise softmax of an (E x H) score matrix within groups of rows sharing
// a segment id; every row's segment must be < num_segments.
Tensor segment_softmax(const Tensor& scores, std::span<const std::uint32_t> segment,
                       std::size_t num_segments);

// While alive, operations on this thread record no graph (inference mode).
class NoGradGuard {
  public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool previous_;
};
bool grad_enabled();

// --- extension point --------------------------------------------------------
// Records an operation with a hand-written backward rule. The node joins the
// graph only when some input requires grad; the rule must skip inputs whose
// requires_grad is unset. Throws DomainError on non-finite output values.
Tensor custom_op(const char* name, Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                 BackwardFn backward);

// Scalar kernels shared by the elementwise ops and fused callers.
namespace fn {
double sinhc(double x);
double sinhc_derivative(double x);
// arcosh(x)/sqrt(x^2-1), x >= 1; the derivative takes y = arcosh_ratio(x).
double arcosh_ratio(double x);
double arcosh_ratio_derivative(double x, double y);
}  // namespace fn

}  // namespace hyphgt::ad
