// Tape-based reverse-mode automatic differentiation over dense float64 tensors.
//
// Every op computes its forward value eagerly. When any input carries a node on
// a graph that is currently recording, the op appends a node to that graph.
// Backward rules are written in terms of the same ops, so running backward with
// create_graph=true records the backward pass and its results can be
// differentiated again (double backprop).
#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace xfer::ag {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string to_string(const Shape& shape);

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ZeroNormError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class GraphError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

enum class OpKind : std::uint8_t {
    leaf,
    add,
    sub,
    mul,
    div,
    scale,
    add_scalar,
    negate,
    matmul,
    conv2d,
    conv2d_input_grad,
    conv2d_weight_grad,
    maxpool2d,
    maxpool_scatter,
    maxpool_gather,
    relu,
    sum,
    mean,
    dot,
    l2_norm,
    square,
    sqrt,
    log,
    exp,
    tanh,
    softmax,
    log_softmax,
    index_select,
    index_scatter,
    take_rows,
    scatter_rows,
    sign,
    reshape,
    broadcast_scalar,
    reduce_to_axis,
    broadcast_axis,
    clamp_min,
};

std::string_view op_name(OpKind kind);
std::optional<OpKind> op_from_name(std::string_view name);

class Graph;

using Indices = std::shared_ptr<const std::vector<std::uint32_t>>;

/// Dense row-major float64 array. Copies share the value buffer, which is
/// never mutated after construction.
class Tensor {
public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values);

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor scalar(double value);

    const Shape& shape() const { return shape_; }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t rank() const { return shape_.size(); }
    std::size_t numel() const { return values_ ? values_->size() : 0; }
    std::span<const double> values() const;
    double operator[](std::size_t i) const { return (*values_)[i]; }
    double item() const;

    bool has_node() const { return graph_ != nullptr; }
    Graph* graph() const { return graph_; }
    std::int64_t node_id() const { return node_; }

    /// Same values, no graph node.
    Tensor detach() const;

private:
    friend class Graph;
    Shape shape_;
    std::shared_ptr<const std::vector<double>> values_;
    Graph* graph_ = nullptr;
    std::int64_t node_ = -1;
};

struct Attrs {
    double scalar = 0.0;
    bool flag_a = false;
    bool flag_b = false;
    std::size_t axis = 0;
    Shape shape;
    Indices indices;
};

struct Node {
    OpKind kind = OpKind::leaf;
    std::vector<Tensor> inputs;
    Tensor output;
    Attrs attrs;
};

/// Append-only tape. Parent ids of node i are all < i.
class Graph {
public:
    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    /// Leaf that gradients can be requested for.
    Tensor variable(Shape shape, std::vector<double> values);
    Tensor variable(const Tensor& value);

    std::size_t size() const { return nodes_.size(); }
    const Node& node(std::size_t id) const { return nodes_.at(id); }
    bool recording() const { return recording_; }

    /// Scans parent ids; throws GraphError if any node references itself or a later node.
    void check_topological() const;

    Tensor append(OpKind kind, std::vector<Tensor> inputs, Shape shape,
                  std::vector<double> values, Attrs attrs = {});

private:
    friend class NoRecordGuard;
    std::deque<Node> nodes_;
    bool recording_ = true;
};

/// Suspends recording on a graph for the guard's lifetime.
class NoRecordGuard {
public:
    explicit NoRecordGuard(Graph* graph);
    ~NoRecordGuard();
    NoRecordGuard(const NoRecordGuard&) = delete;
    NoRecordGuard& operator=(const NoRecordGuard&) = delete;

private:
    Graph* graph_;
    bool previous_;
};

struct GradientRequest {
    Tensor output;
    std::vector<Tensor> wrt;
    bool create_graph = false;
};

/// d output / d wrt[i] for each i, shaped like wrt[i]. Tensors the output does
/// not depend on get zero gradients.
std::vector<Tensor> backward(const GradientRequest& request);
std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& wrt,
                         bool create_graph = false);

// Elementwise (identical shapes).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor add_scalar(const Tensor& a, double offset);
Tensor negate(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor clamp_min(const Tensor& a, double floor);
/// Forward only; sign(0) = 0 and the result carries no gradient.
Tensor sign(const Tensor& a);

// Linear algebra. 2-D operands; the flags transpose an operand before multiplying.
Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a = false,
              bool transpose_b = false);

// Convolution, valid padding, stride 1. x: [N,C,H,W], w: [O,C,K,K].
Tensor conv2d(const Tensor& x, const Tensor& w);
/// Adjoint of conv2d with respect to x: [N,O,H-K+1,W-K+1] -> [N,C,H,W].
Tensor conv2d_input_grad(const Tensor& g, const Tensor& w, std::size_t height,
                         std::size_t width);
/// Adjoint of conv2d with respect to w.
Tensor conv2d_weight_grad(const Tensor& x, const Tensor& g, std::size_t kernel);

/// 2x2 window, stride 2, floor mode. Ties go to the lowest flat index.
Tensor maxpool2d(const Tensor& x);
Tensor maxpool_scatter(const Tensor& g, const Indices& argmax, const Shape& input_shape);
Tensor maxpool_gather(const Tensor& x, const Indices& argmax, const Shape& pooled_shape);

// Reductions to shape [1].
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor l2_norm(const Tensor& a);

// Row-wise over the last axis of a [N,C] tensor, max-subtracted.
Tensor softmax(const Tensor& logits);
Tensor log_softmax(const Tensor& logits);

/// out[n] = x[n, labels[n]] for x: [N,C].
Tensor index_select(const Tensor& x, const Indices& labels);
Tensor index_select(const Tensor& x, std::span<const int> labels);
/// Adjoint of index_select: [N] -> [N,C], zeros off the selected entries.
Tensor index_scatter(const Tensor& g, const Indices& labels, std::size_t classes);

/// Rows (leading axis) selected by index.
Tensor take_rows(const Tensor& x, const Indices& rows);
Tensor scatter_rows(const Tensor& g, const Indices& rows, std::size_t total_rows);

Tensor reshape(const Tensor& a, Shape shape);
Tensor flatten_rows(const Tensor& a);
Tensor broadcast_scalar(const Tensor& s, const Shape& shape);
/// Sum over every axis except `axis`; result has shape [shape[axis]].
Tensor reduce_to_axis(const Tensor& a, std::size_t axis);
/// Adjoint of reduce_to_axis: repeat v along all other axes of `shape`.
Tensor broadcast_axis(const Tensor& v, const Shape& shape, std::size_t axis);

/// u.v / (|u| |v|). Throws ZeroNormError when either norm is zero.
Tensor cosine_similarity(const Tensor& u, const Tensor& v);
/// Per-row cosine of two [N,D] tensors, shape [N]. Rows must have nonzero norm.
Tensor rowwise_cosine(const Tensor& a, const Tensor& b);
/// Per-row l2 norm of [N,D], shape [N].
Tensor rowwise_norm(const Tensor& a);

/// Generic dispatch by op kind, for ops whose attributes fit in Attrs.
Tensor record(OpKind kind, const std::vector<Tensor>& inputs, const Attrs& attrs = {});

Indices make_indices(std::vector<std::uint32_t> values);

}  // namespace xfer::ag
