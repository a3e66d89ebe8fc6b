#include "xfer/autograd.hpp"

#include <array>
#include <cmath>
#include <sstream>
#include <utility>

namespace xfer::ag {

std::size_t numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto extent : shape) n *= extent;
    return n;
}

std::string to_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

namespace {

constexpr std::array kOpNames = {
    std::pair{OpKind::leaf, "leaf"},
    std::pair{OpKind::add, "add"},
    std::pair{OpKind::sub, "sub"},
    std::pair{OpKind::mul, "mul"},
    std::pair{OpKind::div, "div"},
    std::pair{OpKind::scale, "scale"},
    std::pair{OpKind::add_scalar, "add_scalar"},
    std::pair{OpKind::negate, "negate"},
    std::pair{OpKind::matmul, "matmul"},
    std::pair{OpKind::conv2d, "conv2d"},
    std::pair{OpKind::conv2d_input_grad, "conv2d_input_grad"},
    std::pair{OpKind::conv2d_weight_grad, "conv2d_weight_grad"},
    std::pair{OpKind::maxpool2d, "maxpool2d"},
    std::pair{OpKind::maxpool_scatter, "maxpool_scatter"},
    std::pair{OpKind::maxpool_gather, "maxpool_gather"},
    std::pair{OpKind::relu, "relu"},
    std::pair{OpKind::sum, "sum"},
    std::pair{OpKind::mean, "mean"},
    std::pair{OpKind::dot, "dot"},
    std::pair{OpKind::l2_norm, "l2_norm"},
    std::pair{OpKind::square, "square"},
    std::pair{OpKind::sqrt, "sqrt"},
    std::pair{OpKind::log, "log"},
    std::pair{OpKind::exp, "exp"},
    std::pair{OpKind::tanh, "tanh"},
    std::pair{OpKind::softmax, "softmax"},
    std::pair{OpKind::log_softmax, "log_softmax"},
    std::pair{OpKind::index_select, "index_select"},
    std::pair{OpKind::index_scatter, "index_scatter"},
    std::pair{OpKind::take_rows, "take_rows"},
    std::pair{OpKind::scatter_rows, "scatter_rows"},
    std::pair{OpKind::sign, "sign"},
    std::pair{OpKind::reshape, "reshape"},
    std::pair{OpKind::broadcast_scalar, "broadcast_scalar"},
    std::pair{OpKind::reduce_to_axis, "reduce_to_axis"},
    std::pair{OpKind::broadcast_axis, "broadcast_axis"},
    std::pair{OpKind::clamp_min, "clamp_min"},
};

}  // namespace

std::string_view op_name(OpKind kind) {
    for (const auto& [k, name] : kOpNames)
        if (k == kind) return name;
    return "unknown";
}

std::optional<OpKind> op_from_name(std::string_view name) {
    for (const auto& [k, n] : kOpNames)
        if (name == n) return k;
    return std::nullopt;
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)),
      values_(std::make_shared<const std::vector<double>>(std::move(values))) {
    if (ag::numel(shape_) != values_->size())
        throw ShapeError("tensor shape " + to_string(shape_) + " does not match " +
                         std::to_string(values_->size()) + " values");
    for (auto extent : shape_)
        if (extent == 0) throw ShapeError("tensor extents must be positive");
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
    const auto n = ag::numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

std::span<const double> Tensor::values() const {
    if (!values_) return {};
    return {values_->data(), values_->size()};
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + to_string(shape_));
    return (*values_)[0];
}

Tensor Tensor::detach() const {
    Tensor out = *this;
    out.graph_ = nullptr;
    out.node_ = -1;
    return out;
}

Tensor Graph::variable(Shape shape, std::vector<double> values) {
    return variable(Tensor(std::move(shape), std::move(values)));
}

Tensor Graph::variable(const Tensor& value) {
    Tensor out = value.detach();
    out.graph_ = this;
    out.node_ = static_cast<std::int64_t>(nodes_.size());
    Node node;
    node.kind = OpKind::leaf;
    node.output = out;
    nodes_.push_back(std::move(node));
    return out;
}

Tensor Graph::append(OpKind kind, std::vector<Tensor> inputs, Shape shape,
                     std::vector<double> values, Attrs attrs) {
    Tensor out(std::move(shape), std::move(values));
    out.graph_ = this;
    out.node_ = static_cast<std::int64_t>(nodes_.size());
    Node node;
    node.kind = kind;
    node.inputs = std::move(inputs);
    node.output = out;
    node.attrs = std::move(attrs);
    nodes_.push_back(std::move(node));
    return out;
}

void Graph::check_topological() const {
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        for (const auto& in : nodes_[i].inputs) {
            if (!in.has_node()) continue;
            if (in.graph() != this)
                throw GraphError("node " + std::to_string(i) + " references a foreign graph");
            if (in.node_id() < 0 || static_cast<std::size_t>(in.node_id()) >= i)
                throw GraphError("node " + std::to_string(i) + " has parent " +
                                 std::to_string(in.node_id()));
        }
    }
}

NoRecordGuard::NoRecordGuard(Graph* graph) : graph_(graph), previous_(graph ? graph->recording_ : false) {
    if (graph_) graph_->recording_ = false;
}

NoRecordGuard::~NoRecordGuard() {
    if (graph_) graph_->recording_ = previous_;
}

Indices make_indices(std::vector<std::uint32_t> values) {
    return std::make_shared<const std::vector<std::uint32_t>>(std::move(values));
}

}  // namespace xfer::ag
