#include <algorithm>
#include <cmath>
#include <limits>

#include "kernels.hpp"
#include "ops_internal.hpp"
#include "xfer/autograd.hpp"

namespace xfer::ag {
namespace detail {

Graph* recording_graph(std::initializer_list<const Tensor*> inputs) {
    Graph* graph = nullptr;
    for (const Tensor* t : inputs) {
        if (!t->has_node()) continue;
        if (graph && graph != t->graph())
            throw GraphError("op mixes tensors from different graphs");
        graph = t->graph();
    }
    if (graph && !graph->recording()) return nullptr;
    return graph;
}

Tensor finish(OpKind kind, std::initializer_list<const Tensor*> inputs, Shape shape,
              std::vector<double> values, Attrs attrs) {
    for (double v : values)
        if (!std::isfinite(v))
            throw NonFiniteError(std::string("non-finite value produced by ") +
                                 std::string(op_name(kind)));
    Graph* graph = recording_graph(inputs);
    if (!graph) return Tensor(std::move(shape), std::move(values));
    std::vector<Tensor> stored;
    stored.reserve(inputs.size());
    for (const Tensor* t : inputs) stored.push_back(*t);
    return graph->append(kind, std::move(stored), std::move(shape), std::move(values),
                         std::move(attrs));
}

}  // namespace detail

using detail::finish;

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
}

void require_rank(const Tensor& a, std::size_t rank, const char* op) {
    if (a.rank() != rank)
        throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         to_string(a.shape()));
}

template <class F>
std::vector<double> map_values(const Tensor& a, F f) {
    std::vector<double> out(a.numel());
    const auto v = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(v[i]);
    return out;
}

template <class F>
std::vector<double> zip_values(const Tensor& a, const Tensor& b, F f) {
    std::vector<double> out(a.numel());
    const auto va = a.values();
    const auto vb = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(va[i], vb[i]);
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    return finish(OpKind::add, {&a, &b}, a.shape(), zip_values(a, b, std::plus<>{}));
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    return finish(OpKind::sub, {&a, &b}, a.shape(), zip_values(a, b, std::minus<>{}));
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    return finish(OpKind::mul, {&a, &b}, a.shape(), zip_values(a, b, std::multiplies<>{}));
}

Tensor div(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "div");
    return finish(OpKind::div, {&a, &b}, a.shape(), zip_values(a, b, std::divides<>{}));
}

Tensor scale(const Tensor& a, double factor) {
    Attrs attrs;
    attrs.scalar = factor;
    return finish(OpKind::scale, {&a}, a.shape(), map_values(a, [=](double v) { return v * factor; }),
                  std::move(attrs));
}

Tensor add_scalar(const Tensor& a, double offset) {
    Attrs attrs;
    attrs.scalar = offset;
    return finish(OpKind::add_scalar, {&a}, a.shape(),
                  map_values(a, [=](double v) { return v + offset; }), std::move(attrs));
}

Tensor negate(const Tensor& a) {
    return finish(OpKind::negate, {&a}, a.shape(), map_values(a, [](double v) { return -v; }));
}

Tensor relu(const Tensor& a) {
    return finish(OpKind::relu, {&a}, a.shape(),
                  map_values(a, [](double v) { return v > 0.0 ? v : 0.0; }));
}

Tensor square(const Tensor& a) {
    return finish(OpKind::square, {&a}, a.shape(), map_values(a, [](double v) { return v * v; }));
}

Tensor sqrt(const Tensor& a) {
    for (double v : a.values())
        if (v < 0.0) throw std::domain_error("sqrt of negative value");
    return finish(OpKind::sqrt, {&a}, a.shape(), map_values(a, [](double v) { return std::sqrt(v); }));
}

Tensor log(const Tensor& a) {
    return finish(OpKind::log, {&a}, a.shape(), map_values(a, [](double v) { return std::log(v); }));
}

Tensor exp(const Tensor& a) {
    return finish(OpKind::exp, {&a}, a.shape(), map_values(a, [](double v) { return std::exp(v); }));
}

Tensor tanh(const Tensor& a) {
    return finish(OpKind::tanh, {&a}, a.shape(), map_values(a, [](double v) { return std::tanh(v); }));
}

Tensor clamp_min(const Tensor& a, double floor) {
    Attrs attrs;
    attrs.scalar = floor;
    return finish(OpKind::clamp_min, {&a}, a.shape(),
                  map_values(a, [=](double v) { return std::max(v, floor); }), std::move(attrs));
}

Tensor sign(const Tensor& a) {
    // No node: the derivative is zero wherever it exists.
    return Tensor(a.shape(), map_values(a, [](double v) {
                      return static_cast<double>((v > 0.0) - (v < 0.0));
                  }));
}

Tensor matmul(const Tensor& a, const Tensor& b, bool transpose_a, bool transpose_b) {
    require_rank(a, 2, "matmul");
    require_rank(b, 2, "matmul");
    const std::size_t m = transpose_a ? a.dim(1) : a.dim(0);
    const std::size_t k = transpose_a ? a.dim(0) : a.dim(1);
    const std::size_t kb = transpose_b ? b.dim(1) : b.dim(0);
    const std::size_t n = transpose_b ? b.dim(0) : b.dim(1);
    if (k != kb)
        throw ShapeError("matmul: inner dimensions differ " + to_string(a.shape()) + " x " +
                         to_string(b.shape()));
    std::vector<double> out(m * n);
    kernels::matmul(a.values(), b.values(), out, m, k, n, transpose_a, transpose_b);
    Attrs attrs;
    attrs.flag_a = transpose_a;
    attrs.flag_b = transpose_b;
    return finish(OpKind::matmul, {&a, &b}, {m, n}, std::move(out), std::move(attrs));
}

Tensor conv2d(const Tensor& x, const Tensor& w) {
    require_rank(x, 4, "conv2d");
    require_rank(w, 4, "conv2d");
    if (w.dim(1) != x.dim(1) || w.dim(2) != w.dim(3))
        throw ShapeError("conv2d: weight " + to_string(w.shape()) + " incompatible with input " +
                         to_string(x.shape()));
    if (w.dim(2) > x.dim(2) || w.dim(2) > x.dim(3))
        throw ShapeError("conv2d: kernel larger than input");
    kernels::ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), w.dim(0), w.dim(2)};
    std::vector<double> out(d.batch * d.out_channels * d.out_height() * d.out_width());
    kernels::conv2d(x.values(), w.values(), out, d);
    return finish(OpKind::conv2d, {&x, &w}, {d.batch, d.out_channels, d.out_height(), d.out_width()},
                  std::move(out));
}

Tensor conv2d_input_grad(const Tensor& g, const Tensor& w, std::size_t height, std::size_t width) {
    require_rank(g, 4, "conv2d_input_grad");
    require_rank(w, 4, "conv2d_input_grad");
    kernels::ConvDims d{g.dim(0), w.dim(1), height, width, w.dim(0), w.dim(2)};
    if (g.dim(1) != d.out_channels || height < d.kernel || width < d.kernel ||
        g.dim(2) != d.out_height() || g.dim(3) != d.out_width())
        throw ShapeError("conv2d_input_grad: gradient " + to_string(g.shape()) +
                         " incompatible with weight " + to_string(w.shape()));
    std::vector<double> out(d.batch * d.in_channels * height * width);
    kernels::conv2d_input_grad(g.values(), w.values(), out, d);
    Attrs attrs;
    attrs.shape = {d.batch, d.in_channels, height, width};
    return finish(OpKind::conv2d_input_grad, {&g, &w}, attrs.shape, std::move(out), attrs);
}

Tensor conv2d_weight_grad(const Tensor& x, const Tensor& g, std::size_t kernel) {
    require_rank(x, 4, "conv2d_weight_grad");
    require_rank(g, 4, "conv2d_weight_grad");
    kernels::ConvDims d{x.dim(0), x.dim(1), x.dim(2), x.dim(3), g.dim(1), kernel};
    if (g.dim(0) != d.batch || kernel > d.height || kernel > d.width ||
        g.dim(2) != d.out_height() || g.dim(3) != d.out_width())
        throw ShapeError("conv2d_weight_grad: input " + to_string(x.shape()) +
                         " incompatible with gradient " + to_string(g.shape()));
    std::vector<double> out(d.out_channels * d.patch());
    kernels::conv2d_weight_grad(x.values(), g.values(), out, d);
    Attrs attrs;
    attrs.axis = kernel;
    return finish(OpKind::conv2d_weight_grad, {&x, &g}, {d.out_channels, d.in_channels, kernel, kernel},
                  std::move(out), std::move(attrs));
}

Tensor maxpool2d(const Tensor& x) {
    require_rank(x, 4, "maxpool2d");
    if (x.dim(2) < 2 || x.dim(3) < 2) throw ShapeError("maxpool2d: spatial extent below 2");
    const std::size_t planes = x.dim(0) * x.dim(1);
    Shape out_shape{x.dim(0), x.dim(1), x.dim(2) / 2, x.dim(3) / 2};
    std::vector<double> out(numel(out_shape));
    std::vector<std::uint32_t> argmax(out.size());
    kernels::maxpool2x2(x.values(), planes, x.dim(2), x.dim(3), out, argmax);
    Attrs attrs;
    attrs.indices = make_indices(std::move(argmax));
    return finish(OpKind::maxpool2d, {&x}, std::move(out_shape), std::move(out), std::move(attrs));
}

Tensor maxpool_scatter(const Tensor& g, const Indices& argmax, const Shape& input_shape) {
    if (!argmax || argmax->size() != g.numel())
        throw ShapeError("maxpool_scatter: index count does not match gradient");
    std::vector<double> out(numel(input_shape), 0.0);
    const auto gv = g.values();
    for (std::size_t i = 0; i < gv.size(); ++i) out[(*argmax)[i]] += gv[i];
    Attrs attrs;
    attrs.indices = argmax;
    attrs.shape = input_shape;
    return finish(OpKind::maxpool_scatter, {&g}, input_shape, std::move(out), std::move(attrs));
}

Tensor maxpool_gather(const Tensor& x, const Indices& argmax, const Shape& pooled_shape) {
    if (!argmax || argmax->size() != numel(pooled_shape))
        throw ShapeError("maxpool_gather: index count does not match pooled shape");
    std::vector<double> out(argmax->size());
    const auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[(*argmax)[i]];
    Attrs attrs;
    attrs.indices = argmax;
    attrs.shape = pooled_shape;
    return finish(OpKind::maxpool_gather, {&x}, pooled_shape, std::move(out), std::move(attrs));
}

Tensor sum(const Tensor& a) {
    double total = 0.0;
    for (double v : a.values()) total += v;
    return finish(OpKind::sum, {&a}, {1}, {total});
}

Tensor mean(const Tensor& a) {
    double total = 0.0;
    for (double v : a.values()) total += v;
    return finish(OpKind::mean, {&a}, {1}, {total / static_cast<double>(a.numel())});
}

Tensor dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    double total = 0.0;
    const auto va = a.values();
    const auto vb = b.values();
    for (std::size_t i = 0; i < va.size(); ++i) total += va[i] * vb[i];
    return finish(OpKind::dot, {&a, &b}, {1}, {total});
}

Tensor l2_norm(const Tensor& a) {
    double total = 0.0;
    for (double v : a.values()) total += v * v;
    return finish(OpKind::l2_norm, {&a}, {1}, {std::sqrt(total)});
}

namespace {

std::vector<double> softmax_rows(const Tensor& z, bool take_log) {
    const std::size_t rows = z.dim(0);
    const std::size_t cols = z.dim(1);
    std::vector<double> out(z.numel());
    const auto v = z.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = v.data() + r * cols;
        double* o = out.data() + r * cols;
        const double peak = *std::max_element(in, in + cols);
        double total = 0.0;
        for (std::size_t c = 0; c < cols; ++c) total += std::exp(in[c] - peak);
        if (take_log) {
            const double lse = std::log(total);
            for (std::size_t c = 0; c < cols; ++c) o[c] = in[c] - peak - lse;
        } else {
            for (std::size_t c = 0; c < cols; ++c) o[c] = std::exp(in[c] - peak) / total;
        }
    }
    return out;
}

}  // namespace

Tensor softmax(const Tensor& logits) {
    require_rank(logits, 2, "softmax");
    return finish(OpKind::softmax, {&logits}, logits.shape(), softmax_rows(logits, false));
}

Tensor log_softmax(const Tensor& logits) {
    require_rank(logits, 2, "log_softmax");
    return finish(OpKind::log_softmax, {&logits}, logits.shape(), softmax_rows(logits, true));
}

Tensor index_select(const Tensor& x, const Indices& labels) {
    require_rank(x, 2, "index_select");
    if (!labels || labels->size() != x.dim(0))
        throw ShapeError("index_select: need one label per row");
    std::vector<double> out(x.dim(0));
    const auto v = x.values();
    for (std::size_t r = 0; r < out.size(); ++r) {
        const auto c = (*labels)[r];
        if (c >= x.dim(1)) throw std::out_of_range("index_select: label out of range");
        out[r] = v[r * x.dim(1) + c];
    }
    Attrs attrs;
    attrs.indices = labels;
    attrs.axis = x.dim(1);
    return finish(OpKind::index_select, {&x}, {x.dim(0)}, std::move(out), std::move(attrs));
}

Tensor index_select(const Tensor& x, std::span<const int> labels) {
    std::vector<std::uint32_t> idx;
    idx.reserve(labels.size());
    for (int l : labels) {
        if (l < 0) throw std::out_of_range("index_select: negative label");
        idx.push_back(static_cast<std::uint32_t>(l));
    }
    return index_select(x, make_indices(std::move(idx)));
}

Tensor index_scatter(const Tensor& g, const Indices& labels, std::size_t classes) {
    require_rank(g, 1, "index_scatter");
    if (!labels || labels->size() != g.dim(0))
        throw ShapeError("index_scatter: need one label per row");
    std::vector<double> out(g.dim(0) * classes, 0.0);
    const auto v = g.values();
    for (std::size_t r = 0; r < v.size(); ++r) {
        const auto c = (*labels)[r];
        if (c >= classes) throw std::out_of_range("index_scatter: label out of range");
        out[r * classes + c] = v[r];
    }
    Attrs attrs;
    attrs.indices = labels;
    attrs.axis = classes;
    return finish(OpKind::index_scatter, {&g}, {g.dim(0), classes}, std::move(out), std::move(attrs));
}

Tensor take_rows(const Tensor& x, const Indices& rows) {
    if (x.rank() == 0 || !rows || rows->empty()) throw ShapeError("take_rows: no rows selected");
    const std::size_t width = x.numel() / x.dim(0);
    std::vector<double> out(rows->size() * width);
    const auto v = x.values();
    for (std::size_t i = 0; i < rows->size(); ++i) {
        const auto r = (*rows)[i];
        if (r >= x.dim(0)) throw std::out_of_range("take_rows: row out of range");
        std::copy_n(v.data() + r * width, width, out.data() + i * width);
    }
    Shape shape = x.shape();
    shape[0] = rows->size();
    Attrs attrs;
    attrs.indices = rows;
    attrs.axis = x.dim(0);
    return finish(OpKind::take_rows, {&x}, std::move(shape), std::move(out), std::move(attrs));
}

Tensor scatter_rows(const Tensor& g, const Indices& rows, std::size_t total_rows) {
    if (!rows || rows->size() != g.dim(0)) throw ShapeError("scatter_rows: row count mismatch");
    const std::size_t width = g.numel() / g.dim(0);
    std::vector<double> out(total_rows * width, 0.0);
    const auto v = g.values();
    for (std::size_t i = 0; i < rows->size(); ++i) {
        const auto r = (*rows)[i];
        if (r >= total_rows) throw std::out_of_range("scatter_rows: row out of range");
        for (std::size_t j = 0; j < width; ++j) out[r * width + j] += v[i * width + j];
    }
    Shape shape = g.shape();
    shape[0] = total_rows;
    Attrs attrs;
    attrs.indices = rows;
    attrs.axis = total_rows;
    return finish(OpKind::scatter_rows, {&g}, std::move(shape), std::move(out), std::move(attrs));
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (numel(shape) != a.numel())
        throw ShapeError("reshape: " + to_string(a.shape()) + " -> " + to_string(shape));
    Attrs attrs;
    attrs.shape = shape;
    std::vector<double> values(a.values().begin(), a.values().end());
    return finish(OpKind::reshape, {&a}, std::move(shape), std::move(values), std::move(attrs));
}

Tensor flatten_rows(const Tensor& a) {
    if (a.rank() == 0) throw ShapeError("flatten_rows: rank 0");
    return reshape(a, {a.dim(0), a.numel() / a.dim(0)});
}

Tensor broadcast_scalar(const Tensor& s, const Shape& shape) {
    if (s.numel() != 1) throw ShapeError("broadcast_scalar: input is not a scalar");
    Attrs attrs;
    attrs.shape = shape;
    return finish(OpKind::broadcast_scalar, {&s}, shape, std::vector<double>(numel(shape), s[0]),
                  std::move(attrs));
}

namespace {

struct AxisSplit {
    std::size_t outer = 1;
    std::size_t extent = 1;
    std::size_t inner = 1;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
    if (axis >= shape.size()) throw ShapeError("axis out of range for " + to_string(shape));
    AxisSplit s;
    for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
    s.extent = shape[axis];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

}  // namespace

Tensor reduce_to_axis(const Tensor& a, std::size_t axis) {
    const AxisSplit s = split_at(a.shape(), axis);
    std::vector<double> out(s.extent, 0.0);
    const auto v = a.values();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t c = 0; c < s.extent; ++c) {
            const double* p = v.data() + (o * s.extent + c) * s.inner;
            double total = 0.0;
            for (std::size_t i = 0; i < s.inner; ++i) total += p[i];
            out[c] += total;
        }
    Attrs attrs;
    attrs.axis = axis;
    attrs.shape = a.shape();
    return finish(OpKind::reduce_to_axis, {&a}, {s.extent}, std::move(out), std::move(attrs));
}

Tensor broadcast_axis(const Tensor& v, const Shape& shape, std::size_t axis) {
    const AxisSplit s = split_at(shape, axis);
    if (v.rank() != 1 || v.dim(0) != s.extent)
        throw ShapeError("broadcast_axis: vector " + to_string(v.shape()) + " does not match axis " +
                         std::to_string(axis) + " of " + to_string(shape));
    std::vector<double> out(numel(shape));
    const auto vv = v.values();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t c = 0; c < s.extent; ++c)
            std::fill_n(out.data() + (o * s.extent + c) * s.inner, s.inner, vv[c]);
    Attrs attrs;
    attrs.axis = axis;
    attrs.shape = shape;
    return finish(OpKind::broadcast_axis, {&v}, shape, std::move(out), std::move(attrs));
}

Tensor cosine_similarity(const Tensor& u, const Tensor& v) {
    require_same_shape(u, v, "cosine_similarity");
    const Tensor nu = l2_norm(u);
    const Tensor nv = l2_norm(v);
    if (nu.item() == 0.0 || nv.item() == 0.0)
        throw ZeroNormError("cosine_similarity: zero-norm input");
    return div(dot(u, v), mul(nu, nv));
}

Tensor rowwise_norm(const Tensor& a) {
    require_rank(a, 2, "rowwise_norm");
    return sqrt(reduce_to_axis(square(a), 0));
}

Tensor rowwise_cosine(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "rowwise_cosine");
    require_same_shape(a, b, "rowwise_cosine");
    const Tensor na = rowwise_norm(a);
    const Tensor nb = rowwise_norm(b);
    for (std::size_t i = 0; i < na.numel(); ++i)
        if (na[i] == 0.0 || nb[i] == 0.0)
            throw ZeroNormError("rowwise_cosine: row " + std::to_string(i) + " has zero norm");
    return div(reduce_to_axis(mul(a, b), 0), mul(na, nb));
}

Tensor record(OpKind kind, const std::vector<Tensor>& inputs, const Attrs& attrs) {
    auto arity = [&](std::size_t n) {
        if (inputs.size() != n)
            throw ShapeError(std::string(op_name(kind)) + " expects " + std::to_string(n) +
                             " inputs, got " + std::to_string(inputs.size()));
    };
    switch (kind) {
        case OpKind::add: arity(2); return add(inputs[0], inputs[1]);
        case OpKind::sub: arity(2); return sub(inputs[0], inputs[1]);
        case OpKind::mul: arity(2); return mul(inputs[0], inputs[1]);
        case OpKind::div: arity(2); return div(inputs[0], inputs[1]);
        case OpKind::scale: arity(1); return scale(inputs[0], attrs.scalar);
        case OpKind::add_scalar: arity(1); return add_scalar(inputs[0], attrs.scalar);
        case OpKind::negate: arity(1); return negate(inputs[0]);
        case OpKind::matmul: arity(2); return matmul(inputs[0], inputs[1], attrs.flag_a, attrs.flag_b);
        case OpKind::conv2d: arity(2); return conv2d(inputs[0], inputs[1]);
        case OpKind::conv2d_input_grad:
            arity(2);
            if (attrs.shape.size() != 4) throw ShapeError("conv2d_input_grad needs a 4-d input shape");
            return conv2d_input_grad(inputs[0], inputs[1], attrs.shape[2], attrs.shape[3]);
        case OpKind::conv2d_weight_grad: arity(2); return conv2d_weight_grad(inputs[0], inputs[1], attrs.axis);
        case OpKind::maxpool2d: arity(1); return maxpool2d(inputs[0]);
        case OpKind::maxpool_scatter: arity(1); return maxpool_scatter(inputs[0], attrs.indices, attrs.shape);
        case OpKind::maxpool_gather: arity(1); return maxpool_gather(inputs[0], attrs.indices, attrs.shape);
        case OpKind::relu: arity(1); return relu(inputs[0]);
        case OpKind::sum: arity(1); return sum(inputs[0]);
        case OpKind::mean: arity(1); return mean(inputs[0]);
        case OpKind::dot: arity(2); return dot(inputs[0], inputs[1]);
        case OpKind::l2_norm: arity(1); return l2_norm(inputs[0]);
        case OpKind::square: arity(1); return square(inputs[0]);
        case OpKind::sqrt: arity(1); return sqrt(inputs[0]);
        case OpKind::log: arity(1); return log(inputs[0]);
        case OpKind::exp: arity(1); return exp(inputs[0]);
        case OpKind::tanh: arity(1); return tanh(inputs[0]);
        case OpKind::softmax: arity(1); return softmax(inputs[0]);
        case OpKind::log_softmax: arity(1); return log_softmax(inputs[0]);
        case OpKind::index_select: arity(1); return index_select(inputs[0], attrs.indices);
        case OpKind::index_scatter: arity(1); return index_scatter(inputs[0], attrs.indices, attrs.axis);
        case OpKind::take_rows: arity(1); return take_rows(inputs[0], attrs.indices);
        case OpKind::scatter_rows: arity(1); return scatter_rows(inputs[0], attrs.indices, attrs.axis);
        case OpKind::sign: arity(1); return sign(inputs[0]);
        case OpKind::reshape: arity(1); return reshape(inputs[0], attrs.shape);
        case OpKind::broadcast_scalar: arity(1); return broadcast_scalar(inputs[0], attrs.shape);
        case OpKind::reduce_to_axis: arity(1); return reduce_to_axis(inputs[0], attrs.axis);
        case OpKind::broadcast_axis: arity(1); return broadcast_axis(inputs[0], attrs.shape, attrs.axis);
        case OpKind::clamp_min: arity(1); return clamp_min(inputs[0], attrs.scalar);
        case OpKind::leaf: break;
    }
    throw std::invalid_argument("record: unknown op kind " + std::string(op_name(kind)));
}

}  // namespace xfer::ag
