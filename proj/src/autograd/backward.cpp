#include <algorithm>
#include <unordered_map>

#include "xfer/autograd.hpp"

namespace xfer::ag {
namespace {

using Grads = std::vector<std::optional<Tensor>>;

Tensor mask_where(const Tensor& x, auto predicate) {
    std::vector<double> m(x.numel());
    const auto v = x.values();
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = predicate(v[i]) ? 1.0 : 0.0;
    return Tensor(x.shape(), std::move(m));
}

// Each rule returns one gradient per input; entries for inputs that do not need
// a gradient may be left empty.
Grads apply_rule(const Node& node, const Tensor& g, const std::vector<bool>& need) {
    const auto& in = node.inputs;
    const Attrs& at = node.attrs;
    Grads out(in.size());
    auto wants = [&](std::size_t i) { return need[i]; };

    switch (node.kind) {
        case OpKind::leaf:
        case OpKind::sign:
            break;
        case OpKind::add:
            if (wants(0)) out[0] = g;
            if (wants(1)) out[1] = g;
            break;
        case OpKind::sub:
            if (wants(0)) out[0] = g;
            if (wants(1)) out[1] = negate(g);
            break;
        case OpKind::mul:
            if (wants(0)) out[0] = mul(g, in[1]);
            if (wants(1)) out[1] = mul(g, in[0]);
            break;
        case OpKind::div: {
            const Tensor ga = div(g, in[1]);
            if (wants(0)) out[0] = ga;
            if (wants(1)) out[1] = negate(div(mul(ga, in[0]), in[1]));
            break;
        }
        case OpKind::scale:
            out[0] = scale(g, at.scalar);
            break;
        case OpKind::add_scalar:
            out[0] = g;
            break;
        case OpKind::negate:
            out[0] = negate(g);
            break;
        case OpKind::matmul: {
            const bool ta = at.flag_a;
            const bool tb = at.flag_b;
            if (wants(0)) out[0] = ta ? matmul(in[1], g, tb, true) : matmul(g, in[1], false, !tb);
            if (wants(1)) out[1] = tb ? matmul(g, in[0], true, ta) : matmul(in[0], g, !ta, false);
            break;
        }
        case OpKind::conv2d: {
            const Tensor& x = in[0];
            const Tensor& w = in[1];
            if (wants(0)) out[0] = conv2d_input_grad(g, w, x.dim(2), x.dim(3));
            if (wants(1)) out[1] = conv2d_weight_grad(x, g, w.dim(2));
            break;
        }
        case OpKind::conv2d_input_grad: {
            // y = T(G, W); dG = conv(H, W), dW = weight_grad(H, G)
            const Tensor& gin = in[0];
            const Tensor& w = in[1];
            if (wants(0)) out[0] = conv2d(g, w);
            if (wants(1)) out[1] = conv2d_weight_grad(g, gin, w.dim(2));
            break;
        }
        case OpKind::conv2d_weight_grad: {
            // y = WG(X, G); dX = T(G, K), dG = conv(X, K)
            const Tensor& x = in[0];
            const Tensor& gin = in[1];
            if (wants(0)) out[0] = conv2d_input_grad(gin, g, x.dim(2), x.dim(3));
            if (wants(1)) out[1] = conv2d(x, g);
            break;
        }
        case OpKind::maxpool2d:
            out[0] = maxpool_scatter(g, at.indices, in[0].shape());
            break;
        case OpKind::maxpool_scatter:
            out[0] = maxpool_gather(g, at.indices, in[0].shape());
            break;
        case OpKind::maxpool_gather:
            out[0] = maxpool_scatter(g, at.indices, in[0].shape());
            break;
        case OpKind::relu:
            out[0] = mul(g, mask_where(in[0], [](double v) { return v > 0.0; }));
            break;
        case OpKind::clamp_min: {
            const double floor = at.scalar;
            out[0] = mul(g, mask_where(in[0], [=](double v) { return v > floor; }));
            break;
        }
        case OpKind::sum:
            out[0] = broadcast_scalar(g, in[0].shape());
            break;
        case OpKind::mean:
            out[0] = broadcast_scalar(scale(g, 1.0 / static_cast<double>(in[0].numel())), in[0].shape());
            break;
        case OpKind::dot: {
            const Tensor gb = broadcast_scalar(g, in[0].shape());
            if (wants(0)) out[0] = mul(gb, in[1]);
            if (wants(1)) out[1] = mul(gb, in[0]);
            break;
        }
        case OpKind::l2_norm:
            out[0] = mul(broadcast_scalar(div(g, node.output), in[0].shape()), in[0]);
            break;
        case OpKind::square:
            out[0] = scale(mul(g, in[0]), 2.0);
            break;
        case OpKind::sqrt:
            out[0] = div(g, scale(node.output, 2.0));
            break;
        case OpKind::log:
            out[0] = div(g, in[0]);
            break;
        case OpKind::exp:
            out[0] = mul(g, node.output);
            break;
        case OpKind::tanh:
            out[0] = sub(g, mul(g, square(node.output)));
            break;
        case OpKind::softmax: {
            const Tensor& s = node.output;
            const Tensor gs = mul(g, s);
            const Tensor row = broadcast_axis(reduce_to_axis(gs, 0), s.shape(), 0);
            out[0] = sub(gs, mul(s, row));
            break;
        }
        case OpKind::log_softmax: {
            const Tensor s = exp(node.output);
            const Tensor row = broadcast_axis(reduce_to_axis(g, 0), s.shape(), 0);
            out[0] = sub(g, mul(s, row));
            break;
        }
        case OpKind::index_select:
            out[0] = index_scatter(g, at.indices, at.axis);
            break;
        case OpKind::index_scatter:
            out[0] = index_select(g, at.indices);
            break;
        case OpKind::take_rows:
            out[0] = scatter_rows(g, at.indices, in[0].dim(0));
            break;
        case OpKind::scatter_rows:
            out[0] = take_rows(g, at.indices);
            break;
        case OpKind::reshape:
            out[0] = reshape(g, in[0].shape());
            break;
        case OpKind::broadcast_scalar:
            out[0] = sum(g);
            break;
        case OpKind::reduce_to_axis:
            out[0] = broadcast_axis(g, in[0].shape(), at.axis);
            break;
        case OpKind::broadcast_axis:
            out[0] = reduce_to_axis(g, at.axis);
            break;
    }
    return out;
}

}  // namespace

std::vector<Tensor> backward(const GradientRequest& request) {
    const Tensor& output = request.output;
    if (output.numel() != 1)
        throw ShapeError("backward: output must be a scalar, got " + to_string(output.shape()));

    std::vector<Tensor> result;
    result.reserve(request.wrt.size());
    Graph* graph = output.graph();
    if (!graph) {
        for (const auto& w : request.wrt) result.push_back(Tensor::zeros(w.shape()));
        return result;
    }
    for (const auto& w : request.wrt)
        if (w.has_node() && w.graph() != graph)
            throw GraphError("backward: wrt tensor belongs to a different graph");

    const auto out_id = static_cast<std::size_t>(output.node_id());
    if (out_id >= graph->size()) throw GraphError("backward: output node out of range");

    // Restrict the sweep to nodes that lie on a path from some wrt tensor.
    std::size_t lowest = out_id + 1;
    std::vector<char> relevant(out_id + 1, 0);
    std::vector<char> requested(out_id + 1, 0);
    for (const auto& w : request.wrt) {
        if (!w.has_node()) continue;
        const auto id = static_cast<std::size_t>(w.node_id());
        if (id <= out_id) {
            relevant[id] = 1;
            requested[id] = 1;
            lowest = std::min(lowest, id);
        }
    }
    for (std::size_t i = lowest; i <= out_id; ++i) {
        if (relevant[i]) continue;
        for (const auto& in : graph->node(i).inputs) {
            if (!in.has_node()) continue;
            const auto p = static_cast<std::size_t>(in.node_id());
            if (p >= i) throw GraphError("backward: graph is not topologically ordered");
            if (p >= lowest && relevant[p]) {
                relevant[i] = 1;
                break;
            }
        }
    }

    std::vector<std::optional<Tensor>> grads(out_id + 1);
    if (lowest <= out_id && relevant[out_id]) {
        NoRecordGuard guard(request.create_graph ? nullptr : graph);
        grads[out_id] = Tensor::full(output.shape(), 1.0);
        for (std::size_t i = out_id + 1; i-- > lowest;) {
            if (!relevant[i] || !grads[i]) continue;
            // Copy: appending nodes while recording must not invalidate what we read.
            const Node node = graph->node(i);
            if (node.kind == OpKind::leaf) continue;
            std::vector<bool> need(node.inputs.size(), false);
            bool any = false;
            for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                const auto& in = node.inputs[k];
                if (!in.has_node()) continue;
                const auto p = static_cast<std::size_t>(in.node_id());
                need[k] = p >= lowest && relevant[p];
                any = any || need[k];
            }
            if (!any) continue;
            Grads local = apply_rule(node, *grads[i], need);
            for (std::size_t k = 0; k < node.inputs.size(); ++k) {
                if (!need[k] || !local[k]) continue;
                const auto p = static_cast<std::size_t>(node.inputs[k].node_id());
                grads[p] = grads[p] ? add(*grads[p], *local[k]) : *local[k];
            }
            if (!requested[i]) grads[i].reset();
        }
    }

    for (const auto& w : request.wrt) {
        if (w.has_node() && static_cast<std::size_t>(w.node_id()) <= out_id &&
            grads[static_cast<std::size_t>(w.node_id())])
            result.push_back(*grads[static_cast<std::size_t>(w.node_id())]);
        else
            result.push_back(Tensor::zeros(w.shape()));
    }
    return result;
}

std::vector<Tensor> grad(const Tensor& output, const std::vector<Tensor>& wrt, bool create_graph) {
    return backward(GradientRequest{output, wrt, create_graph});
}

}  // namespace xfer::ag
