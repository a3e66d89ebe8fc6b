#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace xfer::testing {

using ag::Shape;
using ag::Tensor;

namespace {

Tensor uniform(std::mt19937_64& rng, Shape shape, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(ag::numel(shape));
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v));
}

// Magnitudes in [lo, hi] with random sign: keeps clear of zero.
Tensor away_from_zero(std::mt19937_64& rng, Shape shape, double lo, double hi) {
    std::uniform_real_distribution<double> mag(lo, hi);
    std::bernoulli_distribution flip(0.5);
    std::vector<double> v(ag::numel(shape));
    for (auto& x : v) x = flip(rng) ? mag(rng) : -mag(rng);
    return Tensor(std::move(shape), std::move(v));
}

// Distinct values spaced at least 0.05 apart, so a 1e-5 nudge never reorders them.
Tensor distinct(std::mt19937_64& rng, Shape shape) {
    const auto n = ag::numel(shape);
    std::vector<double> v(n);
    std::iota(v.begin(), v.end(), 0.0);
    std::shuffle(v.begin(), v.end(), rng);
    std::uniform_real_distribution<double> jitter(0.0, 0.05);
    for (auto& x : v) x = (x - static_cast<double>(n) / 2.0) * 0.1 + jitter(rng);
    return Tensor(std::move(shape), std::move(v));
}

ag::Indices random_labels(std::mt19937_64& rng, std::size_t n, std::size_t classes) {
    std::uniform_int_distribution<std::uint32_t> dist(0, static_cast<std::uint32_t>(classes - 1));
    std::vector<std::uint32_t> v(n);
    for (auto& x : v) x = dist(rng);
    return ag::make_indices(std::move(v));
}

ag::Indices pool_argmax(std::mt19937_64& rng, const Shape& in_shape) {
    Tensor probe = distinct(rng, in_shape);
    // Indices live on the recorded node.
    ag::Graph g;
    Tensor v = g.variable(probe);
    Tensor p = ag::maxpool2d(v);
    return g.node(static_cast<std::size_t>(p.node_id())).attrs.indices;
}

Inputs variables(ag::Graph& g, const Inputs& in) {
    Inputs out;
    for (const auto& t : in) out.push_back(g.variable(t));
    return out;
}

std::vector<double> flatten(const std::vector<Tensor>& ts) {
    std::vector<double> out;
    for (const auto& t : ts) out.insert(out.end(), t.values().begin(), t.values().end());
    return out;
}

double dot_const(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
    return s;
}

}  // namespace

std::vector<OpCase> op_table() {
    using R = std::mt19937_64;
    std::vector<OpCase> ops;
    auto two = [](Shape s, double lo, double hi) {
        return [=](R& r) { return Inputs{uniform(r, s, lo, hi), uniform(r, s, lo, hi)}; };
    };
    auto one = [](Shape s, double lo, double hi) {
        return [=](R& r) { return Inputs{uniform(r, s, lo, hi)}; };
    };

    ops.push_back({"add", two({3, 4}, -2, 2), [](const Inputs& x) { return ag::add(x[0], x[1]); }});
    ops.push_back({"sub", two({3, 4}, -2, 2), [](const Inputs& x) { return ag::sub(x[0], x[1]); }});
    ops.push_back({"mul", two({3, 4}, -2, 2), [](const Inputs& x) { return ag::mul(x[0], x[1]); }});
    ops.push_back({"div",
                   [](R& r) { return Inputs{uniform(r, {3, 4}, -2, 2), away_from_zero(r, {3, 4}, 0.5, 2)}; },
                   [](const Inputs& x) { return ag::div(x[0], x[1]); }});
    ops.push_back({"scale", one({5}, -2, 2), [](const Inputs& x) { return ag::scale(x[0], -1.7); }});
    ops.push_back({"add_scalar", one({5}, -2, 2), [](const Inputs& x) { return ag::add_scalar(x[0], 0.3); }});
    ops.push_back({"negate", one({5}, -2, 2), [](const Inputs& x) { return ag::negate(x[0]); }});
    for (int flags = 0; flags < 4; ++flags) {
        const bool ta = flags & 1;
        const bool tb = flags & 2;
        ops.push_back({"matmul" + std::string(ta ? "_ta" : "") + (tb ? "_tb" : ""),
                       [=](R& r) {
                           Shape sa = ta ? Shape{4, 3} : Shape{3, 4};
                           Shape sb = tb ? Shape{2, 4} : Shape{4, 2};
                           return Inputs{uniform(r, sa, -1, 1), uniform(r, sb, -1, 1)};
                       },
                       [=](const Inputs& x) { return ag::matmul(x[0], x[1], ta, tb); }});
    }
    ops.push_back({"conv2d",
                   [](R& r) { return Inputs{uniform(r, {2, 2, 5, 6}, -1, 1), uniform(r, {3, 2, 3, 3}, -1, 1)}; },
                   [](const Inputs& x) { return ag::conv2d(x[0], x[1]); }});
    ops.push_back({"conv2d_input_grad",
                   [](R& r) { return Inputs{uniform(r, {2, 3, 3, 4}, -1, 1), uniform(r, {3, 2, 3, 3}, -1, 1)}; },
                   [](const Inputs& x) { return ag::conv2d_input_grad(x[0], x[1], 5, 6); }});
    ops.push_back({"conv2d_weight_grad",
                   [](R& r) { return Inputs{uniform(r, {2, 2, 5, 6}, -1, 1), uniform(r, {2, 3, 3, 4}, -1, 1)}; },
                   [](const Inputs& x) { return ag::conv2d_weight_grad(x[0], x[1], 3); }});
    ops.push_back({"maxpool2d", [](R& r) { return Inputs{distinct(r, {2, 2, 4, 5})}; },
                   [](const Inputs& x) { return ag::maxpool2d(x[0]); }, true});
    {
        // Index sets are drawn once per case inside make_inputs and carried in a shared slot.
        auto slot = std::make_shared<ag::Indices>();
        ops.push_back({"maxpool_scatter",
                       [slot](R& r) {
                           *slot = pool_argmax(r, {2, 2, 4, 5});
                           return Inputs{uniform(r, {2, 2, 2, 2}, -1, 1)};
                       },
                       [slot](const Inputs& x) { return ag::maxpool_scatter(x[0], *slot, {2, 2, 4, 5}); }});
        auto slot2 = std::make_shared<ag::Indices>();
        ops.push_back({"maxpool_gather",
                       [slot2](R& r) {
                           *slot2 = pool_argmax(r, {2, 2, 4, 5});
                           return Inputs{uniform(r, {2, 2, 4, 5}, -1, 1)};
                       },
                       [slot2](const Inputs& x) { return ag::maxpool_gather(x[0], *slot2, {2, 2, 2, 2}); }});
    }
    ops.push_back({"relu", [](R& r) { return Inputs{away_from_zero(r, {3, 5}, 0.01, 2)}; },
                   [](const Inputs& x) { return ag::relu(x[0]); }, true});
    ops.push_back({"sum", one({3, 4}, -2, 2), [](const Inputs& x) { return ag::sum(x[0]); }});
    ops.push_back({"mean", one({3, 4}, -2, 2), [](const Inputs& x) { return ag::mean(x[0]); }});
    ops.push_back({"dot", two({7}, -2, 2), [](const Inputs& x) { return ag::dot(x[0], x[1]); }});
    ops.push_back({"l2_norm", one({6}, -2, 2), [](const Inputs& x) { return ag::l2_norm(x[0]); }});
    ops.push_back({"square", one({6}, -2, 2), [](const Inputs& x) { return ag::square(x[0]); }});
    ops.push_back({"sqrt", one({6}, 0.2, 3), [](const Inputs& x) { return ag::sqrt(x[0]); }});
    ops.push_back({"log", one({6}, 0.2, 3), [](const Inputs& x) { return ag::log(x[0]); }});
    ops.push_back({"exp", one({6}, -2, 2), [](const Inputs& x) { return ag::exp(x[0]); }});
    ops.push_back({"tanh", one({6}, -2, 2), [](const Inputs& x) { return ag::tanh(x[0]); }});
    ops.push_back({"softmax", one({3, 5}, -3, 3), [](const Inputs& x) { return ag::softmax(x[0]); }});
    ops.push_back({"log_softmax", one({3, 5}, -3, 3), [](const Inputs& x) { return ag::log_softmax(x[0]); }});
    {
        auto labels = std::make_shared<ag::Indices>();
        ops.push_back({"index_select",
                       [labels](R& r) {
                           *labels = random_labels(r, 4, 5);
                           return Inputs{uniform(r, {4, 5}, -2, 2)};
                       },
                       [labels](const Inputs& x) { return ag::index_select(x[0], *labels); }});
        auto labels2 = std::make_shared<ag::Indices>();
        ops.push_back({"index_scatter",
                       [labels2](R& r) {
                           *labels2 = random_labels(r, 4, 5);
                           return Inputs{uniform(r, {4}, -2, 2)};
                       },
                       [labels2](const Inputs& x) { return ag::index_scatter(x[0], *labels2, 5); }});
        auto rows = std::make_shared<ag::Indices>();
        ops.push_back({"take_rows",
                       [rows](R& r) {
                           *rows = random_labels(r, 3, 5);
                           return Inputs{uniform(r, {5, 2, 2}, -2, 2)};
                       },
                       [rows](const Inputs& x) { return ag::take_rows(x[0], *rows); }});
        auto rows2 = std::make_shared<ag::Indices>();
        ops.push_back({"scatter_rows",
                       [rows2](R& r) {
                           *rows2 = random_labels(r, 3, 5);
                           return Inputs{uniform(r, {3, 4}, -2, 2)};
                       },
                       [rows2](const Inputs& x) { return ag::scatter_rows(x[0], *rows2, 5); }});
    }
    ops.push_back({"sign", [](R& r) { return Inputs{away_from_zero(r, {6}, 0.01, 2)}; },
                   [](const Inputs& x) { return ag::sign(x[0]); }, true});
    ops.push_back({"reshape", one({2, 6}, -2, 2), [](const Inputs& x) { return ag::reshape(x[0], {3, 4}); }});
    ops.push_back({"broadcast_scalar", one({1}, -2, 2),
                   [](const Inputs& x) { return ag::broadcast_scalar(x[0], {2, 3}); }});
    ops.push_back({"reduce_to_axis", one({2, 3, 4}, -2, 2),
                   [](const Inputs& x) { return ag::reduce_to_axis(x[0], 1); }});
    ops.push_back({"broadcast_axis", one({3}, -2, 2),
                   [](const Inputs& x) { return ag::broadcast_axis(x[0], {2, 3, 4}, 1); }});
    ops.push_back({"clamp_min", [](R& r) { return Inputs{away_from_zero(r, {6}, 0.01, 2)}; },
                   [](const Inputs& x) { return ag::clamp_min(x[0], 0.0); }, true});
    ops.push_back({"cosine_similarity", two({10}, -2, 2),
                   [](const Inputs& x) { return ag::cosine_similarity(x[0], x[1]); }});
    ops.push_back({"rowwise_cosine", two({3, 6}, -2, 2),
                   [](const Inputs& x) { return ag::rowwise_cosine(x[0], x[1]); }});
    return ops;
}

double relative_error(const std::vector<double>& a, const std::vector<double>& b, double floor) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

std::vector<double> numeric_gradient(const std::function<double(const Inputs&)>& f, const Inputs& at,
                                     double h) {
    std::vector<double> out;
    for (std::size_t i = 0; i < at.size(); ++i) {
        std::vector<double> base(at[i].values().begin(), at[i].values().end());
        for (std::size_t j = 0; j < base.size(); ++j) {
            Inputs plus = at;
            Inputs minus = at;
            auto vp = base;
            auto vm = base;
            vp[j] += h;
            vm[j] -= h;
            plus[i] = Tensor(at[i].shape(), std::move(vp));
            minus[i] = Tensor(at[i].shape(), std::move(vm));
            out.push_back((f(plus) - f(minus)) / (2.0 * h));
        }
    }
    return out;
}

CheckResult check_op(const OpCase& op, std::mt19937_64& rng, double h) {
    const Inputs inputs = op.make_inputs(rng);
    const Tensor probe = op.apply(inputs);
    const Tensor weights = uniform(rng, probe.shape(), -1, 1);
    std::vector<Tensor> weights2;
    for (const auto& in : inputs) weights2.push_back(uniform(rng, in.shape(), -1, 1));

    auto loss_value = [&](const Inputs& x) { return dot_const(op.apply(x), weights); };
    auto first_order = [&](const Inputs& x) {
        ag::Graph g;
        Inputs vars = variables(g, x);
        Tensor loss = ag::dot(op.apply(vars), weights);
        return ag::grad(loss, vars);
    };
    auto projected = [&](const Inputs& x) {
        const auto gs = first_order(x);
        double s = 0.0;
        for (std::size_t i = 0; i < gs.size(); ++i) s += dot_const(gs[i], weights2[i]);
        return s;
    };

    CheckResult result;
    result.first_order_rel_err =
        relative_error(flatten(first_order(inputs)), numeric_gradient(loss_value, inputs, h));

    ag::Graph g;
    Inputs vars = variables(g, inputs);
    Tensor loss = ag::dot(op.apply(vars), weights);
    const auto gs = ag::grad(loss, vars, /*create_graph=*/true);
    Tensor s;
    for (std::size_t i = 0; i < gs.size(); ++i) {
        Tensor term = ag::dot(gs[i], weights2[i]);
        s = (i == 0) ? term : ag::add(s, term);
    }
    const auto hv = ag::grad(s, vars);
    // Second-order finite differences need a wider step to stay above round-off.
    result.second_order_rel_err =
        relative_error(flatten(hv), numeric_gradient(projected, inputs, 1e-4));
    return result;
}

}  // namespace xfer::testing
