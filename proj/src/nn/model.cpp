#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "xfer/nn.hpp"
#include "xfer/rng.hpp"

namespace xfer {

std::string to_string(ModelKind kind) { return kind == ModelKind::lenet ? "lenet" : "mlp"; }

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "lenet") return ModelKind::lenet;
    if (s == "mlp") return ModelKind::mlp;
    throw std::invalid_argument("unknown model kind '" + s + "'");
}

ModelSpec ModelSpec::lenet() { return ModelSpec{}; }

ModelSpec ModelSpec::mlp(ag::Shape input_shape, std::vector<std::size_t> hidden, std::size_t classes) {
    ModelSpec s;
    s.kind = ModelKind::mlp;
    s.hidden = std::move(hidden);
    s.input_shape = std::move(input_shape);
    s.classes = classes;
    return s;
}

std::vector<std::pair<std::string, ag::Shape>> parameter_layout(const ModelSpec& spec) {
    std::vector<std::pair<std::string, ag::Shape>> layout;
    if (spec.kind == ModelKind::lenet) {
        if (spec.input_shape != ag::Shape{1, 28, 28} || spec.classes != 10)
            throw std::invalid_argument("lenet expects 1x28x28 inputs and 10 classes");
        layout = {{"conv1.weight", {6, 1, 3, 3}}, {"conv1.bias", {6}},
                  {"conv2.weight", {16, 6, 3, 3}}, {"conv2.bias", {16}},
                  {"fc1.weight", {120, 400}},      {"fc1.bias", {120}},
                  {"fc2.weight", {84, 120}},       {"fc2.bias", {84}},
                  {"fc3.weight", {10, 84}},        {"fc3.bias", {10}}};
        return layout;
    }
    std::size_t in = ag::numel(spec.input_shape);
    std::vector<std::size_t> widths = spec.hidden;
    widths.push_back(spec.classes);
    for (std::size_t i = 0; i < widths.size(); ++i) {
        const std::string prefix = "fc" + std::to_string(i + 1);
        layout.push_back({prefix + ".weight", {widths[i], in}});
        layout.push_back({prefix + ".bias", {widths[i]}});
        in = widths[i];
    }
    return layout;
}

namespace {

std::size_t fan_in(const ag::Shape& weight_shape) {
    return ag::numel(weight_shape) / weight_shape[0];
}

ag::Tensor linear(const ag::Tensor& x, const ag::Tensor& w, const ag::Tensor& b) {
    ag::Tensor y = ag::matmul(x, w, false, true);
    return ag::add(y, ag::broadcast_axis(b, y.shape(), 1));
}

ag::Tensor conv(const ag::Tensor& x, const ag::Tensor& w, const ag::Tensor& b) {
    ag::Tensor y = ag::conv2d(x, w);
    return ag::add(y, ag::broadcast_axis(b, y.shape(), 1));
}

}  // namespace

Model Model::initialize(const ModelSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    return draw(spec, seed, rng);
}

std::pair<Model, Model> Model::initialize_pair(const ModelSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    Model first = draw(spec, seed, rng);
    Model second = draw(spec, seed, rng);
    return {std::move(first), std::move(second)};
}

Model Model::draw(const ModelSpec& spec, std::uint64_t seed, Rng& rng) {
    Model m;
    m.spec_ = spec;
    m.seed_ = seed;
    const auto layout = parameter_layout(spec);
    for (std::size_t i = 0; i < layout.size(); i += 2) {
        const auto& [wname, wshape] = layout[i];
        const auto& [bname, bshape] = layout[i + 1];
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in(wshape)));
        std::vector<double> w(ag::numel(wshape));
        for (auto& v : w) v = rng.uniform(-bound, bound);
        std::vector<double> b(ag::numel(bshape));
        for (auto& v : b) v = rng.uniform(-bound, bound);
        m.params_.push_back({wname, ag::Tensor(wshape, std::move(w))});
        m.params_.push_back({bname, ag::Tensor(bshape, std::move(b))});
    }
    return m;
}

Model Model::zeros(const ModelSpec& spec) {
    Model m;
    m.spec_ = spec;
    for (const auto& [name, shape] : parameter_layout(spec)) m.params_.push_back({name, ag::Tensor::zeros(shape)});
    return m;
}

Model Model::from_parameters(const ModelSpec& spec, std::uint64_t seed, std::vector<NamedTensor> params) {
    const auto layout = parameter_layout(spec);
    if (layout.size() != params.size()) throw std::invalid_argument("parameter count does not match model spec");
    for (std::size_t i = 0; i < layout.size(); ++i)
        if (layout[i].first != params[i].name || layout[i].second != params[i].value.shape())
            throw std::invalid_argument("parameter '" + params[i].name + "' does not match model spec");
    Model m;
    m.spec_ = spec;
    m.seed_ = seed;
    m.params_ = std::move(params);
    return m;
}

std::size_t Model::parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.numel();
    return n;
}

void Model::set_parameter(std::size_t i, ag::Tensor value) {
    if (value.shape() != params_.at(i).value.shape())
        throw ag::ShapeError("set_parameter: shape mismatch for " + params_[i].name);
    params_[i].value = value.detach();
}

BoundModel Model::bind(ag::Graph& graph) const {
    BoundModel b;
    b.model = this;
    for (const auto& p : params_) b.params.push_back(graph.variable(p.value));
    return b;
}

ag::Tensor Model::logits(std::span<const ag::Tensor> p, const ag::Tensor& x) const {
    if (p.size() != params_.size()) throw std::invalid_argument("logits: wrong parameter count");
    if (x.rank() != spec_.input_shape.size() + 1 ||
        !std::equal(spec_.input_shape.begin(), spec_.input_shape.end(), x.shape().begin() + 1))
        throw ag::ShapeError("model input " + ag::to_string(x.shape()) + " does not match " +
                             ag::to_string(spec_.input_shape));
    if (spec_.kind == ModelKind::lenet) {
        ag::Tensor h = ag::maxpool2d(ag::relu(conv(x, p[0], p[1])));
        h = ag::maxpool2d(ag::relu(conv(h, p[2], p[3])));
        h = ag::flatten_rows(h);
        h = ag::relu(linear(h, p[4], p[5]));
        h = ag::relu(linear(h, p[6], p[7]));
        return linear(h, p[8], p[9]);
    }
    ag::Tensor h = ag::flatten_rows(x);
    const std::size_t layers = p.size() / 2;
    for (std::size_t i = 0; i < layers; ++i) {
        h = linear(h, p[2 * i], p[2 * i + 1]);
        if (i + 1 < layers) h = ag::relu(h);
    }
    return h;
}

ag::Tensor BoundModel::logits(const ag::Tensor& x) const { return model->logits(params, x); }

ag::Tensor BoundModel::probs(const ag::Tensor& x) const { return ag::softmax(logits(x)); }

ag::Tensor Model::predict_proba(const ag::Tensor& x) const {
    std::vector<ag::Tensor> p;
    for (const auto& np : params_) p.push_back(np.value);
    constexpr std::size_t kChunk = 500;
    const std::size_t n = x.dim(0);
    if (n <= kChunk) return ag::softmax(logits(p, x.detach()));
    std::vector<double> out;
    out.reserve(n * spec_.classes);
    const std::size_t width = x.numel() / n;
    for (std::size_t begin = 0; begin < n; begin += kChunk) {
        const std::size_t len = std::min(kChunk, n - begin);
        ag::Shape shape = x.shape();
        shape[0] = len;
        ag::Tensor chunk(shape, std::vector<double>(x.values().begin() + static_cast<std::ptrdiff_t>(begin * width),
                                                    x.values().begin() + static_cast<std::ptrdiff_t>((begin + len) * width)));
        const ag::Tensor probs = ag::softmax(logits(p, chunk));
        out.insert(out.end(), probs.values().begin(), probs.values().end());
    }
    return ag::Tensor({n, spec_.classes}, std::move(out));
}

std::vector<int> Model::predict(const ag::Tensor& x) const { return argmax_rows(predict_proba(x)); }

ag::Tensor Model::features(const ag::Tensor& x) const {
    if (spec_.kind != ModelKind::lenet) return ag::flatten_rows(x);
    const auto& p = params_;
    ag::Tensor h = ag::maxpool2d(ag::relu(conv(x.detach(), p[0].value, p[1].value)));
    h = ag::maxpool2d(ag::relu(conv(h, p[2].value, p[3].value)));
    return ag::flatten_rows(h);
}

bool Model::same_parameters(const Model& other) const {
    if (params_.size() != other.params_.size()) return false;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        const auto a = params_[i].value.values();
        const auto b = other.params_[i].value.values();
        if (a.size() != b.size() || !std::equal(a.begin(), a.end(), b.begin())) return false;
    }
    return true;
}

std::vector<int> argmax_rows(const ag::Tensor& t) {
    if (t.rank() != 2) throw ag::ShapeError("argmax_rows expects [N,C]");
    const std::size_t cols = t.dim(1);
    std::vector<int> out(t.dim(0));
    const auto v = t.values();
    for (std::size_t r = 0; r < out.size(); ++r) {
        const double* row = v.data() + r * cols;
        out[r] = static_cast<int>(std::max_element(row, row + cols) - row);
    }
    return out;
}

CrossEntropy cross_entropy(const ag::Tensor& probs, std::span<const int> labels) {
    constexpr double kFloor = 1e-12;
    const ag::Tensor p_gt = ag::index_select(probs, labels);
    CrossEntropy ce;
    for (double v : p_gt.values())
        if (v < kFloor) ++ce.clamped;
    ce.loss = ag::negate(ag::mean(ag::log(ag::clamp_min(p_gt, kFloor))));
    return ce;
}

std::vector<double> row_norms(const ag::Tensor& t) {
    const std::size_t rows = t.dim(0);
    const std::size_t width = t.numel() / rows;
    std::vector<double> out(rows);
    const auto v = t.values();
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < width; ++j) s += v[r * width + j] * v[r * width + j];
        out[r] = std::sqrt(s);
    }
    return out;
}

InputGradient input_gradient(const BoundModel& model, const ag::Tensor& x, std::span<const int> gt,
                             bool create_graph) {
    if (gt.size() != x.dim(0)) throw std::invalid_argument("input_gradient: one label per sample required");
    for (int g : gt)
        if (g < 0 || static_cast<std::size_t>(g) >= model.model->spec().classes)
            throw std::out_of_range("input_gradient: ground-truth class out of range");
    // Samples are independent, so the gradient of the summed p_gt gives every row at once.
    const ag::Tensor total = ag::sum(ag::index_select(model.probs(x), gt));
    InputGradient out;
    out.tensor = ag::grad(total, {x}, create_graph)[0];
    out.gt_class.assign(gt.begin(), gt.end());
    out.l2_norm = row_norms(out.tensor);
    return out;
}

InputGradient input_gradient(const Model& model, const ag::Tensor& x, std::span<const int> gt) {
    ag::Graph graph;
    const BoundModel bound = model.bind(graph);
    const ag::Tensor xv = graph.variable(x);
    InputGradient g = input_gradient(bound, xv, gt, false);
    g.tensor = g.tensor.detach();
    return g;
}

std::vector<double> gt_probability(const Model& model, const ag::Tensor& x, std::span<const int> gt) {
    const ag::Tensor p = model.predict_proba(x);
    std::vector<double> out(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) out[i] = p[i * p.dim(1) + static_cast<std::size_t>(gt[i])];
    return out;
}

double accuracy(const Model& model, const ag::Tensor& x, std::span<const int> labels) {
    const auto pred = model.predict(x);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
    return pred.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace xfer
