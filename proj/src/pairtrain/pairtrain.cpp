#include "xfer/pairtrain.hpp"

#include <cmath>
#include <stdexcept>

#include "xfer/csv.hpp"

namespace xfer {

std::string to_string(Goal goal) {
    switch (goal) {
        case Goal::none: return "none";
        case Goal::parallel: return "parallel";
        case Goal::perpendicular: return "perpendicular";
        case Goal::antiparallel: return "antiparallel";
    }
    return "?";
}

Goal goal_from_string(const std::string& s) {
    if (s == "none") return Goal::none;
    if (s == "parallel") return Goal::parallel;
    if (s == "perpendicular") return Goal::perpendicular;
    if (s == "antiparallel") return Goal::antiparallel;
    throw std::invalid_argument("unknown goal '" + s + "'");
}

std::string to_string(UpdateMode mode) { return mode == UpdateMode::alternating ? "alternating" : "simultaneous"; }

UpdateMode update_mode_from_string(const std::string& s) {
    if (s == "alternating") return UpdateMode::alternating;
    if (s == "simultaneous") return UpdateMode::simultaneous;
    throw std::invalid_argument("unknown update_mode '" + s + "'");
}

void PairTrainConfig::validate() const {
    if (goal != Goal::none && !(lambda_cos > 0.0)) throw std::invalid_argument("lambda_cos must be > 0 when goal is set");
    if (magnitude_targets && !(magnitude_targets->first > 0.0 && magnitude_targets->second > 0.0))
        throw std::invalid_argument("magnitude_targets must be > 0");
    if (!(lambda_mag >= 0.0)) throw std::invalid_argument("lambda_mag must be >= 0");
    if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
    if (!(adam.lr > 0.0)) throw std::invalid_argument("adam.lr must be > 0");
    if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0)) throw std::invalid_argument("adam.beta1 must lie in [0,1)");
    if (!(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) throw std::invalid_argument("adam.beta2 must lie in [0,1)");
}

ag::Tensor goal_transform(const ag::Tensor& cos, Goal goal) {
    switch (goal) {
        case Goal::perpendicular: return ag::square(cos);
        case Goal::parallel: return ag::negate(cos);
        case Goal::antiparallel: return cos;
        case Goal::none: break;
    }
    throw std::invalid_argument("goal_transform: goal must not be none");
}

void PairTrainRecord::write_csv(const std::filesystem::path& path) const {
    std::vector<std::string> header{"epoch"};
    for (std::size_t k = 1; k <= models; ++k)
        for (const char* f : {"class_loss", "mag_loss", "train_acc", "grad_norm_mean"})
            header.push_back("m" + std::to_string(k) + "_" + f);
    for (const char* f : {"cos_loss", "cos_mean", "cos_std", "zero_grad_skipped", "clamped", "optimizer_steps"})
        header.emplace_back(f);
    std::vector<std::vector<std::string>> rows;
    for (const auto& e : epochs) {
        std::vector<std::string> r{std::to_string(e.epoch)};
        for (std::size_t k = 0; k < models; ++k) {
            r.push_back(format_double(e.class_loss[k]));
            r.push_back(format_double(e.mag_loss[k]));
            r.push_back(format_double(e.train_accuracy[k]));
            r.push_back(format_double(e.grad_norm_mean[k]));
        }
        r.push_back(format_double(e.cos_loss));
        r.push_back(format_double(e.cos_mean));
        r.push_back(format_double(e.cos_std));
        r.push_back(std::to_string(e.zero_grad_skipped));
        r.push_back(std::to_string(e.clamped));
        r.push_back(std::to_string(e.optimizer_steps));
        rows.push_back(std::move(r));
    }
    xfer::write_csv(path, header, rows);
}

namespace {

std::vector<ag::Tensor> concat(const std::vector<ag::Tensor>& a, const std::vector<ag::Tensor>& b) {
    std::vector<ag::Tensor> out = a;
    out.insert(out.end(), b.begin(), b.end());
    return out;
}

std::span<const ag::Tensor> first(const std::vector<ag::Tensor>& v, std::size_t n) { return {v.data(), n}; }
std::span<const ag::Tensor> rest(const std::vector<ag::Tensor>& v, std::size_t n) { return {v.data() + n, v.size() - n}; }

void require_compatible(const Model& a, const Model& b) {
    if (a.spec().input_shape != b.spec().input_shape || a.spec().classes != b.spec().classes)
        throw std::invalid_argument("paired models must share input shape and class count");
}

// Running sums turned into an EpochRecord at the end of the epoch.
struct EpochAccumulator {
    std::size_t models;
    std::size_t samples = 0;
    std::size_t batches = 0;
    std::vector<double> class_loss, mag_loss, correct, norm_sum;
    std::size_t mag_batches = 0;
    double cos_loss = 0.0;
    std::size_t cos_batches = 0;
    double cos_sum = 0.0, cos_sq = 0.0;
    std::size_t cos_count = 0;
    std::size_t skipped = 0, clamped = 0, steps = 0;

    explicit EpochAccumulator(std::size_t m)
        : models(m), class_loss(m, 0.0), mag_loss(m, 0.0), correct(m, 0.0), norm_sum(m, 0.0) {}

    EpochRecord finish(std::size_t epoch) const {
        EpochRecord e;
        e.epoch = epoch;
        const double n = static_cast<double>(samples);
        for (std::size_t k = 0; k < models; ++k) {
            e.class_loss.push_back(class_loss[k] / n);
            e.mag_loss.push_back(mag_batches ? mag_loss[k] / static_cast<double>(mag_batches) : 0.0);
            e.train_accuracy.push_back(correct[k] / n);
            e.grad_norm_mean.push_back(norm_sum[k] / n);
        }
        e.cos_loss = cos_batches ? cos_loss / static_cast<double>(cos_batches) : 0.0;
        if (cos_count) {
            const double c = static_cast<double>(cos_count);
            e.cos_mean = cos_sum / c;
            e.cos_std = cos_count > 1 ? std::sqrt(std::max(0.0, (cos_sq - c * e.cos_mean * e.cos_mean) / (c - 1.0))) : 0.0;
        }
        e.zero_grad_skipped = skipped;
        e.clamped = clamped;
        e.optimizer_steps = steps;
        return e;
    }
};

std::size_t count_correct(const ag::Tensor& probs, std::span<const int> labels) {
    const auto pred = argmax_rows(probs);
    std::size_t n = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) n += pred[i] == labels[i];
    return n;
}

// Per-row cosine from raw values, for statistics only.
double row_cosine(const ag::Tensor& a, const ag::Tensor& b, std::size_t row, std::size_t width) {
    double ab = 0.0, aa = 0.0, bb = 0.0;
    for (std::size_t j = row * width; j < (row + 1) * width; ++j) {
        ab += a[j] * b[j];
        aa += a[j] * a[j];
        bb += b[j] * b[j];
    }
    return ab / (std::sqrt(aa) * std::sqrt(bb));
}

// Regularization terms on flattened input gradients of one or two models.
struct GradPenalty {
    std::optional<ag::Tensor> loss;  // weighted sum of active terms
    std::vector<std::uint32_t> rows; // rows with usable gradient norms
};

GradPenalty build_penalty(const std::vector<ag::Tensor>& grads, const std::vector<std::optional<double>>& targets,
                          Goal goal, const PairTrainConfig& cfg, EpochAccumulator& acc) {
    const std::size_t batch = grads[0].dim(0);
    const std::size_t width = grads[0].numel() / batch;
    std::vector<std::vector<double>> norms;
    for (const auto& g : grads) norms.push_back(row_norms(g));

    GradPenalty out;
    for (std::size_t i = 0; i < batch; ++i) {
        bool ok = true;
        for (const auto& n : norms) ok = ok && n[i] > kMinGradNorm;
        if (ok) out.rows.push_back(static_cast<std::uint32_t>(i));
    }
    acc.skipped += batch - out.rows.size();
    for (std::size_t k = 0; k < norms.size(); ++k)
        for (double v : norms[k]) acc.norm_sum[k] += v;
    if (grads.size() == 2)
        for (auto i : out.rows) {
            const double c = row_cosine(grads[0], grads[1], i, width);
            acc.cos_sum += c;
            acc.cos_sq += c * c;
            ++acc.cos_count;
        }
    if (out.rows.empty()) return out;

    std::vector<ag::Tensor> sel;
    const ag::Indices idx = ag::make_indices(out.rows);
    for (const auto& g : grads) sel.push_back(out.rows.size() == batch ? g : ag::take_rows(g, idx));

    auto accumulate = [&](const ag::Tensor& term) { out.loss = out.loss ? ag::add(*out.loss, term) : term; };
    if (goal != Goal::none && grads.size() == 2) {
        const ag::Tensor lcos = ag::mean(goal_transform(ag::rowwise_cosine(sel[0], sel[1]), goal));
        acc.cos_loss += lcos.item();
        ++acc.cos_batches;
        accumulate(ag::scale(lcos, cfg.lambda_cos));
    }
    bool any_mag = false;
    for (std::size_t k = 0; k < sel.size(); ++k) {
        if (!targets[k]) continue;
        const ag::Tensor lmag = ag::mean(ag::square(ag::add_scalar(ag::rowwise_norm(sel[k]), -*targets[k])));
        acc.mag_loss[k] += lmag.item();
        any_mag = true;
        accumulate(ag::scale(lmag, cfg.lambda_mag));
    }
    if (any_mag) ++acc.mag_batches;
    return out;
}

template <class Step>
PairTrainRecord run_epochs(std::size_t models, const Dataset& data, const PairTrainConfig& cfg,
                           const EpochCallback& on_epoch, Step step) {
    const BatchPlan plan = BatchPlan::sequential(data.size(), cfg.batch_size, cfg.epochs);
    PairTrainRecord record;
    record.models = models;
    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        EpochAccumulator acc(models);
        for (std::size_t b = 0; b < plan.batch_count(); ++b) {
            const auto idx = plan.batch(b);
            const ag::Tensor x = data.images_at(idx);
            const std::vector<int> y = data.labels_at(idx);
            step(x, y, acc);
            acc.samples += idx.size();
            ++acc.batches;
        }
        record.epochs.push_back(acc.finish(epoch));
        if (on_epoch) on_epoch(record.epochs.back());
    }
    return record;
}

void add_class_terms(const std::vector<const BoundModel*>& bound, const ag::Tensor& x, std::span<const int> y,
                     EpochAccumulator& acc, std::optional<ag::Tensor>& loss) {
    for (std::size_t k = 0; k < bound.size(); ++k) {
        const ag::Tensor probs = bound[k]->probs(x);
        const CrossEntropy ce = cross_entropy(probs, y);
        acc.class_loss[k] += ce.loss.item() * static_cast<double>(y.size());
        acc.correct[k] += static_cast<double>(count_correct(probs, y));
        acc.clamped += ce.clamped;
        loss = loss ? ag::add(*loss, ce.loss) : ce.loss;
    }
}

}  // namespace

PairResult train_pair(Model m1, Model m2, const Dataset& data, const PairTrainConfig& cfg,
                      const EpochCallback& on_epoch) {
    cfg.validate();
    require_compatible(m1, m2);
    Adam opt1(m1, cfg.adam), opt2(m2, cfg.adam);
    // Moment estimates for the alternating penalty step, when kept apart from the class step.
    Adam pen1(m1, cfg.adam), pen2(m2, cfg.adam);
    const std::size_t n1 = m1.parameters().size();
    const std::vector<std::optional<double>> targets =
        cfg.magnitude_targets ? std::vector<std::optional<double>>{cfg.magnitude_targets->first, cfg.magnitude_targets->second}
                              : std::vector<std::optional<double>>{std::nullopt, std::nullopt};
    const bool regularized = cfg.goal != Goal::none || cfg.magnitude_targets.has_value();

    auto update = [&](const ag::Tensor& loss, const std::vector<ag::Tensor>& params, EpochAccumulator& acc,
                      bool penalty_step = false) {
        const auto grads = ag::grad(loss, params);
        const bool apart = penalty_step && cfg.separate_penalty_optimizer;
        (apart ? pen1 : opt1).step(m1, first(grads, n1));
        (apart ? pen2 : opt2).step(m2, rest(grads, n1));
        ++acc.steps;
    };

    auto step = [&](const ag::Tensor& x, const std::vector<int>& y, EpochAccumulator& acc) {
        if (cfg.update_mode == UpdateMode::simultaneous && regularized) {
            ag::Graph graph;
            const BoundModel b1 = m1.bind(graph), b2 = m2.bind(graph);
            const ag::Tensor xv = graph.variable(x);
            std::optional<ag::Tensor> loss;
            add_class_terms({&b1, &b2}, xv, y, acc, loss);
            const std::vector<ag::Tensor> grads{ag::flatten_rows(input_gradient(b1, xv, y, true).tensor),
                                                ag::flatten_rows(input_gradient(b2, xv, y, true).tensor)};
            const GradPenalty pen = build_penalty(grads, targets, cfg.goal, cfg, acc);
            if (pen.loss) loss = ag::add(*loss, *pen.loss);
            update(*loss, concat(b1.params, b2.params), acc);
            return;
        }
        {
            ag::Graph graph;
            const BoundModel b1 = m1.bind(graph), b2 = m2.bind(graph);
            std::optional<ag::Tensor> loss;
            add_class_terms({&b1, &b2}, x, y, acc, loss);
            update(*loss, concat(b1.params, b2.params), acc);
        }
        if (!regularized) {
            // Gradient statistics only; nothing here is differentiated again.
            const std::vector<ag::Tensor> grads{ag::flatten_rows(input_gradient(m1, x, y).tensor),
                                                ag::flatten_rows(input_gradient(m2, x, y).tensor)};
            build_penalty(grads, targets, Goal::none, cfg, acc);
            return;
        }
        ag::Graph graph;
        const BoundModel b1 = m1.bind(graph), b2 = m2.bind(graph);
        const ag::Tensor xv = graph.variable(x);
        const std::vector<ag::Tensor> grads{ag::flatten_rows(input_gradient(b1, xv, y, true).tensor),
                                            ag::flatten_rows(input_gradient(b2, xv, y, true).tensor)};
        const GradPenalty pen = build_penalty(grads, targets, cfg.goal, cfg, acc);
        if (pen.loss) update(*pen.loss, concat(b1.params, b2.params), acc, true);
    };

    PairTrainRecord record = run_epochs(2, data, cfg, on_epoch, step);
    for (Model* m : {&m1, &m2}) {
        m->metadata()["epochs"] = std::to_string(cfg.epochs);
        m->metadata()["goal"] = to_string(cfg.goal);
        m->metadata()["update_mode"] = to_string(cfg.update_mode);
    }
    if (cfg.magnitude_targets) {
        m1.metadata()["magnitude_target"] = format_double(cfg.magnitude_targets->first);
        m2.metadata()["magnitude_target"] = format_double(cfg.magnitude_targets->second);
    }
    return {std::move(m1), std::move(m2), std::move(record)};
}

SingleResult train_single(Model m, const Dataset& data, const PairTrainConfig& cfg,
                          std::optional<double> magnitude_target, const EpochCallback& on_epoch) {
    cfg.validate();
    if (magnitude_target && !(*magnitude_target > 0.0)) throw std::invalid_argument("magnitude target must be > 0");
    Adam opt(m, cfg.adam);
    auto step = [&](const ag::Tensor& x, const std::vector<int>& y, EpochAccumulator& acc) {
        ag::Graph graph;
        const BoundModel b = m.bind(graph);
        const ag::Tensor xv = graph.variable(x);
        std::optional<ag::Tensor> loss;
        add_class_terms({&b}, xv, y, acc, loss);
        if (magnitude_target) {
            const std::vector<ag::Tensor> grads{ag::flatten_rows(input_gradient(b, xv, y, true).tensor)};
            const GradPenalty pen = build_penalty(grads, {magnitude_target}, Goal::none, cfg, acc);
            if (pen.loss) loss = ag::add(*loss, *pen.loss);
        }
        opt.step(m, ag::grad(*loss, b.params));
        ++acc.steps;
        if (!magnitude_target) {
            const std::vector<ag::Tensor> grads{ag::flatten_rows(input_gradient(m, x, y).tensor)};
            build_penalty(grads, {std::nullopt}, Goal::none, cfg, acc);
        }
    };
    PairTrainRecord record = run_epochs(1, data, cfg, on_epoch, step);
    m.metadata()["epochs"] = std::to_string(cfg.epochs);
    m.metadata()["goal"] = "none";
    if (magnitude_target) m.metadata()["magnitude_target"] = format_double(*magnitude_target);
    return {std::move(m), std::move(record)};
}

SingleResult train_single_magnitude(Model m, const Dataset& data, double magnitude_target,
                                    const PairTrainConfig& cfg, const EpochCallback& on_epoch) {
    if (!(magnitude_target > 0.0)) throw std::invalid_argument("magnitude target must be > 0");
    return train_single(std::move(m), data, cfg, magnitude_target, on_epoch);
}

SingleResult train_second_against_frozen(const Model& frozen, Model m2, const Dataset& data,
                                         const PairTrainConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    require_compatible(frozen, m2);
    Adam opt(m2, cfg.adam);
    const std::vector<std::optional<double>> targets{
        std::nullopt, cfg.magnitude_targets ? std::optional<double>(cfg.magnitude_targets->second) : std::nullopt};
    auto step = [&](const ag::Tensor& x, const std::vector<int>& y, EpochAccumulator& acc) {
        ag::Graph graph;
        const BoundModel b = m2.bind(graph);
        const ag::Tensor xv = graph.variable(x);
        std::optional<ag::Tensor> loss;
        add_class_terms({&b}, xv, y, acc, loss);
        const std::vector<ag::Tensor> grads{ag::flatten_rows(input_gradient(frozen, x, y).tensor),
                                            ag::flatten_rows(input_gradient(b, xv, y, true).tensor)};
        // Statistics land in slot 0 for the trained model; the frozen norm is discarded.
        EpochAccumulator pair_acc(2);
        const GradPenalty pen = build_penalty(grads, targets, cfg.goal, cfg, pair_acc);
        acc.norm_sum[0] += pair_acc.norm_sum[1];
        acc.mag_loss[0] += pair_acc.mag_loss[1];
        acc.mag_batches += pair_acc.mag_batches;
        acc.cos_loss += pair_acc.cos_loss;
        acc.cos_batches += pair_acc.cos_batches;
        acc.cos_sum += pair_acc.cos_sum;
        acc.cos_sq += pair_acc.cos_sq;
        acc.cos_count += pair_acc.cos_count;
        acc.skipped += pair_acc.skipped;
        if (pen.loss) loss = ag::add(*loss, *pen.loss);
        opt.step(m2, ag::grad(*loss, b.params));
        ++acc.steps;
    };
    PairTrainRecord record = run_epochs(1, data, cfg, on_epoch, step);
    m2.metadata()["epochs"] = std::to_string(cfg.epochs);
    m2.metadata()["goal"] = to_string(cfg.goal);
    m2.metadata()["frozen_partner_seed"] = std::to_string(frozen.seed());
    return {std::move(m2), std::move(record)};
}

}  // namespace xfer
