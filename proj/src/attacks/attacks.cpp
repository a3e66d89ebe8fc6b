#include "xfer/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "xfer/csv.hpp"

namespace xfer {

std::string to_string(AttackKind kind) {
    switch (kind) {
        case AttackKind::fgs: return "fgs";
        case AttackKind::igs: return "igs";
        case AttackKind::cw: return "cw";
    }
    return "?";
}

AttackKind attack_kind_from_string(const std::string& s) {
    if (s == "fgs") return AttackKind::fgs;
    if (s == "igs") return AttackKind::igs;
    if (s == "cw") return AttackKind::cw;
    throw std::invalid_argument("unknown attack kind '" + s + "'");
}

void AttackSpec::validate() const {
    if (!(clamp_lo < clamp_hi)) throw std::invalid_argument("clamp range: lo must be below hi");
    if (kind == AttackKind::cw) {
        if (!(cw.confidence >= 0.0)) throw std::invalid_argument("cw.confidence must be >= 0");
        if (cw.search_steps == 0) throw std::invalid_argument("cw.search_steps must be >= 1");
        if (cw.iterations == 0) throw std::invalid_argument("cw.iterations must be >= 1");
        if (!(cw.learning_rate > 0.0)) throw std::invalid_argument("cw.learning_rate must be > 0");
        if (!(cw.c_init > 0.0)) throw std::invalid_argument("cw.c_init must be > 0");
        return;
    }
    if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be > 0");
    if (kind == AttackKind::igs && iterations == 0) throw std::invalid_argument("iterations must be >= 1");
}

std::string AttackSpec::label() const {
    if (kind == AttackKind::cw) return "CW-" + format_double(cw.confidence);
    std::string name = kind == AttackKind::fgs ? "FGS-" : "IGS-";
    return name + format_double(epsilon);
}

std::size_t AdversarialBatch::correct_count() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < size(); ++i) n += original_pred[i] == labels[i];
    return n;
}

std::size_t AdversarialBatch::adversarial_count() const {
    return static_cast<std::size_t>(std::count(adversarial.begin(), adversarial.end(), 1));
}

double AdversarialBatch::success_rate() const {
    const std::size_t correct = correct_count();
    return correct ? static_cast<double>(adversarial_count()) / static_cast<double>(correct) : 0.0;
}

namespace {

void check_batch(const ag::Tensor& x, std::span<const int> gt, double lo, double hi) {
    if (x.rank() < 2 || x.dim(0) != gt.size()) throw std::invalid_argument("attack: one label per sample required");
    if (!(lo < hi)) throw std::invalid_argument("attack: clamp lo must be below hi");
}

std::vector<double> to_vector(const ag::Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

AdversarialBatch finalize_batch(const Model& model, ag::Tensor originals, ag::Tensor perturbed,
                                std::span<const int> gt) {
    AdversarialBatch b;
    b.labels.assign(gt.begin(), gt.end());
    b.original_pred = model.predict(originals);
    b.perturbed_pred = model.predict(perturbed);
    const std::size_t n = b.labels.size();
    const std::size_t width = originals.numel() / n;
    b.adversarial.resize(n);
    b.l2.resize(n);
    b.linf.resize(n);
    const auto xo = originals.values();
    const auto xp = perturbed.values();
    for (std::size_t i = 0; i < n; ++i) {
        b.adversarial[i] = b.original_pred[i] == b.labels[i] && b.perturbed_pred[i] != b.original_pred[i];
        double s = 0.0, m = 0.0;
        for (std::size_t j = i * width; j < (i + 1) * width; ++j) {
            const double d = xp[j] - xo[j];
            s += d * d;
            m = std::max(m, std::abs(d));
        }
        b.l2[i] = std::sqrt(s);
        b.linf[i] = m;
    }
    b.originals = std::move(originals);
    b.perturbed = std::move(perturbed);
    return b;
}

AdversarialBatch fgs(const Model& model, const ag::Tensor& x, std::span<const int> gt, double epsilon, double lo,
                     double hi) {
    return igs(model, x, gt, epsilon, 1, lo, hi);
}

AdversarialBatch igs(const Model& model, const ag::Tensor& x, std::span<const int> gt, double epsilon,
                     std::size_t iterations, double lo, double hi) {
    check_batch(x, gt, lo, hi);
    if (!(epsilon > 0.0)) throw std::invalid_argument("igs: epsilon must be > 0");
    if (iterations == 0) throw std::invalid_argument("igs: iterations must be >= 1");
    const double alpha = epsilon / static_cast<double>(iterations);
    const auto x0 = x.values();
    std::vector<double> cur = to_vector(x);
    for (std::size_t t = 0; t < iterations; ++t) {
        const ag::Tensor g = input_gradient(model, ag::Tensor(x.shape(), cur), gt).tensor;
        const auto gv = g.values();
        for (std::size_t j = 0; j < cur.size(); ++j) {
            const double s = gv[j] > 0.0 ? 1.0 : (gv[j] < 0.0 ? -1.0 : 0.0);
            // The ball projection guards against rounding in the accumulated steps.
            const double v = std::clamp(cur[j] - alpha * s, x0[j] - epsilon, x0[j] + epsilon);
            cur[j] = std::clamp(v, lo, hi);
        }
    }
    return finalize_batch(model, x.detach(), ag::Tensor(x.shape(), std::move(cur)), gt);
}

AdversarialBatch average_direction_attack(const Model& a, const Model& b, const ag::Tensor& x,
                                          std::span<const int> gt, double epsilon, double r, double lo, double hi) {
    check_batch(x, gt, lo, hi);
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("average_direction_attack: r must lie in [0,1]");
    const ag::Tensor ga = input_gradient(a, x, gt).tensor;
    const ag::Tensor gb = input_gradient(b, x, gt).tensor;
    std::vector<double> out = to_vector(x);
    for (std::size_t j = 0; j < out.size(); ++j)
        out[j] = std::clamp(out[j] - epsilon * (r * ga[j] + (1.0 - r) * gb[j]), lo, hi);
    return finalize_batch(a, x.detach(), ag::Tensor(x.shape(), std::move(out)), gt);
}

namespace {

// Highest-scoring class other than gt in each row.
std::vector<int> runner_up(const ag::Tensor& scores, std::span<const int> gt) {
    const std::size_t classes = scores.dim(1);
    std::vector<int> out(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i) {
        int best = -1;
        for (std::size_t c = 0; c < classes; ++c) {
            if (static_cast<int>(c) == gt[i]) continue;
            if (best < 0 || scores[i * classes + c] > scores[i * classes + static_cast<std::size_t>(best)])
                best = static_cast<int>(c);
        }
        out[i] = best;
    }
    return out;
}

}  // namespace

std::vector<double> log_margin(const Model& model, const ag::Tensor& x, std::span<const int> gt) {
    std::vector<ag::Tensor> params;
    for (const auto& p : model.parameters()) params.push_back(p.value);
    const ag::Tensor lp = ag::log_softmax(model.logits(params, x.detach()));
    const auto other = runner_up(lp, gt);
    std::vector<double> out(gt.size());
    for (std::size_t i = 0; i < gt.size(); ++i)
        out[i] = lp[i * lp.dim(1) + static_cast<std::size_t>(gt[i])] - lp[i * lp.dim(1) + static_cast<std::size_t>(other[i])];
    return out;
}

AdversarialBatch cw(const Model& model, const ag::Tensor& x, std::span<const int> gt, const CwParams& p, double lo,
                    double hi) {
    check_batch(x, gt, lo, hi);
    AttackSpec spec;
    spec.kind = AttackKind::cw;
    spec.cw = p;
    spec.validate();

    const std::size_t n = gt.size();
    const std::size_t width = x.numel() / n;
    const double half = (hi - lo) / 2.0;
    const double mid = (hi + lo) / 2.0;
    const ag::Tensor x0 = x.detach();
    const auto xv = x0.values();

    // tanh-space start point; the squeeze keeps atanh finite at the box edges.
    std::vector<double> w0(x.numel());
    for (std::size_t j = 0; j < w0.size(); ++j)
        w0[j] = std::atanh(std::clamp((xv[j] - mid) / half, -1.0 + 1e-6, 1.0 - 1e-6));

    std::vector<double> c(n, p.c_init), c_lo(n, 0.0), c_hi(n, std::numeric_limits<double>::infinity());
    std::vector<double> best_l2(n, std::numeric_limits<double>::infinity());
    std::vector<double> best = to_vector(x0);
    std::vector<double> last(x.numel());

    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (std::size_t round = 0; round < p.search_steps; ++round) {
        std::vector<double> w = w0, m(w.size(), 0.0), v(w.size(), 0.0);
        std::vector<std::uint8_t> found(n, 0);
        const ag::Tensor c_t({n}, c);
        for (std::size_t it = 0; it <= p.iterations; ++it) {
            ag::Graph graph;
            const ag::Tensor wv = graph.variable(ag::Tensor(x.shape(), w));
            const ag::Tensor xadv = ag::add_scalar(ag::scale(ag::tanh(wv), half), mid);
            const ag::Tensor dist = ag::reduce_to_axis(ag::square(ag::sub(xadv, x0)), 0);
            std::vector<ag::Tensor> params;
            for (const auto& np : model.parameters()) params.push_back(np.value);
            const ag::Tensor lp = ag::log_softmax(model.logits(params, xadv));
            const auto other = runner_up(lp, gt);
            const ag::Tensor margin = ag::sub(ag::index_select(lp, gt), ag::index_select(lp, other));

            for (std::size_t i = 0; i < n; ++i) {
                if (margin[i] < 0.0 && margin[i] <= -p.confidence && dist[i] < best_l2[i] * best_l2[i]) {
                    best_l2[i] = std::sqrt(dist[i]);
                    std::copy_n(xadv.values().begin() + static_cast<long>(i * width), width,
                                best.begin() + static_cast<long>(i * width));
                }
                if (margin[i] < 0.0 && margin[i] <= -p.confidence) found[i] = 1;
            }
            if (it == p.iterations) {
                std::copy(xadv.values().begin(), xadv.values().end(), last.begin());
                break;
            }
            const ag::Tensor loss =
                ag::add(ag::sum(dist), ag::dot(c_t, ag::clamp_min(margin, -p.confidence)));
            const ag::Tensor g = ag::grad(loss, {wv})[0];
            const double t = static_cast<double>(it + 1);
            const double c1 = 1.0 - std::pow(b1, t), c2 = 1.0 - std::pow(b2, t);
            for (std::size_t j = 0; j < w.size(); ++j) {
                m[j] = b1 * m[j] + (1 - b1) * g[j];
                v[j] = b2 * v[j] + (1 - b2) * g[j] * g[j];
                w[j] -= p.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps);
            }
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (found[i]) {
                c_hi[i] = std::min(c_hi[i], c[i]);
                c[i] = (c_lo[i] + c_hi[i]) / 2.0;
            } else {
                c_lo[i] = std::max(c_lo[i], c[i]);
                c[i] = std::isinf(c_hi[i]) ? c[i] * 10.0 : (c_lo[i] + c_hi[i]) / 2.0;
            }
        }
    }
    // Samples never made adversarial return their final iterate.
    for (std::size_t i = 0; i < n; ++i)
        if (std::isinf(best_l2[i]))
            std::copy_n(last.begin() + static_cast<long>(i * width), width, best.begin() + static_cast<long>(i * width));
    return finalize_batch(model, x0, ag::Tensor(x.shape(), std::move(best)), gt);
}

AdversarialBatch run_attack(const Model& model, const ag::Tensor& x, std::span<const int> gt,
                            const AttackSpec& spec) {
    spec.validate();
    switch (spec.kind) {
        case AttackKind::fgs: return fgs(model, x, gt, spec.epsilon, spec.clamp_lo, spec.clamp_hi);
        case AttackKind::igs: return igs(model, x, gt, spec.epsilon, spec.iterations, spec.clamp_lo, spec.clamp_hi);
        case AttackKind::cw: return cw(model, x, gt, spec.cw, spec.clamp_lo, spec.clamp_hi);
    }
    throw std::invalid_argument("unknown attack kind");
}

void write_attack_csv(const AdversarialBatch& b, const std::filesystem::path& path) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < b.size(); ++i)
        rows.push_back({std::to_string(i), std::to_string(b.labels[i]), std::to_string(b.original_pred[i]),
                        std::to_string(b.perturbed_pred[i]), format_double(b.l2[i]), format_double(b.linf[i]),
                        b.adversarial[i] ? "1" : "0"});
    write_csv(path, {"sample_id", "label", "orig_pred", "adv_pred", "l2", "linf", "success"}, rows);
}

}  // namespace xfer
