#include "xfer/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

#include <Eigen/Dense>

#include "xfer/csv.hpp"
#include "xfer/pairtrain.hpp"

namespace xfer {

TransferResult transferability(const AdversarialBatch& source, const Model& target) {
    TransferResult r;
    const std::vector<int> clean = target.predict(source.originals);
    const std::vector<int> adv = target.predict(source.perturbed);
    r.flags.assign(source.size(), 0);
    for (std::size_t i = 0; i < source.size(); ++i) {
        if (!source.adversarial[i] || clean[i] != source.labels[i]) continue;
        ++r.eligible;
        if (adv[i] != clean[i]) {
            r.flags[i] = 1;
            ++r.transferred;
        }
    }
    if (r.eligible) r.rate = static_cast<double>(r.transferred) / static_cast<double>(r.eligible);
    return r;
}

MeanStd mean_std(std::span<const std::optional<double>> values) {
    std::vector<double> defined;
    for (const auto& v : values)
        if (v) defined.push_back(*v);
    return mean_std(std::span<const double>(defined));
}

MeanStd mean_std(std::span<const double> values) {
    MeanStd m;
    m.n = values.size();
    if (values.empty()) return m;
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    m.mean = mean;
    if (values.size() > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        m.std = std::sqrt(ss / (n - 1.0));
    }
    return m;
}

std::string format_mean_std(const MeanStd& m, int digits) {
    if (!m.mean) return "undefined";
    char buf[64];
    if (m.std)
        std::snprintf(buf, sizeof buf, "%.*f ± %.*f", digits, *m.mean, digits, *m.std);
    else
        std::snprintf(buf, sizeof buf, "%.*f", digits, *m.mean);
    return buf;
}

GradStats gradient_stats(const ag::Tensor& g1, const ag::Tensor& g2, std::string split) {
    if (g1.shape() != g2.shape() || g1.rank() != 2) throw ag::ShapeError("gradient_stats expects two [N,D] tensors");
    const std::size_t n = g1.dim(0), d = g1.dim(1);
    GradStats s;
    s.split = std::move(split);
    const auto n1 = row_norms(g1);
    const auto n2 = row_norms(g2);
    double diff = 0.0, sum1 = 0.0, sum2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        diff += std::abs(n1[i] - n2[i]);
        sum1 += n1[i];
        sum2 += n2[i];
        if (!(n1[i] > kMinGradNorm && n2[i] > kMinGradNorm)) {
            ++s.skipped;
            continue;
        }
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += g1[i * d + j] * g2[i * d + j];
        s.cos.push_back(std::clamp(dot / (n1[i] * n2[i]), -1.0, 1.0));
    }
    s.count = s.cos.size();
    s.mean_norm_diff = diff / static_cast<double>(n);
    s.mean_norm1 = sum1 / static_cast<double>(n);
    s.mean_norm2 = sum2 / static_cast<double>(n);
    const MeanStd ms = mean_std(std::span<const double>(s.cos));
    s.mean_cos = ms.mean.value_or(0.0);
    s.std_cos = ms.std.value_or(0.0);
    for (double c : s.cos) s.mean_abs_cos += std::abs(c);
    if (s.count) s.mean_abs_cos /= static_cast<double>(s.count);
    return s;
}

GradStats grad_stats(const Model& m1, const Model& m2, const Dataset& data, std::size_t batch_size) {
    const BatchPlan plan = BatchPlan::sequential(data.size(), batch_size);
    std::vector<double> v1, v2;
    for (std::size_t b = 0; b < plan.batch_count(); ++b) {
        const auto idx = plan.batch(b);
        const ag::Tensor x = data.images_at(idx);
        const auto y = data.labels_at(idx);
        const ag::Tensor g1 = input_gradient(m1, x, y).tensor;
        const ag::Tensor g2 = input_gradient(m2, x, y).tensor;
        v1.insert(v1.end(), g1.values().begin(), g1.values().end());
        v2.insert(v2.end(), g2.values().begin(), g2.values().end());
    }
    const ag::Shape shape{data.size(), data.sample_numel()};
    return gradient_stats(ag::Tensor(shape, std::move(v1)), ag::Tensor(shape, std::move(v2)), data.split);
}

QuadraticFit fit_quadratic(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("fit_quadratic: x and y lengths differ");
    if (std::set<double>(x.begin(), x.end()).size() < 3)
        throw std::invalid_argument("fit_quadratic: need at least 3 distinct x values");
    const auto n = static_cast<Eigen::Index>(x.size());
    Eigen::MatrixXd A(n, 3);
    Eigen::VectorXd Y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const double xi = x[static_cast<std::size_t>(i)];
        A(i, 0) = xi * xi;
        A(i, 1) = xi;
        A(i, 2) = 1.0;
        Y(i) = y[static_cast<std::size_t>(i)];
    }
    const Eigen::Vector3d coef = A.colPivHouseholderQr().solve(Y);
    QuadraticFit f;
    f.a = coef(0);
    f.b = coef(1);
    f.c = coef(2);
    f.n = x.size();
    const double mean = Y.mean();
    const double ss_res = (A * coef - Y).squaredNorm();
    const double ss_tot = (Y.array() - mean).square().sum();
    f.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 1.0;
    const double dof = static_cast<double>(f.n) - 3.0;
    f.adjusted_r_squared = dof > 0.0 ? 1.0 - (1.0 - f.r_squared) * (static_cast<double>(f.n) - 1.0) / dof
                                     : f.r_squared;
    return f;
}

AsymmetryResult asymmetry_experiment(const std::vector<std::pair<double, double>>& magnitude_pairs,
                                     const ModelProvider& models, const AttackSpec& attack, const Dataset& data,
                                     std::size_t replicates) {
    const ag::Tensor x = data.all_images();
    std::map<std::pair<double, std::size_t>, AdversarialBatch> cache;
    auto attacked = [&](double m, std::size_t r) -> const AdversarialBatch& {
        auto it = cache.find({m, r});
        if (it == cache.end()) it = cache.emplace(std::pair{m, r}, run_attack(models(m, r), x, data.labels, attack)).first;
        return it->second;
    };

    AsymmetryResult out;
    std::vector<double> fx, fy;
    for (const auto& [m1, m2] : magnitude_pairs) {
        AsymmetryRow row;
        row.m1 = m1;
        row.m2 = m2;
        for (std::size_t r = 0; r < replicates; ++r) {
            const AdversarialBatch& a1 = attacked(m1, r);
            const AdversarialBatch& a2 = attacked(m2, r);
            row.success1.push_back(a1.success_rate());
            row.success2.push_back(a2.success_rate());
            row.transfer_12.push_back(transferability(a1, models(m2, r)).rate);
            row.transfer_21.push_back(transferability(a2, models(m1, r)).rate);
            if (m1 != m2 && row.transfer_21.back()) {
                fx.push_back(m2);
                fy.push_back(*row.transfer_21.back());
            }
        }
        out.rows.push_back(std::move(row));
    }
    try {
        out.fit = fit_quadratic(fx, fy);
    } catch (const std::invalid_argument& e) {
        out.fit_error = e.what();
    }
    return out;
}

TaylorResult taylor_check(const Model& model, const ag::Tensor& x, std::span<const int> gt,
                          const ag::Tensor& direction, double epsilon) {
    if (direction.shape() != x.shape()) throw ag::ShapeError("taylor_check: direction must match x");
    for (double v : direction.values())
        if (!std::isfinite(v)) throw std::invalid_argument("taylor_check: direction must be finite");
    const InputGradient g = input_gradient(model, x, gt);
    const std::size_t n = gt.size();
    const std::size_t width = x.numel() / n;
    std::vector<double> moved(x.values().begin(), x.values().end());
    for (std::size_t j = 0; j < moved.size(); ++j) moved[j] += epsilon * direction[j];
    const auto before = gt_probability(model, x, gt);
    const auto after = gt_probability(model, ag::Tensor(x.shape(), std::move(moved)), gt);
    TaylorResult r;
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::size_t j = i * width; j < (i + 1) * width; ++j) dot += direction[j] * g.tensor[j];
        r.predicted.push_back(epsilon * dot);
        r.actual.push_back(after[i] - before[i]);
    }
    return r;
}

Detection detect(const Model& m1, const Model& m2, const ag::Tensor& x, const DetectorConfig& cfg) {
    if (!(cfg.threshold >= 0.0)) throw std::invalid_argument("detector threshold must be >= 0");
    const ag::Tensor p1 = m1.predict_proba(x);
    const ag::Tensor p2 = m2.predict_proba(x);
    const std::size_t n = p1.dim(0), c = p1.dim(1);
    Detection d;
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t k = 0; k < c; ++k) s = std::max(s, std::abs(p1[i * c + k] - p2[i * c + k]));
        d.score.push_back(s);
        d.flag.push_back(s > cfg.threshold);
    }
    return d;
}

namespace {

double rate_above(std::span<const double> scores, double threshold) {
    if (scores.empty()) return 0.0;
    const auto hits = std::count_if(scores.begin(), scores.end(), [&](double s) { return s > threshold; });
    return static_cast<double>(hits) / static_cast<double>(scores.size());
}

}  // namespace

std::vector<RocPoint> roc_curve(std::span<const double> clean, std::span<const double> adversarial) {
    std::set<double> thresholds(clean.begin(), clean.end());
    thresholds.insert(adversarial.begin(), adversarial.end());
    std::vector<RocPoint> out;
    // Starting below every score flags everything; each listed threshold then drops its ties.
    const double start = thresholds.empty() ? 0.0 : std::min(0.0, *thresholds.begin()) - 1.0;
    out.push_back({start, rate_above(clean, start), rate_above(adversarial, start)});
    for (double t : thresholds) out.push_back({t, rate_above(clean, t), rate_above(adversarial, t)});
    return out;
}

RocPoint tpr_at_fpr(std::span<const double> clean, std::span<const double> adversarial, double max_fpr) {
    RocPoint best{0.0, 0.0, 0.0};
    bool found = false;
    for (const RocPoint& p : roc_curve(clean, adversarial))
        if (p.fpr <= max_fpr && (!found || p.tpr > best.tpr)) {
            best = p;
            found = true;
        }
    return best;
}

void TransferReport::write_csv(const std::filesystem::path& path) const {
    std::vector<std::vector<std::string>> out;
    for (const auto& r : rows) {
        const MeanStd s1 = mean_std(std::span<const double>(r.success1));
        const MeanStd s2 = mean_std(std::span<const double>(r.success2));
        const MeanStd t12 = mean_std(std::span<const std::optional<double>>(r.transfer_12));
        const MeanStd t21 = mean_std(std::span<const std::optional<double>>(r.transfer_21));
        const auto sum = [](const std::vector<std::size_t>& v) { return std::accumulate(v.begin(), v.end(), std::size_t{0}); };
        out.push_back({r.scenario, r.attack, format_optional(s1.mean), format_optional(s1.std), format_optional(s2.mean),
                       format_optional(s2.std), t12.mean ? format_double(*t12.mean) : "undefined",
                       format_optional(t12.std), t21.mean ? format_double(*t21.mean) : "undefined",
                       format_optional(t21.std), std::to_string(r.success1.size()), std::to_string(sum(r.eligible_12)),
                       std::to_string(sum(r.eligible_21))});
    }
    xfer::write_csv(path,
                    {"scenario", "attack", "M1", "M1_std", "M2", "M2_std", "M1_to_M2", "M1_to_M2_std", "M2_to_M1",
                     "M2_to_M1_std", "replicates", "eligible_M1_to_M2", "eligible_M2_to_M1"},
                    out);
}

std::string TransferReport::markdown() const {
    std::ostringstream md;
    md << "| Scenario | Attack | M1 | M2 | M1 to M2 | M2 to M1 |\n";
    md << "|---|---|---|---|---|---|\n";
    for (const auto& r : rows)
        md << "| " << r.scenario << " | " << r.attack << " | "
           << format_mean_std(mean_std(std::span<const double>(r.success1))) << " | "
           << format_mean_std(mean_std(std::span<const double>(r.success2))) << " | "
           << format_mean_std(mean_std(std::span<const std::optional<double>>(r.transfer_12))) << " | "
           << format_mean_std(mean_std(std::span<const std::optional<double>>(r.transfer_21))) << " |\n";
    return md.str();
}

}  // namespace xfer
