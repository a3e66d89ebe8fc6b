#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "support/fixtures.hpp"
#include "xfer/eval.hpp"

using namespace xfer;
namespace xt = xfer::testing;

namespace {

// Least-squares quadratic via 3x3 normal equations and Cramer's rule.
struct OracleFit {
    double a, b, c, r2;
};

OracleFit oracle_quadratic(const std::vector<double>& x, const std::vector<double>& y) {
    double s[5] = {0, 0, 0, 0, 0}, t[3] = {0, 0, 0};
    for (std::size_t i = 0; i < x.size(); ++i) {
        double p = 1.0;
        for (int k = 0; k < 5; ++k, p *= x[i]) s[k] += p;
        t[0] += y[i];
        t[1] += x[i] * y[i];
        t[2] += x[i] * x[i] * y[i];
    }
    // Unknowns ordered (c, b, a).
    const double m[3][3] = {{s[0], s[1], s[2]}, {s[1], s[2], s[3]}, {s[2], s[3], s[4]}};
    const auto det = [](const double q[3][3]) {
        return q[0][0] * (q[1][1] * q[2][2] - q[1][2] * q[2][1]) - q[0][1] * (q[1][0] * q[2][2] - q[1][2] * q[2][0]) +
               q[0][2] * (q[1][0] * q[2][1] - q[1][1] * q[2][0]);
    };
    const double d = det(m);
    double sol[3];
    for (int col = 0; col < 3; ++col) {
        double q[3][3];
        for (int r = 0; r < 3; ++r)
            for (int k = 0; k < 3; ++k) q[r][k] = k == col ? t[r] : m[r][k];
        sol[col] = det(q) / d;
    }
    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = sol[0] + sol[1] * x[i] + sol[2] * x[i] * x[i];
        ss_res += (y[i] - f) * (y[i] - f);
        ss_tot += (y[i] - mean) * (y[i] - mean);
    }
    return {sol[2], sol[1], sol[0], 1.0 - ss_res / ss_tot};
}

}  // namespace

TEST(Transfer, ModelTransfersToItself) {
    const Model& m = xt::trained_blob_mlp();
    const Dataset& ds = xt::blob_test();
    const AdversarialBatch adv = fgs(m, ds.all_images(), ds.labels, 0.3);
    ASSERT_GT(adv.adversarial_count(), 0u);
    const TransferResult t = transferability(adv, m);
    ASSERT_TRUE(t.rate);
    EXPECT_DOUBLE_EQ(*t.rate, 1.0);
    EXPECT_EQ(t.eligible, adv.adversarial_count());
}

TEST(Transfer, NoEligibleSamplesIsUndefined) {
    const Model& m = xt::trained_blob_mlp();
    const Dataset& ds = xt::blob_test();
    const AdversarialBatch adv = fgs(m, ds.all_images(), ds.labels, 1e-9);
    ASSERT_EQ(adv.adversarial_count(), 0u);
    const TransferResult t = transferability(adv, m);
    EXPECT_FALSE(t.rate);
    EXPECT_EQ(t.eligible, 0u);
}

TEST(Transfer, DenominatorRequiresTargetCorrect) {
    const Model& m = xt::trained_blob_mlp();
    const Dataset& ds = xt::blob_test();
    const AdversarialBatch adv = fgs(m, ds.all_images(), ds.labels, 0.3);
    // A constant model is correct only on class 0 samples.
    const Model zero = Model::zeros(m.spec());
    const TransferResult t = transferability(adv, zero);
    std::size_t expected = 0;
    for (std::size_t i = 0; i < adv.size(); ++i) expected += adv.adversarial[i] && ds.labels[i] == 0;
    EXPECT_EQ(t.eligible, expected);
    EXPECT_EQ(t.transferred, 0u);
}

TEST(MeanStd, SampleStdAndUndefinedEntries) {
    const std::vector<std::optional<double>> v{1.0, std::nullopt, 3.0};
    const MeanStd m = mean_std(v);
    EXPECT_EQ(m.n, 2u);
    EXPECT_DOUBLE_EQ(*m.mean, 2.0);
    EXPECT_DOUBLE_EQ(*m.std, std::sqrt(2.0));
    EXPECT_EQ(format_mean_std(m), "2.000 ± 1.414");
    EXPECT_EQ(format_mean_std(mean_std(std::vector<std::optional<double>>{std::nullopt})), "undefined");
}

TEST(GradStats, IdenticalModelsAreParallel) {
    const Model& m = xt::trained_blob_mlp();
    const GradStats s = grad_stats(m, m, xt::blob_test());
    EXPECT_NEAR(s.mean_cos, 1.0, 1e-12);
    EXPECT_NEAR(s.mean_norm_diff, 0.0, 1e-15);
    EXPECT_EQ(s.count + s.skipped, xt::blob_test().size());
}

TEST(GradStats, Symmetric) {
    const Model& a = xt::trained_blob_mlp();
    const Model b = Model::initialize(a.spec(), 77);
    const GradStats ab = grad_stats(a, b, xt::blob_test());
    const GradStats ba = grad_stats(b, a, xt::blob_test());
    EXPECT_DOUBLE_EQ(ab.mean_cos, ba.mean_cos);
    EXPECT_DOUBLE_EQ(ab.mean_norm_diff, ba.mean_norm_diff);
    EXPECT_DOUBLE_EQ(ab.mean_norm1, ba.mean_norm2);
}

TEST(GradStats, SeparableFunctionsAreOrthogonal) {
    // f1 = sin(x0), f2 = sin(x1): gradients (cos x0, 0) and (0, cos x1).
    const std::vector<double> pts{0.1, 0.7, 0.3, 0.2, 0.9, 0.5};
    std::vector<double> g1, g2;
    for (std::size_t i = 0; i < pts.size(); i += 2) {
        g1.insert(g1.end(), {std::cos(pts[i]), 0.0});
        g2.insert(g2.end(), {0.0, std::cos(pts[i + 1])});
    }
    const GradStats s = gradient_stats(ag::Tensor({3, 2}, g1), ag::Tensor({3, 2}, g2), "toy");
    EXPECT_EQ(s.mean_cos, 0.0);
    EXPECT_EQ(s.count, 3u);
}

TEST(GradStats, ZeroRowsAreSkipped) {
    const GradStats s = gradient_stats(ag::Tensor({2, 2}, {0, 0, 1, 1}), ag::Tensor({2, 2}, {1, 0, 1, 1}), "toy");
    EXPECT_EQ(s.count, 1u);
    EXPECT_EQ(s.skipped, 1u);
    EXPECT_NEAR(s.mean_cos, 1.0, 1e-15);
}

TEST(QuadraticFit, MatchesNormalEquations) {
    const std::vector<double> x{0.5, 1.0, 3.0, 5.0, 7.0};
    const std::vector<double> y{0.823, 0.560, 0.278, 0.176, 0.143};
    const QuadraticFit f = fit_quadratic(x, y);
    const OracleFit o = oracle_quadratic(x, y);
    EXPECT_NEAR(f.a, o.a, 1e-10);
    EXPECT_NEAR(f.b, o.b, 1e-10);
    EXPECT_NEAR(f.c, o.c, 1e-10);
    EXPECT_NEAR(f.r_squared, o.r2, 1e-10);
    EXPECT_NEAR(f.adjusted_r_squared, 1.0 - (1.0 - o.r2) * 4.0 / 2.0, 1e-10);
    EXPECT_EQ(f.n, 5u);
}

TEST(QuadraticFit, ExactParabolaAndDegenerateInput) {
    const std::vector<double> x{-1, 0, 1, 2, 2};
    std::vector<double> y;
    for (double v : x) y.push_back(2 * v * v - v + 0.5);
    const QuadraticFit f = fit_quadratic(x, y);
    EXPECT_NEAR(f.a, 2.0, 1e-12);
    EXPECT_NEAR(f.b, -1.0, 1e-12);
    EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
    const std::vector<double> two{1, 1, 2, 2}, ys{1, 2, 3, 4};
    EXPECT_THROW(fit_quadratic(two, ys), std::invalid_argument);
}

TEST(Taylor, OrthogonalDirectionPredictsZero) {
    const Model& m = xt::trained_blob_mlp();
    const Dataset& ds = xt::blob_test();
    const ag::Tensor x = ds.all_images();
    const ag::Tensor g = input_gradient(m, x, ds.labels).tensor;
    // Swap two coordinates with a sign flip: (g0, g1) -> (-g1, g0) is orthogonal per row.
    std::vector<double> d(x.numel(), 0.0);
    const std::size_t w = ds.sample_numel();
    for (std::size_t i = 0; i < ds.size(); ++i) {
        d[i * w] = -g[i * w + 1];
        d[i * w + 1] = g[i * w];
    }
    const TaylorResult t = taylor_check(m, x, ds.labels, ag::Tensor(x.shape(), d), 1e-3);
    for (double p : t.predicted) EXPECT_NEAR(p, 0.0, 1e-18);
}

TEST(Taylor, DescentDirectionAndSecondOrderError) {
    const Model& m = xt::trained_blob_mlp();
    const Dataset& ds = xt::blob_test();
    const ag::Tensor x = ds.all_images();
    const InputGradient g = input_gradient(m, x, ds.labels);
    std::vector<double> d(g.tensor.values().begin(), g.tensor.values().end());
    for (double& v : d) v = -v;
    const ag::Tensor dir(x.shape(), d);
    const double eps = 1e-2;
    const TaylorResult t1 = taylor_check(m, x, ds.labels, dir, eps);
    const TaylorResult t2 = taylor_check(m, x, ds.labels, dir, eps / 2);
    double e1 = 0.0, e2 = 0.0;
    for (std::size_t i = 0; i < ds.size(); ++i) {
        EXPECT_NEAR(t1.predicted[i], -eps * g.l2_norm[i] * g.l2_norm[i], 1e-15);
        e1 += std::abs(t1.actual[i] - t1.predicted[i]);
        e2 += std::abs(t2.actual[i] - t2.predicted[i]);
    }
    EXPECT_NEAR(e1 / e2, 4.0, 2.0);
}

TEST(Detector, IdenticalModelsNeverFlag) {
    const Model& m = xt::trained_blob_mlp();
    const Detection d = detect(m, m, xt::blob_test().all_images(), DetectorConfig{0.0});
    for (std::size_t i = 0; i < d.score.size(); ++i) {
        EXPECT_EQ(d.score[i], 0.0);
        EXPECT_EQ(d.flag[i], 0);
    }
}

TEST(Detector, ZeroThresholdFlagsAnyDisagreement) {
    const Model& a = xt::trained_blob_mlp();
    const Model b = Model::zeros(a.spec());
    const ag::Tensor x = xt::blob_test().all_images();
    const Detection d = detect(a, b, x, DetectorConfig{0.0});
    const ag::Tensor pa = a.predict_proba(x);
    for (std::size_t i = 0; i < d.score.size(); ++i) {
        double expect = 0.0;
        for (std::size_t c = 0; c < 3; ++c) expect = std::max(expect, std::abs(pa[i * 3 + c] - 1.0 / 3.0));
        EXPECT_NEAR(d.score[i], expect, 1e-15);
        EXPECT_EQ(d.flag[i], d.score[i] > 0.0);
    }
}

TEST(Roc, TprAtFixedFpr) {
    const std::vector<double> clean{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0,
                                    0.05, 0.15, 0.25, 0.35, 0.45, 0.55, 0.65, 0.75, 0.85, 0.95};
    const std::vector<double> adv{0.92, 0.97, 1.5, 0.5, 2.0};
    // Threshold 0.95 leaves one clean score above it: FPR 1/20.
    const RocPoint p = tpr_at_fpr(clean, adv, 0.05);
    EXPECT_LE(p.fpr, 0.05);
    EXPECT_DOUBLE_EQ(p.tpr, 3.0 / 5.0);
    const auto curve = roc_curve(clean, adv);
    for (std::size_t i = 1; i < curve.size(); ++i) {
        EXPECT_LE(curve[i].fpr, curve[i - 1].fpr);
        EXPECT_LE(curve[i].tpr, curve[i - 1].tpr);
    }
    EXPECT_DOUBLE_EQ(curve.back().fpr, 0.0);
    EXPECT_DOUBLE_EQ(curve.back().tpr, 0.0);
}

TEST(Report, CsvAndMarkdown) {
    TransferReport rep;
    rep.rows.push_back({"perpendicular", "FGS-0.3", {1.0, 0.5}, {0.7, 0.9}, {0.5, std::nullopt}, {0.2, 0.4}, {10, 0}, {9, 8}});
    const auto path = std::filesystem::temp_directory_path() / "xfer_eval_test" / "report.csv";
    rep.write_csv(path);
    std::ifstream in(path);
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    EXPECT_EQ(header.rfind("scenario,attack,M1,M1_std,M2,M2_std,M1_to_M2,M1_to_M2_std", 0), 0u);
    EXPECT_EQ(row.rfind("perpendicular,FGS-0.3,0.75,", 0), 0u);
    const std::string md = rep.markdown();
    EXPECT_NE(md.find("| Scenario | Attack | M1 | M2 | M1 to M2 | M2 to M1 |"), std::string::npos);
    EXPECT_NE(md.find("0.500"), std::string::npos);
    EXPECT_NE(md.find("0.300 ± 0.141"), std::string::npos);
}
