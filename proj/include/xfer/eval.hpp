// Transfer rates, gradient statistics, quadratic fits, first-order Taylor
// checks and the agreement detector.
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xfer/attacks.hpp"
#include "xfer/data.hpp"
#include "xfer/nn.hpp"

namespace xfer {

struct TransferResult {
    std::optional<double> rate;  // nullopt when no sample is eligible
    std::size_t eligible = 0;    // adversarial for the source and clean-correct on the target
    std::size_t transferred = 0;
    std::vector<std::uint8_t> flags;
};

TransferResult transferability(const AdversarialBatch& source, const Model& target);

struct MeanStd {
    std::optional<double> mean;
    std::optional<double> std;  // sample std; nullopt below two values
    std::size_t n = 0;
};

/// Undefined entries are ignored.
MeanStd mean_std(std::span<const std::optional<double>> values);
MeanStd mean_std(std::span<const double> values);
/// "0.123 ± 0.045", "0.123" without a std, "undefined" without values.
std::string format_mean_std(const MeanStd& m, int digits = 3);

struct GradStats {
    std::string split;
    double mean_cos = 0.0;
    double std_cos = 0.0;
    double mean_abs_cos = 0.0;
    double mean_norm_diff = 0.0;  // mean | |g1| - |g2| |
    double mean_norm1 = 0.0;
    double mean_norm2 = 0.0;
    std::size_t count = 0;    // samples with both gradients nonzero
    std::size_t skipped = 0;  // samples with a zero gradient
    std::vector<double> cos;  // per counted sample
};

/// Statistics from per-sample flattened gradients [N, D].
GradStats gradient_stats(const ag::Tensor& g1, const ag::Tensor& g2, std::string split);
GradStats grad_stats(const Model& m1, const Model& m2, const Dataset& data, std::size_t batch_size = 500);

struct QuadraticFit {
    double a = 0.0, b = 0.0, c = 0.0;  // y = a x^2 + b x + c
    double r_squared = 0.0;
    double adjusted_r_squared = 0.0;
    std::size_t n = 0;

    double operator()(double x) const { return (a * x + b) * x + c; }
};

/// Least squares; throws std::invalid_argument with fewer than 3 distinct x values.
QuadraticFit fit_quadratic(std::span<const double> x, std::span<const double> y);

struct AsymmetryRow {
    double m1 = 0.0, m2 = 0.0;
    std::vector<double> success1, success2;
    std::vector<std::optional<double>> transfer_12, transfer_21;
};

struct AsymmetryResult {
    std::vector<AsymmetryRow> rows;
    /// transfer(M2 -> M1) against m2 over replicate-level points, pairs with m1 != m2.
    std::optional<QuadraticFit> fit;
    std::string fit_error;
};

using ModelProvider = std::function<const Model&(double magnitude, std::size_t replicate)>;

AsymmetryResult asymmetry_experiment(const std::vector<std::pair<double, double>>& magnitude_pairs,
                                     const ModelProvider& models, const AttackSpec& attack, const Dataset& data,
                                     std::size_t replicates);

struct TaylorResult {
    std::vector<double> predicted;  // eps * (direction . grad f_gt)
    std::vector<double> actual;     // f_gt(x + eps * direction) - f_gt(x)
};

/// direction has the shape of x; no clamping is applied.
TaylorResult taylor_check(const Model& model, const ag::Tensor& x, std::span<const int> gt,
                          const ag::Tensor& direction, double epsilon);

struct DetectorConfig {
    double threshold = 0.0;
};

struct Detection {
    std::vector<double> score;  // max over classes of |p1 - p2|
    std::vector<std::uint8_t> flag;
};

Detection detect(const Model& m1, const Model& m2, const ag::Tensor& x, const DetectorConfig& cfg);

struct RocPoint {
    double threshold = 0.0;
    double fpr = 0.0;
    double tpr = 0.0;
};

/// One point per distinct score plus the all-negative end; flag means score > threshold.
std::vector<RocPoint> roc_curve(std::span<const double> clean, std::span<const double> adversarial);
/// Highest TPR over thresholds whose clean FPR does not exceed max_fpr.
RocPoint tpr_at_fpr(std::span<const double> clean, std::span<const double> adversarial, double max_fpr);

/// One row per (scenario, attack), aggregated across replicate pairs.
struct TransferRow {
    std::string scenario;
    std::string attack;
    std::vector<double> success1, success2;
    std::vector<std::optional<double>> transfer_12, transfer_21;
    std::vector<std::size_t> eligible_12, eligible_21;
};

struct TransferReport {
    std::vector<TransferRow> rows;

    void write_csv(const std::filesystem::path& path) const;
    std::string markdown() const;
};

}  // namespace xfer
