// Joint training of a model pair with a gradient-relationship penalty, plus
// single-model training with an input-gradient magnitude target.
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "xfer/data.hpp"
#include "xfer/nn.hpp"
#include "xfer/optim.hpp"

namespace xfer {

enum class Goal { none, parallel, perpendicular, antiparallel };
enum class UpdateMode { alternating, simultaneous };

std::string to_string(Goal goal);
Goal goal_from_string(const std::string& s);
std::string to_string(UpdateMode mode);
UpdateMode update_mode_from_string(const std::string& s);

/// Gradient norms at or below this are treated as zero and left out of the cosine term.
inline constexpr double kMinGradNorm = 1e-30;

struct PairTrainConfig {
    Goal goal = Goal::none;
    UpdateMode update_mode = UpdateMode::alternating;
    double lambda_cos = 1.0;
    /// Target l2 norms (m1, m2) of each model's input gradient.
    std::optional<std::pair<double, double>> magnitude_targets;
    double lambda_mag = 1.0;
    AdamConfig adam;
    /// Alternating mode: the penalty step keeps its own Adam moments. With shared
    /// moments the cosine gradient, which grows like 1/|grad| for small input
    /// gradients, can swamp the second moment and stall the classification step.
    bool separate_penalty_optimizer = false;
    std::size_t batch_size = 100;
    std::size_t epochs = 1;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
};

/// Statistics for one epoch. Per-model vectors have one entry per trained model.
struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    std::vector<double> class_loss;
    std::vector<double> mag_loss;
    std::vector<double> train_accuracy;
    std::vector<double> grad_norm_mean;
    double cos_loss = 0.0;
    double cos_mean = 0.0;
    double cos_std = 0.0;
    std::size_t zero_grad_skipped = 0;
    std::size_t clamped = 0;
    std::size_t optimizer_steps = 0;
};

struct PairTrainRecord {
    std::size_t models = 2;
    std::vector<EpochRecord> epochs;

    void write_csv(const std::filesystem::path& path) const;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Elementwise: perpendicular -> c^2, parallel -> -c, antiparallel -> c.
ag::Tensor goal_transform(const ag::Tensor& cos, Goal goal);

struct PairResult {
    Model m1;
    Model m2;
    PairTrainRecord record;
};

PairResult train_pair(Model m1, Model m2, const Dataset& data, const PairTrainConfig& cfg,
                      const EpochCallback& on_epoch = {});

struct SingleResult {
    Model model;
    PairTrainRecord record;
};

/// Cross-entropy training, optionally with lambda_mag * mean((|grad| - m)^2).
SingleResult train_single(Model m, const Dataset& data, const PairTrainConfig& cfg,
                          std::optional<double> magnitude_target = std::nullopt,
                          const EpochCallback& on_epoch = {});

/// As train_single with a required positive target.
SingleResult train_single_magnitude(Model m, const Dataset& data, double magnitude_target,
                                    const PairTrainConfig& cfg, const EpochCallback& on_epoch = {});

/// Only m2 is updated; the frozen model's input gradient is a constant.
SingleResult train_second_against_frozen(const Model& frozen, Model m2, const Dataset& data,
                                         const PairTrainConfig& cfg, const EpochCallback& on_epoch = {});

}  // namespace xfer
