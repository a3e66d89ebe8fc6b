// Untargeted gradient attacks on the ground-truth probability f_gt.
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "xfer/nn.hpp"

namespace xfer {

enum class AttackKind { fgs, igs, cw };

std::string to_string(AttackKind kind);
AttackKind attack_kind_from_string(const std::string& s);

struct CwParams {
    double confidence = 0.0;        // kappa, on the log-probability scale
    std::size_t search_steps = 6;   // binary-search rounds over c
    std::size_t iterations = 200;   // Adam steps per round
    double learning_rate = 1e-2;
    double c_init = 1e-2;
};

struct AttackSpec {
    AttackKind kind = AttackKind::fgs;
    double epsilon = 0.3;        // l_inf budget for fgs/igs
    std::size_t iterations = 1;  // igs steps T
    CwParams cw;
    double clamp_lo = 0.0;
    double clamp_hi = 1.0;

    /// Throws std::invalid_argument naming the offending field.
    void validate() const;
    /// Short identifier such as "IGS-1" or "CW-40".
    std::string label() const;
};

struct AdversarialBatch {
    ag::Tensor originals;
    ag::Tensor perturbed;
    std::vector<int> labels;
    std::vector<int> original_pred;
    std::vector<int> perturbed_pred;
    /// Originally correct and now predicted as a different class.
    std::vector<std::uint8_t> adversarial;
    std::vector<double> l2;
    std::vector<double> linf;

    std::size_t size() const { return labels.size(); }
    std::size_t correct_count() const;
    std::size_t adversarial_count() const;
    /// Adversarial fraction of the originally correct samples; 0 when none are correct.
    double success_rate() const;
};

AdversarialBatch fgs(const Model& model, const ag::Tensor& x, std::span<const int> gt, double epsilon,
                     double lo = 0.0, double hi = 1.0);

/// T signed steps of epsilon/T, gradient recomputed at each iterate.
AdversarialBatch igs(const Model& model, const ag::Tensor& x, std::span<const int> gt, double epsilon,
                     std::size_t iterations, double lo = 0.0, double hi = 1.0);

/// l2 attack in tanh space with a per-sample binary search over c.
AdversarialBatch cw(const Model& model, const ag::Tensor& x, std::span<const int> gt, const CwParams& params,
                    double lo = 0.0, double hi = 1.0);

/// Dispatch on spec.kind.
AdversarialBatch run_attack(const Model& model, const ag::Tensor& x, std::span<const int> gt,
                            const AttackSpec& spec);

/// One unsigned step x - eps * (r * grad_a + (1 - r) * grad_b), clamped.
AdversarialBatch average_direction_attack(const Model& a, const Model& b, const ag::Tensor& x,
                                          std::span<const int> gt, double epsilon, double r,
                                          double lo = 0.0, double hi = 1.0);

/// Per-sample log-probability margin log p_gt - max_{j != gt} log p_j.
std::vector<double> log_margin(const Model& model, const ag::Tensor& x, std::span<const int> gt);

/// Fills predictions, flags and norms from originals/perturbed.
AdversarialBatch finalize_batch(const Model& model, ag::Tensor originals, ag::Tensor perturbed,
                                std::span<const int> gt);

/// sample_id,label,orig_pred,adv_pred,l2,linf,success
void write_attack_csv(const AdversarialBatch& batch, const std::filesystem::path& path);

}  // namespace xfer
