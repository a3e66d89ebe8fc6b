// Adam over the parameter list of a Model.
#pragma once

#include <span>
#include <vector>

#include "xfer/nn.hpp"

namespace xfer {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam(const Model& model, AdamConfig cfg = {});

    /// One bias-corrected update; grads are in parameter order.
    void step(Model& model, std::span<const ag::Tensor> grads);

    std::size_t steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace xfer
