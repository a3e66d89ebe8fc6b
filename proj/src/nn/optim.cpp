#include "xfer/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace xfer {

Adam::Adam(const Model& model, AdamConfig cfg) : cfg_(cfg) {
    if (!(cfg.lr > 0.0) || !(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0))
        throw std::invalid_argument("adam: lr must be positive and betas in [0,1)");
    for (const auto& p : model.parameters()) {
        m_.emplace_back(p.value.numel(), 0.0);
        v_.emplace_back(p.value.numel(), 0.0);
    }
}

void Adam::step(Model& model, std::span<const ag::Tensor> grads) {
    if (grads.size() != m_.size()) throw std::invalid_argument("adam: gradient count does not match parameters");
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < grads.size(); ++i) {
        const ag::Tensor& p = model.parameters()[i].value;
        if (grads[i].shape() != p.shape()) throw ag::ShapeError("adam: gradient shape mismatch for " + model.parameters()[i].name);
        std::vector<double> next(p.values().begin(), p.values().end());
        const auto g = grads[i].values();
        auto& m = m_[i];
        auto& v = v_[i];
        for (std::size_t j = 0; j < next.size(); ++j) {
            m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g[j];
            v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g[j] * g[j];
            next[j] -= cfg_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + cfg_.eps);
        }
        model.set_parameter(i, ag::Tensor(p.shape(), std::move(next)));
    }
}

}  // namespace xfer
