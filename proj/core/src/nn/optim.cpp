#include "driftlab/nn/optim.hpp"

#include <cmath>
#include <string>

#include "driftlab/error.hpp"

namespace driftlab::nn {

Optimizer::Optimizer(OptimizerKind kind, std::vector<Tensor*> params, AdamOptions options)
    : kind_(kind), params_(std::move(params)), options_(options) {
    if (kind_ == OptimizerKind::Adam) {
        m_.reserve(params_.size());
        v_.reserve(params_.size());
        for (const Tensor* p : params_) {
            m_.emplace_back(p->shape());
            v_.emplace_back(p->shape());
        }
    }
}

Optimizer Optimizer::sgd(std::vector<Tensor*> params, double lr) {
    AdamOptions opts;
    opts.lr = lr;
    return Optimizer(OptimizerKind::Sgd, std::move(params), opts);
}

Optimizer Optimizer::adam(std::vector<Tensor*> params, AdamOptions options) {
    return Optimizer(OptimizerKind::Adam, std::move(params), options);
}

void Optimizer::step() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!params_[i]->has_grad()) {
            throw StateError("optimizer step: parameter " + std::to_string(i) + " has no gradient");
        }
        if (kind_ == OptimizerKind::Adam && m_[i].shape() != params_[i]->shape()) {
            throw ShapeError("optimizer step: moment buffer shape differs from parameter " + std::to_string(i));
        }
    }
    ++steps_;
    const double lr = options_.lr;
    if (kind_ == OptimizerKind::Sgd) {
        for (Tensor* p : params_) {
            auto w = p->data();
            const auto g = p->grad();
            for (std::size_t k = 0; k < w.size(); ++k) w[k] -= lr * g[k];
        }
        return;
    }
    const double b1 = options_.beta1, b2 = options_.beta2;
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto w = params_[i]->data();
        const auto g = params_[i]->grad();
        auto m = m_[i].data();
        auto v = v_[i].data();
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = b1 * m[k] + (1.0 - b1) * g[k];
            v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
            const double m_hat = m[k] / c1;
            const double v_hat = v[k] / c2;
            w[k] -= lr * m_hat / (std::sqrt(v_hat) + options_.eps);
        }
    }
}

void Optimizer::zero_grad() {
    for (Tensor* p : params_) p->zero_grad();
}

}  // namespace driftlab::nn
