#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "driftlab/nn/tensor.hpp"

namespace driftlab::nn {

enum class OptimizerKind { Sgd, Adam };

struct AdamOptions {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// First-order optimizer over a fixed list of parameters. Parameters must
/// carry gradients when step() is called; gradients are not cleared.
class Optimizer {
public:
    /// Plain SGD.
    static Optimizer sgd(std::vector<Tensor*> params, double lr);
    /// Adam with bias-corrected moments; moment buffers start at zero.
    static Optimizer adam(std::vector<Tensor*> params, AdamOptions options = {});

    void step();
    void zero_grad();

    [[nodiscard]] OptimizerKind kind() const noexcept { return kind_; }
    [[nodiscard]] double learning_rate() const noexcept { return options_.lr; }
    [[nodiscard]] std::uint64_t steps() const noexcept { return steps_; }
    [[nodiscard]] std::span<const Tensor> first_moments() const noexcept { return m_; }
    [[nodiscard]] std::span<const Tensor> second_moments() const noexcept { return v_; }

private:
    Optimizer(OptimizerKind kind, std::vector<Tensor*> params, AdamOptions options);

    OptimizerKind kind_;
    std::vector<Tensor*> params_;
    AdamOptions options_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::uint64_t steps_ = 0;
};

}  // namespace driftlab::nn
