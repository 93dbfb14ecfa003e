#pragma once

#include <cstdint>
#include <vector>

#include "tapnet/tensor.hpp"

namespace tapnet {

/// Step decay: alpha = initial * factor^floor(step / decay_every).
struct LrSchedule {
    double initial = 1e-3;
    std::uint64_t decay_every = 40000;
    double factor = 0.5;

    double at(std::uint64_t step) const;
};

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction over a fixed parameter list. Moment buffers are
/// created on attach and stay aligned with the parameter order.
class AdamOptimizer {
public:
    AdamOptimizer(std::vector<Tensor*> params, AdamConfig config = {});

    /// One update using each parameter's accumulated gradient. Throws
    /// NumericError on a non-finite gradient.
    void step(double lr);

    std::uint64_t step_count() const { return t_; }
    const AdamConfig& config() const { return config_; }
    const std::vector<Tensor>& first_moments() const { return m_; }
    const std::vector<Tensor>& second_moments() const { return v_; }

    /// Restore serialized state (checkpoint load).
    void restore(std::uint64_t t, std::vector<Tensor> m, std::vector<Tensor> v);

private:
    std::vector<Tensor*> params_;
    AdamConfig config_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    std::uint64_t t_ = 0;
};

} // namespace tapnet
