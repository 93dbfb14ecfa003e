#include "tapnet/adam.hpp"

#include <cmath>
#include <string>

#include "tapnet/errors.hpp"

namespace tapnet {

double LrSchedule::at(std::uint64_t step) const {
    if (decay_every < 1) throw ConfigError("lr schedule: decay_every must be at least 1");
    if (!(factor > 0.0) || factor > 1.0)
        throw ConfigError("lr schedule: factor must be in (0, 1]");
    if (!(initial > 0.0)) throw ConfigError("lr schedule: initial rate must be positive");
    return initial * std::pow(factor, static_cast<double>(step / decay_every));
}

AdamOptimizer::AdamOptimizer(std::vector<Tensor*> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (Tensor* p : params_) {
        if (!p->has_grad()) throw StateError("adam: parameter has no gradient slot");
        m_.emplace_back(p->shape());
        v_.emplace_back(p->shape());
    }
}

void AdamOptimizer::step(double lr) {
    if (!(lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
    ++t_;
    const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Tensor& p = *params_[i];
        const auto& g = p.grad();
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::size_t j = 0; j < p.size(); ++j) {
            if (!std::isfinite(g[j]))
                throw NumericError("adam: non-finite gradient in parameter " + std::to_string(i));
            m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g[j];
            v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g[j] * g[j];
            const double m_hat = m[j] / bc1;
            const double v_hat = v[j] / bc2;
            p[j] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
        }
    }
}

void AdamOptimizer::restore(std::uint64_t t, std::vector<Tensor> m, std::vector<Tensor> v) {
    if (m.size() != params_.size() || v.size() != params_.size())
        throw DataError("adam restore: moment count does not match parameter count");
    for (std::size_t i = 0; i < params_.size(); ++i)
        if (!m[i].same_shape(*params_[i]) || !v[i].same_shape(*params_[i]))
            throw DataError("adam restore: moment shape mismatch at parameter " +
                            std::to_string(i));
    t_ = t;
    m_ = std::move(m);
    v_ = std::move(v);
}

} // namespace tapnet
