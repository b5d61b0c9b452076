#pragma once

// Mini-batch optimizers: heavy-ball momentum SGD and Adam.

#include "bladenet/nn/layers.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace bladenet::nn {

struct OptimizerSpec {
    std::string kind = "momentum";  // "momentum" | "adam"
    double learning_rate = 0.01;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const {
        if (kind != "momentum" && kind != "adam") throw InputError("optimizer must be 'momentum' or 'adam', got '" + kind + "'");
        if (!(learning_rate > 0.0)) throw InputError("learning_rate must be > 0");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw InputError("momentum must be in [0, 1)");
        if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw InputError("adam betas must be in [0, 1)");
    }
};

template <typename T>
class Optimizer {
public:
    explicit Optimizer(OptimizerSpec spec = {}) : spec_(std::move(spec)) { spec_.validate(); }

    const OptimizerSpec& spec() const noexcept { return spec_; }

    void step(std::vector<Param<T>> params) {
        if (m_.empty()) {
            for (auto& p : params) {
                m_.emplace_back(p.value->shape());
                v_.emplace_back(p.value->shape());
            }
        }
        if (m_.size() != params.size()) throw InputError("optimizer: parameter list changed between steps");
        ++t_;
        const T lr = static_cast<T>(spec_.learning_rate);
        for (std::size_t k = 0; k < params.size(); ++k) {
            auto& w = *params[k].value;
            const auto& g = *params[k].grad;
            if (g.shape() != w.shape() || m_[k].shape() != w.shape()) throw InputError("optimizer: shape mismatch for " + params[k].name);
            if (spec_.kind == "momentum") {
                const T mu = static_cast<T>(spec_.momentum);
                for (std::size_t i = 0; i < w.size(); ++i) {
                    m_[k][i] = mu * m_[k][i] - lr * g[i];
                    w[i] += m_[k][i];
                }
            } else {
                const T b1 = static_cast<T>(spec_.beta1), b2 = static_cast<T>(spec_.beta2), eps = static_cast<T>(spec_.epsilon);
                const T c1 = T(1) - static_cast<T>(std::pow(spec_.beta1, static_cast<double>(t_)));
                const T c2 = T(1) - static_cast<T>(std::pow(spec_.beta2, static_cast<double>(t_)));
                for (std::size_t i = 0; i < w.size(); ++i) {
                    m_[k][i] = b1 * m_[k][i] + (T(1) - b1) * g[i];
                    v_[k][i] = b2 * v_[k][i] + (T(1) - b2) * g[i] * g[i];
                    w[i] -= lr * (m_[k][i] / c1) / (std::sqrt(v_[k][i] / c2) + eps);
                }
            }
            if (!w.all_finite()) throw NonFiniteError("non-finite update for parameter " + params[k].name);
        }
    }

private:
    OptimizerSpec spec_;
    std::vector<Tensor<T>> m_, v_;
    long t_ = 0;
};

}  // namespace bladenet::nn
