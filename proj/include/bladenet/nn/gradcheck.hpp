#pragma once

// Central finite-difference checks of backprop gradients (float64).

#include "bladenet/nn/network.hpp"

#include <functional>
#include <string>

namespace bladenet::nn {

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst;  // name of the tensor holding the worst entry
    std::size_t checked = 0;

    void merge(const GradCheckResult& o) {
        if (o.max_rel_error > max_rel_error) {
            max_rel_error = o.max_rel_error;
            worst = o.worst;
        }
        checked += o.checked;
    }
};

// |a - n| / max(|a|, |n|, floor)
inline double relative_error(double analytic, double numeric, double floor = 1e-6) noexcept {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

// Perturbs every entry of `values` by +-step and compares the centered
// difference of loss() to `analytic`.
inline GradCheckResult check_values(Tensor<double>& values, const Tensor<double>& analytic, const std::function<double()>& loss,
                                    const std::string& name, double step = 1e-5) {
    if (values.shape() != analytic.shape()) throw InputError("gradcheck: gradient shape mismatch for " + name);
    GradCheckResult r;
    r.worst = name;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double keep = values[i];
        values[i] = keep + step;
        const double up = loss();
        values[i] = keep - step;
        const double down = loss();
        values[i] = keep;
        r.max_rel_error = std::max(r.max_rel_error, relative_error(analytic[i], (up - down) / (2.0 * step)));
        ++r.checked;
    }
    return r;
}

// Loss = sum(weights * layer(x)). Checks the input gradient and every parameter.
inline GradCheckResult gradcheck_layer(Layer<double>& layer, Tensor<double> x, const Tensor<double>& weights, Mode mode,
                                       double step = 1e-5, const std::function<void()>& before_forward = {}) {
    auto loss = [&] {
        if (before_forward) before_forward();
        Tensor<double> out;
        layer.forward(x, out, mode);
        if (out.size() != weights.size()) throw InputError("gradcheck: weight tensor does not match layer output");
        double s = 0.0;
        for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * weights[i];
        return s;
    };
    for (auto& p : layer.params()) p.grad->fill(0.0);
    if (before_forward) before_forward();
    Tensor<double> out, din;
    layer.forward(x, out, mode);
    Tensor<double> dout(out.shape(), std::vector<double>(weights.values().begin(), weights.values().end()));
    layer.backward(x, out, dout, &din);

    GradCheckResult r = check_values(x, din, loss, layer.kind() + ".input", step);
    for (auto& p : layer.params()) {
        Tensor<double> g = *p.grad;
        r.merge(check_values(*p.value, g, loss, layer.kind() + "." + p.name, step));
    }
    return r;
}

// Mean softmax cross-entropy of a whole network in eval mode.
inline GradCheckResult gradcheck_network(Network<double>& net, Tensor<double> x, const std::vector<std::size_t>& labels, double step = 1e-5) {
    auto loss = [&] {
        const auto& p = net.forward(x, Mode::eval);
        const std::size_t K = p.sample_size();
        double s = 0.0;
        for (std::size_t i = 0; i < labels.size(); ++i) s += cross_entropy_loss(std::span<const double>(p.data() + i * K, K), labels[i]);
        return s / static_cast<double>(labels.size());
    };
    net.zero_grad();
    net.forward(x, Mode::eval);
    Tensor<double> din;
    net.backward_cross_entropy(labels, &din);
    GradCheckResult r = check_values(x, din, loss, "input", step);
    for (auto& p : net.params()) {
        Tensor<double> g = *p.grad;
        r.merge(check_values(*p.value, g, loss, p.name, step));
    }
    return r;
}

}  // namespace bladenet::nn
