#pragma once

// Sequential network, softmax cross-entropy and the BNNM model file.
//
// BNNM layout (little-endian): "BNNM", u16 version, u32 length + JSON
// descriptor {"meta": ..., "network": {"input": shape, "layers": [...]}},
// then for every layer in order its parameters followed by its buffers,
// each as u32 rank, rank x u32 dims, float32 values.

#include "bladenet/nn/layers.hpp"

#include <fstream>
#include <istream>
#include <memory>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace bladenet::nn {

inline constexpr double kProbabilityFloor = 1e-12;

template <typename T>
T cross_entropy_loss(std::span<const T> probs, std::size_t label) {
    if (label >= probs.size()) throw InputError("cross_entropy_loss: label " + std::to_string(label) + " >= " + std::to_string(probs.size()));
    return -std::log(std::max(probs[label], static_cast<T>(kProbabilityFloor)));
}

// Index of the largest value; ties resolve to the lowest index.
template <typename T>
std::size_t argmax(std::span<const T> v) {
    if (v.empty()) throw InputError("argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

template <typename T>
class Network {
public:
    explicit Network(Shape input_shape = {}) : input_shape_(std::move(input_shape)), out_shape_(input_shape_) {}

    Network(Network&&) noexcept = default;
    Network& operator=(Network&&) noexcept = default;

    Layer<T>& add(std::unique_ptr<Layer<T>> layer) {
        out_shape_ = layer->output_shape(out_shape_);
        layers_.push_back(std::move(layer));
        shapes_.push_back(out_shape_);
        return *layers_.back();
    }

    template <typename L, typename... Args>
    L& emplace(Args&&... args) {
        return static_cast<L&>(add(std::make_unique<L>(std::forward<Args>(args)...)));
    }

    const Shape& input_shape() const noexcept { return input_shape_; }
    const Shape& output_shape() const noexcept { return out_shape_; }
    // Per-sample output shape of layer i.
    const Shape& layer_shape(std::size_t i) const { return shapes_.at(i); }
    std::size_t size() const noexcept { return layers_.size(); }
    Layer<T>& layer(std::size_t i) { return *layers_.at(i); }
    const Layer<T>& layer(std::size_t i) const { return *layers_.at(i); }

    void init(std::uint64_t seed) {
        Rng rng(seed);
        for (auto& l : layers_) l->init(rng);
    }

    const Tensor<T>& forward(const Tensor<T>& x, Mode mode) {
        if (layers_.empty()) throw InputError("network has no layers");
        if (x.sample_size() != shape_size(input_shape_))
            throw InputError("network input " + shape_string(x.shape()) + " does not match " + shape_string(input_shape_));
        acts_.resize(layers_.size() + 1);
        acts_[0] = x;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            layers_[i]->forward(acts_[i], acts_[i + 1], mode);
            if (!acts_[i + 1].all_finite()) throw NonFiniteError("non-finite output of layer " + std::to_string(i) + " (" + layers_[i]->kind() + ")");
        }
        return acts_.back();
    }

    // Input of layer i is activation(i); output of layer i is activation(i + 1).
    const Tensor<T>& activation(std::size_t i) const { return acts_.at(i); }

    void zero_grad() {
        for (auto& l : layers_)
            for (auto& p : l->params()) p.grad->fill(T(0));
    }

    // Gradient of sum(dout * output) after forward(). Accumulates into the
    // parameter gradients; returns the input gradient when requested.
    void backward(const Tensor<T>& dout, Tensor<T>* din = nullptr) { backward_from(layers_.size(), dout, din); }

    // Mean softmax cross-entropy over the batch of the last forward();
    // accumulates its gradient. The output layer must be a softmax dense layer.
    T backward_cross_entropy(std::span<const std::size_t> labels, Tensor<T>* din = nullptr) {
        auto* last = dynamic_cast<Dense<T>*>(layers_.back().get());
        if (!last || last->activation() != Activation::softmax) throw InputError("cross-entropy needs a softmax dense output layer");
        const Tensor<T>& p = acts_.back();
        const std::size_t B = p.batch(), K = p.sample_size();
        if (labels.size() != B) throw InputError("label count does not match batch size");
        Tensor<T> dz(p.shape());
        T loss = 0;
        const T inv_b = T(1) / static_cast<T>(B);
        for (std::size_t i = 0; i < B; ++i) {
            const std::span<const T> row(p.data() + i * K, K);
            loss += cross_entropy_loss(row, labels[i]);
            for (std::size_t c = 0; c < K; ++c) dz[i * K + c] = (row[c] - (c == labels[i] ? T(1) : T(0))) * inv_b;
        }
        const std::size_t n = layers_.size();
        Tensor<T> g;
        last->backward_preactivation(acts_[n - 1], dz, n > 1 || din ? &g : nullptr);
        check_grads(n - 1);
        if (n > 1 || din) backward_from(n - 1, g, din);
        return loss * inv_b;
    }

    std::vector<Param<T>> params() {
        std::vector<Param<T>> out;
        for (std::size_t i = 0; i < layers_.size(); ++i)
            for (auto p : layers_[i]->params()) {
                p.name = std::to_string(i) + "." + layers_[i]->kind() + "." + p.name;
                out.push_back(p);
            }
        return out;
    }

    std::size_t parameter_count() {
        std::size_t n = 0;
        for (auto& p : params()) n += p.value->size();
        return n;
    }

    std::vector<std::size_t> predict(const Tensor<T>& x) {
        const auto& p = forward(x, Mode::eval);
        const std::size_t K = p.sample_size();
        std::vector<std::size_t> out(p.batch());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = argmax(std::span<const T>(p.data() + i * K, K));
        return out;
    }

    json describe() const {
        json layers = json::array();
        for (const auto& l : layers_) layers.push_back(l->describe());
        return {{"input", input_shape_}, {"layers", layers}};
    }

    static Network from_description(const json& d) {
        Network net(d.at("input").get<Shape>());
        for (const auto& l : d.at("layers")) net.add(make_layer<T>(l));
        return net;
    }

private:
    void backward_from(std::size_t end, const Tensor<T>& dout, Tensor<T>* din) {
        Tensor<T> g = dout, next;
        for (std::size_t i = end; i-- > 0;) {
            const bool need = i > 0 || din;
            layers_[i]->backward(acts_[i], acts_[i + 1], g, need ? &next : nullptr);
            check_grads(i);
            if (need) std::swap(g, next);
        }
        if (din) *din = std::move(g);
    }

    void check_grads(std::size_t i) {
        for (auto& p : layers_[i]->params())
            if (!p.grad->all_finite())
                throw NonFiniteError("non-finite gradient in layer " + std::to_string(i) + " (" + layers_[i]->kind() + ") parameter " + p.name);
    }

    Shape input_shape_, out_shape_;
    std::vector<std::unique_ptr<Layer<T>>> layers_;
    std::vector<Shape> shapes_;
    std::vector<Tensor<T>> acts_;
};

// ---------------------------------------------------------------------------

inline constexpr std::uint16_t kModelVersion = 1;

namespace detail {

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
    io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) io::write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (T v : t.values()) io::write_pod<float>(os, static_cast<float>(v));
}

template <typename T>
void read_tensor(std::istream& is, Tensor<T>& t, const std::string& what) {
    const auto rank = io::read_pod<std::uint32_t>(is);
    if (rank > 8) throw FormatError("tensor rank out of range for " + what);
    Shape s(rank);
    for (auto& d : s) d = io::read_pod<std::uint32_t>(is);
    if (s != t.shape()) throw FormatError("tensor " + what + " has shape " + shape_string(s) + ", expected " + shape_string(t.shape()));
    for (auto& v : t.values()) v = static_cast<T>(io::read_pod<float>(is));
}

}  // namespace detail

template <typename T>
void save_model(std::ostream& os, Network<T>& net, const json& meta) {
    os.write("BNNM", 4);
    io::write_pod<std::uint16_t>(os, kModelVersion);
    io::write_string(os, json{{"meta", meta}, {"network", net.describe()}}.dump());
    for (std::size_t i = 0; i < net.size(); ++i) {
        for (auto& p : net.layer(i).params()) detail::write_tensor(os, *p.value);
        for (auto& [name, t] : net.layer(i).buffers()) detail::write_tensor(os, *t);
    }
    if (!os) throw Error("failed writing model");
}

template <typename T>
struct LoadedModel {
    Network<T> network;
    json meta;
};

template <typename T>
LoadedModel<T> load_model(std::istream& is) {
    io::expect_magic(is, "BNNM");
    const auto version = io::read_pod<std::uint16_t>(is);
    if (version != kModelVersion) throw FormatError("model version " + std::to_string(version) + " is not supported");
    json d;
    try {
        d = json::parse(io::read_string(is));
    } catch (const json::exception& e) {
        throw FormatError(std::string("model descriptor is not valid JSON: ") + e.what());
    }
    LoadedModel<T> out;
    try {
        out.network = Network<T>::from_description(d.at("network"));
        out.meta = d.at("meta");
    } catch (const json::exception& e) {
        throw FormatError(std::string("model descriptor is incomplete: ") + e.what());
    }
    for (std::size_t i = 0; i < out.network.size(); ++i) {
        auto& l = out.network.layer(i);
        for (auto& p : l.params()) detail::read_tensor(is, *p.value, std::to_string(i) + "." + p.name);
        for (auto& [name, t] : l.buffers()) detail::read_tensor(is, *t, std::to_string(i) + "." + name);
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after model tensors");
    return out;
}

template <typename T>
void save_model(const std::string& path, Network<T>& net, const json& meta) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + path + " for writing");
    save_model(os, net, meta);
}

template <typename T>
LoadedModel<T> load_model(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open model " + path);
    return load_model<T>(is);
}

}  // namespace bladenet::nn
