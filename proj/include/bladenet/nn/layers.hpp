#pragma once

// Layer set: dense, 5x5 convolution, relu, 2x2 max-pool, inverted dropout and
// a fixed per-feature standardization. Every layer maps a batch tensor to a
// batch tensor; backward accumulates parameter gradients and optionally
// writes the input gradient.

#include "bladenet/nn/tensor.hpp"

#include "json.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace bladenet::nn {

using json = nlohmann::json;

enum class Mode { train, eval };
enum class Activation { identity, relu, softmax };
enum class Padding { same, valid };

inline const char* to_string(Activation a) noexcept {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::softmax: return "softmax";
    }
    return "?";
}

inline Activation activation_from_string(const std::string& s) {
    if (s == "identity") return Activation::identity;
    if (s == "relu") return Activation::relu;
    if (s == "softmax") return Activation::softmax;
    throw InputError("unknown activation '" + s + "'");
}

template <typename T>
struct Param {
    std::string name;
    Tensor<T>* value;
    Tensor<T>* grad;
};

template <typename T>
class Layer {
public:
    virtual ~Layer() = default;
    virtual std::string kind() const = 0;
    virtual json describe() const = 0;
    // Per-sample shapes, batch dimension excluded.
    virtual Shape output_shape(const Shape& in) const = 0;
    virtual void forward(const Tensor<T>& in, Tensor<T>& out, Mode mode) = 0;
    virtual void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& dout, Tensor<T>* din) = 0;
    virtual void init(Rng&) {}
    virtual std::vector<Param<T>> params() { return {}; }
    // Non-trained tensors that still belong in the model file.
    virtual std::vector<std::pair<std::string, Tensor<T>*>> buffers() { return {}; }
};

namespace detail {

template <typename T>
void fill_normal(Tensor<T>& t, Rng& rng, double stddev) {
    for (auto& v : t.values()) v = static_cast<T>(stddev * rng.normal());
}

template <typename T>
void softmax_rows(T* z, std::size_t rows, std::size_t cols) noexcept {
    for (std::size_t r = 0; r < rows; ++r) {
        T* row = z + r * cols;
        T m = row[0];
        for (std::size_t c = 1; c < cols; ++c) m = std::max(m, row[c]);
        T s = 0;
        for (std::size_t c = 0; c < cols; ++c) s += (row[c] = std::exp(row[c] - m));
        for (std::size_t c = 0; c < cols; ++c) row[c] /= s;
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------

template <typename T>
class Dense final : public Layer<T> {
public:
    Dense(std::size_t n_in, std::size_t n_out, Activation act)
        : n_in_(n_in), n_out_(n_out), act_(act), W({n_out, n_in}), b({n_out}), dW({n_out, n_in}), db({n_out}) {
        if (!n_in || !n_out) throw InputError("dense: zero width");
    }

    std::string kind() const override { return "dense"; }
    json describe() const override { return {{"type", "dense"}, {"in", n_in_}, {"out", n_out_}, {"activation", to_string(act_)}}; }
    Shape output_shape(const Shape& in) const override {
        if (shape_size(in) != n_in_) throw InputError("dense: input " + shape_string(in) + " does not flatten to " + std::to_string(n_in_));
        return {n_out_};
    }
    Activation activation() const noexcept { return act_; }
    std::size_t inputs() const noexcept { return n_in_; }
    std::size_t outputs() const noexcept { return n_out_; }

    void init(Rng& rng) override {
        detail::fill_normal(W, rng, std::sqrt((act_ == Activation::relu ? 2.0 : 1.0) / static_cast<double>(n_in_)));
        b.fill(T(0));
    }

    void forward(const Tensor<T>& in, Tensor<T>& out, Mode) override {
        const std::size_t B = in.batch();
        if (in.sample_size() != n_in_) throw InputError("dense: expected " + std::to_string(n_in_) + " inputs, got " + shape_string(in.shape()));
        out.resize({B, n_out_});
        MapR<T> Z(out.data(), B, n_out_);
        Z.noalias() = CMapR<T>(in.data(), B, n_in_) * CMapR<T>(W.data(), n_out_, n_in_).transpose();
        Z.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b.data(), n_out_);
        switch (act_) {
            case Activation::identity: break;
            case Activation::relu:
                for (auto& v : out.values()) v = v > T(0) ? v : T(0);
                break;
            case Activation::softmax: detail::softmax_rows(out.data(), B, n_out_); break;
        }
    }

    void backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& dout, Tensor<T>* din) override {
        Tensor<T> dz(dout.shape());
        const std::size_t B = out.batch();
        switch (act_) {
            case Activation::identity: dz = dout; break;
            case Activation::relu:
                for (std::size_t i = 0; i < dz.size(); ++i) dz[i] = out[i] > T(0) ? dout[i] : T(0);
                break;
            case Activation::softmax:
                for (std::size_t r = 0; r < B; ++r) {
                    const T* p = out.data() + r * n_out_;
                    const T* g = dout.data() + r * n_out_;
                    T dot = 0;
                    for (std::size_t c = 0; c < n_out_; ++c) dot += p[c] * g[c];
                    for (std::size_t c = 0; c < n_out_; ++c) dz[r * n_out_ + c] = p[c] * (g[c] - dot);
                }
                break;
        }
        backward_preactivation(in, dz, din);
    }

    // dz is the gradient with respect to W x + b.
    void backward_preactivation(const Tensor<T>& in, const Tensor<T>& dz, Tensor<T>* din) {
        const std::size_t B = in.batch();
        CMapR<T> DZ(dz.data(), B, n_out_);
        CMapR<T> X(in.data(), B, n_in_);
        MapR<T>(dW.data(), n_out_, n_in_).noalias() += DZ.transpose() * X;
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>>(db.data(), n_out_) += DZ.colwise().sum();
        if (din) {
            din->resize(in.shape());
            MapR<T>(din->data(), B, n_in_).noalias() = DZ * CMapR<T>(W.data(), n_out_, n_in_);
        }
    }

    std::vector<Param<T>> params() override { return {{"W", &W, &dW}, {"b", &b, &db}}; }

private:
    std::size_t n_in_, n_out_;
    Activation act_;

public:
    Tensor<T> W, b, dW, db;
};

// ---------------------------------------------------------------------------

// Stride-1 convolution (cross-correlation). Each input sample is copied into a
// zero-padded plane and output rows keep the padded width, so every kernel tap
// is one GEMM against a shifted view of that plane. The extra columns at the
// end of each output row are scratch.
template <typename T>
class Conv2D final : public Layer<T> {
    using SMap = Eigen::Map<MatR<T>, 0, Eigen::OuterStride<>>;
    using CSMap = Eigen::Map<const MatR<T>, 0, Eigen::OuterStride<>>;

public:
    Conv2D(std::size_t in_depth, std::size_t depth, std::size_t height, std::size_t width, Padding padding, std::size_t k = 5)
        : cin_(in_depth), cout_(depth), h_(height), w_(width), k_(k), padding_(padding),
          K({depth, in_depth, k, k}), bias({depth}), dK({depth, in_depth, k, k}), dbias({depth}) {
        if (!depth || !in_depth) throw InputError("conv2d: depth must be >= 1");
        if (padding == Padding::valid && (height < k || width < k)) throw InputError("conv2d: input smaller than kernel");
        pad_ = padding == Padding::same ? k / 2 : 0;
        ho_ = h_ + 2 * pad_ - k_ + 1;
        wo_ = w_ + 2 * pad_ - k_ + 1;
        wp_ = w_ + 2 * pad_;
        plane_ = (h_ + 2 * pad_) * wp_ + k_ - 1;
        span_ = ho_ * wp_;
    }

    std::string kind() const override { return "conv2d"; }
    json describe() const override {
        return {{"type", "conv2d"}, {"in_depth", cin_}, {"depth", cout_}, {"height", h_}, {"width", w_}, {"kernel", k_},
                {"padding", padding_ == Padding::same ? "same" : "valid"}};
    }
    Shape output_shape(const Shape& in) const override {
        if (shape_size(in) != cin_ * h_ * w_) throw InputError("conv2d: input " + shape_string(in) + " does not match " + shape_string({cin_, h_, w_}));
        return {cout_, ho_, wo_};
    }
    std::size_t depth() const noexcept { return cout_; }
    std::size_t in_depth() const noexcept { return cin_; }
    std::size_t kernel() const noexcept { return k_; }
    Padding padding() const noexcept { return padding_; }

    void init(Rng& rng) override {
        detail::fill_normal(K, rng, std::sqrt(2.0 / static_cast<double>(cin_ * k_ * k_)));
        bias.fill(T(0));
    }

    void forward(const Tensor<T>& in, Tensor<T>& out, Mode) override {
        const std::size_t B = in.batch();
        output_shape(Shape(in.shape().begin() + 1, in.shape().end()));
        out.resize({B, cout_, ho_, wo_});
        prepare();
        MapR<T> A(acc_.data(), cout_, span_);
        for (std::size_t s = 0; s < B; ++s) {
            load_plane(in.data() + s * cin_ * h_ * w_);
            A.setZero();
            for (std::size_t t = 0; t < k_ * k_; ++t) A.noalias() += tap(t) * shifted(plane_buf_.data(), t);
            T* o = out.data() + s * cout_ * ho_ * wo_;
            for (std::size_t d = 0; d < cout_; ++d)
                for (std::size_t y = 0; y < ho_; ++y) {
                    const T* a = acc_.data() + d * span_ + y * wp_;
                    T* dst = o + (d * ho_ + y) * wo_;
                    for (std::size_t x = 0; x < wo_; ++x) dst[x] = a[x] + bias[d];
                }
        }
    }

    void backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& dout, Tensor<T>* din) override {
        const std::size_t B = in.batch(), taps = k_ * k_;
        prepare();
        if (grad_.size() != cout_ * span_) grad_.assign(cout_ * span_, T(0));
        dtaps_.assign(taps * cout_ * cin_, T(0));
        if (din) {
            din->resize(in.shape());
            dplane_.resize(cin_ * plane_);
        }
        CMapR<T> G(grad_.data(), cout_, span_);
        Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> dbv(dbias.data(), cout_);
        for (std::size_t s = 0; s < B; ++s) {
            load_plane(in.data() + s * cin_ * h_ * w_);
            const T* g = dout.data() + s * cout_ * ho_ * wo_;
            for (std::size_t d = 0; d < cout_; ++d)
                for (std::size_t y = 0; y < ho_; ++y) std::copy(g + (d * ho_ + y) * wo_, g + (d * ho_ + y + 1) * wo_, grad_.data() + d * span_ + y * wp_);
            dbv += G.rowwise().sum();
            for (std::size_t t = 0; t < taps; ++t)
                MapR<T>(dtaps_.data() + t * cout_ * cin_, cout_, cin_).noalias() += G * shifted(plane_buf_.data(), t).transpose();
            if (din) {
                std::fill(dplane_.begin(), dplane_.end(), T(0));
                for (std::size_t t = 0; t < taps; ++t) shifted(dplane_.data(), t).noalias() += tap(t).transpose() * G;
                T* dx = din->data() + s * cin_ * h_ * w_;
                for (std::size_t c = 0; c < cin_; ++c)
                    for (std::size_t y = 0; y < h_; ++y) {
                        const T* src = dplane_.data() + c * plane_ + (y + pad_) * wp_ + pad_;
                        std::copy(src, src + w_, dx + (c * h_ + y) * w_);
                    }
            }
        }
        for (std::size_t d = 0; d < cout_; ++d)
            for (std::size_t c = 0; c < cin_; ++c)
                for (std::size_t t = 0; t < taps; ++t) dK[(d * cin_ + c) * taps + t] += dtaps_[(t * cout_ + d) * cin_ + c];
    }

    std::vector<Param<T>> params() override { return {{"K", &K, &dK}, {"b", &bias, &dbias}}; }

private:
    // Repacks K tap-major (tap, out, in) and sizes the plane and output buffers.
    void prepare() {
        const std::size_t taps = k_ * k_;
        taps_.resize(taps * cout_ * cin_);
        for (std::size_t d = 0; d < cout_; ++d)
            for (std::size_t c = 0; c < cin_; ++c)
                for (std::size_t t = 0; t < taps; ++t) taps_[(t * cout_ + d) * cin_ + c] = K[(d * cin_ + c) * taps + t];
        if (plane_buf_.size() != cin_ * plane_) plane_buf_.assign(cin_ * plane_, T(0));
        acc_.resize(cout_ * span_);
    }

    // Writes the interior of the padded plane; the zero border is never touched.
    void load_plane(const T* x) {
        for (std::size_t c = 0; c < cin_; ++c)
            for (std::size_t y = 0; y < h_; ++y) {
                const T* src = x + (c * h_ + y) * w_;
                std::copy(src, src + w_, plane_buf_.data() + c * plane_ + (y + pad_) * wp_ + pad_);
            }
    }

    CMapR<T> tap(std::size_t t) const { return CMapR<T>(taps_.data() + t * cout_ * cin_, cout_, cin_); }
    CSMap shifted(const T* plane, std::size_t t) const {
        return CSMap(plane + (t / k_) * wp_ + t % k_, cin_, span_, Eigen::OuterStride<>(plane_));
    }
    SMap shifted(T* plane, std::size_t t) const { return SMap(plane + (t / k_) * wp_ + t % k_, cin_, span_, Eigen::OuterStride<>(plane_)); }

    std::size_t cin_, cout_, h_, w_, k_, pad_ = 0, ho_ = 0, wo_ = 0, wp_ = 0, plane_ = 0, span_ = 0;
    Padding padding_;
    AlignedVector<T> taps_, dtaps_, plane_buf_, dplane_, acc_, grad_;

public:
    Tensor<T> K, bias, dK, dbias;
};

// ---------------------------------------------------------------------------

template <typename T>
class ReLU final : public Layer<T> {
public:
    std::string kind() const override { return "relu"; }
    json describe() const override { return {{"type", "relu"}}; }
    Shape output_shape(const Shape& in) const override { return in; }

    void forward(const Tensor<T>& in, Tensor<T>& out, Mode) override {
        out.resize(in.shape());
        const T* x = in.data();
        T* y = out.data();
        for (std::size_t i = 0, n = in.size(); i < n; ++i) y[i] = std::max(x[i], T(0));
    }
    void backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& dout, Tensor<T>* din) override {
        if (!din) return;
        din->resize(in.shape());
        const T* x = in.data();
        const T* g = dout.data();
        T* d = din->data();
        for (std::size_t i = 0, n = in.size(); i < n; ++i) d[i] = x[i] > T(0) ? g[i] : T(0);
    }
};

// 2x2 window, stride 2. Ties go to the first element in row-major order.
template <typename T>
class MaxPool2x2 final : public Layer<T> {
public:
    std::string kind() const override { return "maxpool2x2"; }
    json describe() const override { return {{"type", "maxpool2x2"}}; }
    Shape output_shape(const Shape& in) const override {
        if (in.size() != 3) throw InputError("maxpool2x2: expected a depth x height x width input");
        if (in[1] % 2 || in[2] % 2) throw InputError("maxpool2x2: odd spatial size " + shape_string(in));
        return {in[0], in[1] / 2, in[2] / 2};
    }

    void forward(const Tensor<T>& in, Tensor<T>& out, Mode) override {
        if (in.rank() != 4) throw InputError("maxpool2x2: expected a rank-4 batch");
        const Shape os = output_shape({in.dim(1), in.dim(2), in.dim(3)});
        const std::size_t planes = in.dim(0) * in.dim(1), H = in.dim(2), W = in.dim(3), Ho = os[1], Wo = os[2];
        out.resize({in.dim(0), os[0], Ho, Wo});
        argmax_.resize(out.size());
        for (std::size_t p = 0; p < planes; ++p) {
            const T* x = in.data() + p * H * W;
            for (std::size_t oy = 0; oy < Ho; ++oy)
                for (std::size_t ox = 0; ox < Wo; ++ox) {
                    std::size_t best = (2 * oy) * W + 2 * ox;
                    for (std::size_t idx : {best + 1, best + W, best + W + 1})
                        if (x[idx] > x[best]) best = idx;
                    const std::size_t o = (p * Ho + oy) * Wo + ox;
                    out[o] = x[best];
                    argmax_[o] = static_cast<std::uint32_t>(p * H * W + best);
                }
        }
    }

    void backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& dout, Tensor<T>* din) override {
        if (!din) return;
        din->resize(in.shape());
        din->fill(T(0));
        for (std::size_t o = 0; o < dout.size(); ++o) (*din)[argmax_[o]] += dout[o];
    }

private:
    std::vector<std::uint32_t> argmax_;
};

// Inverted dropout: kept units are scaled by 1/keep_prob in training, eval is identity.
template <typename T>
class Dropout final : public Layer<T> {
public:
    explicit Dropout(double keep_prob, std::uint64_t seed = 0) : keep_(keep_prob), rng_(seed) {
        if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw InputError("dropout: keep_prob must be in (0, 1]");
    }

    std::string kind() const override { return "dropout"; }
    json describe() const override { return {{"type", "dropout"}, {"keep_prob", keep_}}; }
    Shape output_shape(const Shape& in) const override { return in; }
    double keep_prob() const noexcept { return keep_; }
    void reseed(std::uint64_t seed) noexcept { rng_ = Rng(seed); }
    void init(Rng& rng) override { rng_ = Rng(rng.next()); }

    void forward(const Tensor<T>& in, Tensor<T>& out, Mode mode) override {
        out.resize(in.shape());
        masked_ = mode == Mode::train && keep_ < 1.0;
        if (!masked_) {
            std::copy(in.values().begin(), in.values().end(), out.values().begin());
            return;
        }
        mask_.resize(in.size());
        const T scale = T(1.0 / keep_);
        for (std::size_t i = 0; i < in.size(); ++i) {
            mask_[i] = rng_.uniform() < keep_ ? scale : T(0);
            out[i] = in[i] * mask_[i];
        }
    }

    void backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& dout, Tensor<T>* din) override {
        if (!din) return;
        din->resize(in.shape());
        for (std::size_t i = 0; i < in.size(); ++i) (*din)[i] = masked_ ? dout[i] * mask_[i] : dout[i];
    }

private:
    double keep_;
    Rng rng_;
    bool masked_ = false;
    std::vector<T> mask_;
};

// (x - mean) * inv_std per input feature. Features whose spread is below
// kFloor get inv_std = 0 and are ignored.
template <typename T>
class Standardize final : public Layer<T> {
public:
    static constexpr double kFloor = 1e-6;

    explicit Standardize(Shape sample_shape)
        : shape_(std::move(sample_shape)), mean(Shape{shape_size(shape_)}), inv_std(Shape{shape_size(shape_)}, T(1)) {}

    std::string kind() const override { return "standardize"; }
    json describe() const override { return {{"type", "standardize"}, {"shape", shape_}}; }
    Shape output_shape(const Shape& in) const override {
        if (shape_size(in) != mean.size()) throw InputError("standardize: input " + shape_string(in) + " does not match " + shape_string(shape_));
        return shape_;
    }

    // Population statistics over the batch dimension of `data`.
    void fit(const Tensor<T>& data) {
        const std::size_t n = data.batch(), f = mean.size();
        if (!n || data.sample_size() != f) throw InputError("standardize: fit data does not match feature count");
        for (std::size_t j = 0; j < f; ++j) {
            double m = 0.0;
            for (std::size_t i = 0; i < n; ++i) m += static_cast<double>(data[i * f + j]);
            m /= static_cast<double>(n);
            double v = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double d = static_cast<double>(data[i * f + j]) - m;
                v += d * d;
            }
            const double sd = std::sqrt(v / static_cast<double>(n));
            mean[j] = static_cast<T>(m);
            inv_std[j] = sd > kFloor ? static_cast<T>(1.0 / sd) : T(0);
        }
    }

    void forward(const Tensor<T>& in, Tensor<T>& out, Mode) override {
        const std::size_t f = mean.size();
        if (in.sample_size() != f) throw InputError("standardize: feature count mismatch");
        Shape s{in.batch()};
        s.insert(s.end(), shape_.begin(), shape_.end());
        out.resize(s);
        for (std::size_t i = 0; i < in.batch(); ++i)
            for (std::size_t j = 0; j < f; ++j) out[i * f + j] = (in[i * f + j] - mean[j]) * inv_std[j];
    }

    void backward(const Tensor<T>& in, const Tensor<T>&, const Tensor<T>& dout, Tensor<T>* din) override {
        if (!din) return;
        const std::size_t f = mean.size();
        din->resize(in.shape());
        for (std::size_t i = 0; i < in.batch(); ++i)
            for (std::size_t j = 0; j < f; ++j) (*din)[i * f + j] = dout[i * f + j] * inv_std[j];
    }

    std::vector<std::pair<std::string, Tensor<T>*>> buffers() override { return {{"mean", &mean}, {"inv_std", &inv_std}}; }

private:
    Shape shape_;

public:
    Tensor<T> mean, inv_std;
};

// ---------------------------------------------------------------------------

template <typename T>
std::unique_ptr<Layer<T>> make_layer(const json& d) {
    const auto type = d.at("type").get<std::string>();
    if (type == "dense")
        return std::make_unique<Dense<T>>(d.at("in").get<std::size_t>(), d.at("out").get<std::size_t>(),
                                          activation_from_string(d.at("activation").get<std::string>()));
    if (type == "conv2d")
        return std::make_unique<Conv2D<T>>(d.at("in_depth").get<std::size_t>(), d.at("depth").get<std::size_t>(),
                                           d.at("height").get<std::size_t>(), d.at("width").get<std::size_t>(),
                                           d.at("padding").get<std::string>() == "valid" ? Padding::valid : Padding::same,
                                           d.at("kernel").get<std::size_t>());
    if (type == "relu") return std::make_unique<ReLU<T>>();
    if (type == "maxpool2x2") return std::make_unique<MaxPool2x2<T>>();
    if (type == "dropout") return std::make_unique<Dropout<T>>(d.at("keep_prob").get<double>());
    if (type == "standardize") return std::make_unique<Standardize<T>>(d.at("shape").get<Shape>());
    throw FormatError("unknown layer type '" + type + "'");
}

}  // namespace bladenet::nn
