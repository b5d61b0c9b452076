#pragma once

// The three station classifiers (nn2, cnn2_nn2, cnn4_nn2), per-station
// training with best-validation snapshots, classifier banks on disk and
// feature-map inspection.

#include "bladenet/dataset.hpp"
#include "bladenet/nn/network.hpp"
#include "bladenet/nn/optim.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace bladenet {

enum class ArchKind { nn2, cnn2_nn2, cnn4_nn2 };

inline const char* to_string(ArchKind k) noexcept {
    switch (k) {
        case ArchKind::nn2: return "nn2";
        case ArchKind::cnn2_nn2: return "cnn2_nn2";
        case ArchKind::cnn4_nn2: return "cnn4_nn2";
    }
    return "?";
}

inline ArchKind arch_from_string(const std::string& s) {
    if (s == "nn2") return ArchKind::nn2;
    if (s == "cnn2_nn2") return ArchKind::cnn2_nn2;
    if (s == "cnn4_nn2") return ArchKind::cnn4_nn2;
    throw InputError("unknown architecture '" + s + "' (expected nn2, cnn2_nn2 or cnn4_nn2)");
}

struct ArchSpec {
    ArchKind kind = ArchKind::cnn4_nn2;
    std::size_t conv_depth = 16;  // ignored for nn2
    std::size_t fc_hidden = 256;
    std::size_t n_classes = 2;
    double keep_prob = 0.5;

    void validate() const {
        if (kind != ArchKind::nn2 && conv_depth != 8 && conv_depth != 16 && conv_depth != 32 && conv_depth != 64)
            throw InputError("conv depth must be 8, 16, 32 or 64, got " + std::to_string(conv_depth));
        if (fc_hidden < 1) throw InputError("fc_hidden must be >= 1");
        if (n_classes < 1) throw InputError("n_classes must be >= 1");
        if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw InputError("keep_prob must be in (0, 1]");
    }

    // Bank directory name, e.g. "cnn4_nn2_d16" or "nn2".
    std::string label() const {
        return kind == ArchKind::nn2 ? std::string("nn2") : std::string(to_string(kind)) + "_d" + std::to_string(conv_depth);
    }
};

inline json to_json(const ArchSpec& a) {
    return {{"kind", to_string(a.kind)}, {"conv_depth", a.conv_depth}, {"fc_hidden", a.fc_hidden}, {"n_classes", a.n_classes}, {"keep_prob", a.keep_prob}};
}

inline ArchSpec arch_from_json(const json& j) {
    ArchSpec a;
    a.kind = arch_from_string(j.at("kind").get<std::string>());
    a.conv_depth = j.value("conv_depth", a.conv_depth);
    a.fc_hidden = j.value("fc_hidden", a.fc_hidden);
    a.n_classes = j.value("n_classes", a.n_classes);
    a.keep_prob = j.value("keep_prob", a.keep_prob);
    a.validate();
    return a;
}

using Net = nn::Network<double>;

// Standardize -> body -> dense(fc_hidden, relu) -> dropout -> dense(n_classes, softmax).
// The standardization statistics start as identity; training fits them.
inline Net build(const ArchSpec& arch, std::uint64_t seed = 0) {
    arch.validate();
    using namespace nn;
    Net net({1, kGridSide, kGridSide});
    net.emplace<Standardize<double>>(Shape{1, kGridSide, kGridSide});
    const std::size_t d = arch.conv_depth, g = kGridSide;
    switch (arch.kind) {
        case ArchKind::nn2: break;
        case ArchKind::cnn2_nn2:
            net.emplace<Conv2D<double>>(1, d, g, g, Padding::same);
            net.emplace<ReLU<double>>();
            net.emplace<MaxPool2x2<double>>();
            net.emplace<Conv2D<double>>(d, d, g / 2, g / 2, Padding::same);
            net.emplace<ReLU<double>>();
            net.emplace<MaxPool2x2<double>>();
            break;
        case ArchKind::cnn4_nn2:
            net.emplace<Conv2D<double>>(1, d, g, g, Padding::same);
            net.emplace<ReLU<double>>();
            net.emplace<Conv2D<double>>(d, d, g, g, Padding::same);
            net.emplace<ReLU<double>>();
            net.emplace<MaxPool2x2<double>>();
            net.emplace<Conv2D<double>>(d, d, g / 2, g / 2, Padding::same);
            net.emplace<ReLU<double>>();
            net.emplace<Conv2D<double>>(d, d, g / 2, g / 2, Padding::same);
            net.emplace<ReLU<double>>();
            net.emplace<MaxPool2x2<double>>();
            break;
    }
    net.emplace<Dense<double>>(shape_size(net.output_shape()), arch.fc_hidden, Activation::relu);
    net.emplace<Dropout<double>>(arch.keep_prob);
    net.emplace<Dense<double>>(arch.fc_hidden, arch.n_classes, Activation::softmax);
    net.init(seed);
    return net;
}

// Layer indices of the convolutions, in order.
inline std::vector<std::size_t> conv_layers(const Net& net) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < net.size(); ++i)
        if (net.layer(i).kind() == "conv2d") out.push_back(i);
    return out;
}

inline nn::Standardize<double>& standardizer(Net& net) {
    auto* s = dynamic_cast<nn::Standardize<double>*>(&net.layer(0));
    if (!s) throw InputError("network does not start with a standardize layer");
    return *s;
}

// ---------------------------------------------------------------------------

struct TrainHyper {
    nn::OptimizerSpec optimizer;
    std::size_t batch_size = 64;
    std::size_t max_epochs = 60;
    std::size_t patience = 8;
    bool early_stopping = true;  // on validation accuracy

    void validate() const {
        optimizer.validate();
        if (batch_size < 1) throw InputError("batch_size must be >= 1");
        if (max_epochs < 1) throw InputError("max_epochs must be >= 1");
    }
};

inline json to_json(const TrainHyper& h) {
    return {{"optimizer", h.optimizer.kind}, {"learning_rate", h.optimizer.learning_rate}, {"momentum", h.optimizer.momentum},
            {"beta1", h.optimizer.beta1}, {"beta2", h.optimizer.beta2}, {"epsilon", h.optimizer.epsilon},
            {"batch_size", h.batch_size}, {"max_epochs", h.max_epochs}, {"patience", h.patience}, {"early_stopping", h.early_stopping}};
}

inline TrainHyper hyper_from_json(const json& j) {
    TrainHyper h;
    h.optimizer.kind = j.value("optimizer", h.optimizer.kind);
    h.optimizer.learning_rate = j.value("learning_rate", h.optimizer.learning_rate);
    h.optimizer.momentum = j.value("momentum", h.optimizer.momentum);
    h.optimizer.beta1 = j.value("beta1", h.optimizer.beta1);
    h.optimizer.beta2 = j.value("beta2", h.optimizer.beta2);
    h.optimizer.epsilon = j.value("epsilon", h.optimizer.epsilon);
    h.batch_size = j.value("batch_size", h.batch_size);
    h.max_epochs = j.value("max_epochs", h.max_epochs);
    h.patience = j.value("patience", h.patience);
    h.early_stopping = j.value("early_stopping", h.early_stopping);
    h.validate();
    return h;
}

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_accuracy = 0.0;
    double val_loss = 0.0;
    double val_accuracy = 0.0;
};

struct StationModel {
    Station station;
    ArchSpec arch;
    LabelSpec label_spec;
    Net net;
    std::vector<EpochStats> curve;
    std::size_t best_epoch = 0;
    double best_val_accuracy = 0.0;
    std::uint64_t seed = 0;
};

inline nn::Tensor<double> gather_inputs(const DatasetBank& bank, std::span<const std::size_t> records) {
    nn::Tensor<double> x({records.size(), 1, kGridSide, kGridSide});
    for (std::size_t i = 0; i < records.size(); ++i)
        std::copy(bank.records.at(records[i]).matrix.cells.begin(), bank.records[records[i]].matrix.cells.end(), x.data() + i * kGridCells);
    return x;
}

inline nn::Tensor<double> gather_inputs(std::span<const InputMatrix> ms) {
    nn::Tensor<double> x({ms.size(), 1, kGridSide, kGridSide});
    for (std::size_t i = 0; i < ms.size(); ++i) std::copy(ms[i].cells.begin(), ms[i].cells.end(), x.data() + i * kGridCells);
    return x;
}

// Seeds depend on the station, not on its position in any list.
inline std::uint64_t station_seed(std::uint64_t master, const Station& s) {
    const auto name = s.name();
    return derive_seed(master, io::fnv1a(name));
}

inline std::vector<std::size_t> predict_records(Net& net, const DatasetBank& bank, std::span<const std::size_t> records,
                                                std::size_t batch = 256) {
    std::vector<std::size_t> out;
    out.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); i += batch) {
        const auto chunk = records.subspan(i, std::min(batch, records.size() - i));
        const auto p = net.predict(gather_inputs(bank, chunk));
        out.insert(out.end(), p.begin(), p.end());
    }
    return out;
}

namespace detail {

struct EvalStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

inline EvalStats evaluate_split(Net& net, const DatasetBank& bank, const StationDataset& sd, std::span<const std::size_t> samples) {
    EvalStats st;
    if (samples.empty()) return st;
    constexpr std::size_t kBatch = 256;
    std::vector<std::size_t> recs;
    for (std::size_t i = 0; i < samples.size(); i += kBatch) {
        recs.clear();
        const std::size_t n = std::min(kBatch, samples.size() - i);
        for (std::size_t k = 0; k < n; ++k) recs.push_back(sd.samples[samples[i + k]].record);
        const auto& p = net.forward(gather_inputs(bank, recs), nn::Mode::eval);
        const std::size_t K = p.sample_size();
        for (std::size_t k = 0; k < n; ++k) {
            const std::span<const double> row(p.data() + k * K, K);
            const std::size_t y = sd.samples[samples[i + k]].label;
            st.loss += nn::cross_entropy_loss(row, y);
            st.accuracy += nn::argmax(row) == y ? 1.0 : 0.0;
        }
    }
    st.loss /= static_cast<double>(samples.size());
    st.accuracy /= static_cast<double>(samples.size());
    return st;
}

inline std::vector<nn::Tensor<double>> snapshot(Net& net) {
    std::vector<nn::Tensor<double>> out;
    for (auto& p : net.params()) out.push_back(*p.value);
    return out;
}

inline void restore(Net& net, const std::vector<nn::Tensor<double>>& snap) {
    auto ps = net.params();
    for (std::size_t i = 0; i < ps.size(); ++i) *ps[i].value = snap[i];
}

}  // namespace detail

// Trains on the train split only and keeps the parameters of the epoch with
// the best validation accuracy (earliest on ties).
inline StationModel train_station(ArchSpec arch, const DatasetBank& bank, std::size_t station_index, const TrainHyper& hyper,
                                  std::uint64_t seed) {
    hyper.validate();
    const StationDataset& sd = bank.stations.at(station_index);
    arch.n_classes = sd.label_spec.n_labels;
    StationModel m{sd.station, arch, sd.label_spec, build(arch, derive_seed(seed, 1)), {}, 0, -1.0, seed};

    const auto train = sd.indices(bank.split_assignment, Split::train);
    const auto val = sd.indices(bank.split_assignment, Split::validation);
    if (train.empty()) throw InputError("station " + sd.station.name() + " has no training samples");
    {
        std::vector<std::size_t> recs;
        for (auto i : train) recs.push_back(sd.samples[i].record);
        standardizer(m.net).fit(gather_inputs(bank, recs));
    }

    nn::Optimizer<double> opt(hyper.optimizer);
    auto best = detail::snapshot(m.net);
    std::size_t since_best = 0;
    std::vector<std::size_t> order = train, recs, labels;
    for (std::size_t epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
        try {
            order = train;
            Rng rng(derive_seed(seed, 1000 + epoch));
            rng.shuffle(order);
            EpochStats es{epoch};
            for (std::size_t i = 0; i < order.size(); i += hyper.batch_size) {
                const std::size_t n = std::min(hyper.batch_size, order.size() - i);
                recs.clear();
                labels.clear();
                for (std::size_t k = 0; k < n; ++k) {
                    recs.push_back(sd.samples[order[i + k]].record);
                    labels.push_back(sd.samples[order[i + k]].label);
                }
                m.net.zero_grad();
                const auto& p = m.net.forward(gather_inputs(bank, recs), nn::Mode::train);
                const std::size_t K = p.sample_size();
                for (std::size_t k = 0; k < n; ++k)
                    es.train_accuracy += nn::argmax(std::span<const double>(p.data() + k * K, K)) == labels[k] ? 1.0 : 0.0;
                es.train_loss += m.net.backward_cross_entropy(labels) * static_cast<double>(n);
                opt.step(m.net.params());
            }
            es.train_loss /= static_cast<double>(order.size());
            es.train_accuracy /= static_cast<double>(order.size());
            const auto v = detail::evaluate_split(m.net, bank, sd, val.empty() ? train : val);
            es.val_loss = v.loss;
            es.val_accuracy = v.accuracy;
            m.curve.push_back(es);
        } catch (const NonFiniteError& e) {
            throw Error("station " + sd.station.name() + " diverged at epoch " + std::to_string(epoch) + ": " + e.what());
        }
        const auto& last = m.curve.back();
        if (last.val_accuracy > m.best_val_accuracy) {
            m.best_val_accuracy = last.val_accuracy;
            m.best_epoch = epoch;
            best = detail::snapshot(m.net);
            since_best = 0;
        } else if (hyper.early_stopping && ++since_best >= hyper.patience) {
            break;
        }
    }
    detail::restore(m.net, best);
    return m;
}

struct ClassifierBank {
    ArchSpec arch;
    std::vector<StationModel> models;
    json manifest;

    StationModel& model(const Station& s) {
        for (auto& m : models)
            if (m.station == s) return m;
        throw InputError("bank has no model for station " + s.name());
    }
};

using ProgressFn = std::function<void(const StationModel&)>;

// One independent training per station; `jobs` threads share the work.
inline ClassifierBank train_bank(const ArchSpec& arch, const DatasetBank& bank, const TrainHyper& hyper, std::uint64_t seed,
                                 unsigned jobs = 1, const ProgressFn& progress = {}) {
    ClassifierBank out{arch, {}, {}};
    std::vector<std::optional<StationModel>> slots(bank.stations.size());
    std::mutex mu;
    parallel_for(bank.stations.size(), jobs, [&](std::size_t i) {
        auto m = train_station(arch, bank, i, hyper, station_seed(seed, bank.stations[i].station));
        std::lock_guard lock(mu);
        if (progress) progress(m);
        slots[i] = std::move(m);
    });
    for (auto& s : slots) out.models.push_back(std::move(*s));
    out.manifest = {{"arch", to_json(arch)}, {"seed", seed}, {"hyper", to_json(hyper)}};
    return out;
}

inline std::size_t predict(StationModel& m, const InputMatrix& x) {
    return m.net.predict(gather_inputs(std::span<const InputMatrix>(&x, 1))).front();
}

// ---------------------------------------------------------------------------

struct FeatureMaps {
    std::size_t layer = 0;        // network layer index of the convolution
    nn::Tensor<double> input;     // conv input, depth x H x W
    nn::Tensor<double> maps;      // post-relu output, d x H x W
    nn::Tensor<double> kernels;   // d x in_depth x 5 x 5
    nn::Tensor<double> bias;      // d
};

// conv_ordinal is 1-based over the convolution layers; 0 selects the last one.
inline FeatureMaps inspect_activations(Net& net, const InputMatrix& x, std::size_t conv_ordinal) {
    const auto convs = conv_layers(net);
    if (convs.empty()) throw InputError("model has no convolution layers to inspect");
    if (conv_ordinal == 0) conv_ordinal = convs.size();
    if (conv_ordinal > convs.size())
        throw RangeError("conv layer " + std::to_string(conv_ordinal) + " requested, model has " + std::to_string(convs.size()));
    const std::size_t li = convs[conv_ordinal - 1];
    net.forward(gather_inputs(std::span<const InputMatrix>(&x, 1)), nn::Mode::eval);
    auto& conv = dynamic_cast<nn::Conv2D<double>&>(net.layer(li));
    auto strip = [](const nn::Tensor<double>& t) {
        return nn::Tensor<double>(nn::Shape(t.shape().begin() + 1, t.shape().end()), std::vector<double>(t.values().begin(), t.values().end()));
    };
    const bool relu_next = li + 1 < net.size() && net.layer(li + 1).kind() == "relu";
    return {li, strip(net.activation(li)), strip(net.activation(li + (relu_next ? 2 : 1))), conv.K, conv.bias};
}

// Cells above fraction * (max over all maps). Non-positive maxima give 0.
inline std::size_t count_activated(std::span<const double> maps, double fraction = 0.5) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw InputError("activation fraction must be in (0, 1]");
    if (maps.empty()) return 0;
    const double mx = *std::max_element(maps.begin(), maps.end());
    if (!(mx > 0.0)) return 0;
    const double tau = fraction * mx;
    return static_cast<std::size_t>(std::count_if(maps.begin(), maps.end(), [&](double v) { return v > tau; }));
}

// ---------------------------------------------------------------------------
// Bank directory: <station>.bnnm per station, <station>.curve.csv, bank.json.

inline json model_meta(const StationModel& m) {
    return {{"station", {{"side", to_string(m.station.side)}, {"cx", m.station.cx}, {"name", m.station.name()}}},
            {"arch", to_json(m.arch)},
            {"label_spec", to_json(m.label_spec)},
            {"best_epoch", m.best_epoch},
            {"best_val_accuracy", m.best_val_accuracy},
            {"seed", m.seed}};
}

inline void write_curve(std::ostream& os, const std::vector<EpochStats>& curve) {
    os << "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
    char buf[160];
    for (const auto& e : curve) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,%.9g\n", e.epoch, e.train_loss, e.train_accuracy, e.val_loss, e.val_accuracy);
        os << buf;
    }
}

inline void save_bank(const std::filesystem::path& dir, ClassifierBank& bank, const json& extra = json::object()) {
    std::filesystem::create_directories(dir);
    json stations = json::array();
    for (auto& m : bank.models) {
        const auto name = m.station.name();
        nn::save_model((dir / (name + ".bnnm")).string(), m.net, model_meta(m));
        std::ofstream curve(dir / (name + ".curve.csv"));
        write_curve(curve, m.curve);
        stations.push_back({{"name", name}, {"file", name + ".bnnm"}, {"n_classes", m.arch.n_classes},
                            {"best_epoch", m.best_epoch}, {"best_val_accuracy", m.best_val_accuracy}, {"epochs_run", m.curve.size()}});
    }
    json manifest = bank.manifest;
    manifest["stations"] = stations;
    for (auto& [k, v] : extra.items()) manifest[k] = v;
    bank.manifest = manifest;
    std::ofstream os(dir / "bank.json");
    os << manifest.dump(2) << '\n';
    if (!os) throw Error("failed writing " + (dir / "bank.json").string());
}

inline ClassifierBank load_bank(const std::filesystem::path& dir) {
    std::ifstream is(dir / "bank.json");
    if (!is) throw InputError("no bank manifest in " + dir.string());
    ClassifierBank bank;
    try {
        bank.manifest = json::parse(is);
        bank.arch = arch_from_json(bank.manifest.at("arch"));
        for (const auto& s : bank.manifest.at("stations")) {
            auto loaded = nn::load_model<double>((dir / s.at("file").get<std::string>()).string());
            StationModel m;
            const auto& meta = loaded.meta;
            m.station = {side_from_string(meta.at("station").at("side").get<std::string>()), meta.at("station").at("cx").get<double>()};
            m.arch = arch_from_json(meta.at("arch"));
            m.label_spec = label_spec_from_json(meta.at("label_spec"));
            m.best_epoch = meta.at("best_epoch").get<std::size_t>();
            m.best_val_accuracy = meta.at("best_val_accuracy").get<double>();
            m.seed = meta.at("seed").get<std::uint64_t>();
            m.net = std::move(loaded.network);
            if (nn::shape_size(m.net.output_shape()) != m.label_spec.n_labels)
                throw FormatError("model " + m.station.name() + " output width does not match its label count");
            bank.models.push_back(std::move(m));
        }
    } catch (const json::exception& e) {
        throw FormatError("bad bank manifest in " + dir.string() + ": " + e.what());
    }
    return bank;
}

}  // namespace bladenet
