#include "bladenet/models.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace bladenet;
using testsupport::small_bank;

namespace {

ArchSpec arch(ArchKind k, std::size_t depth = 16, std::size_t classes = 5) {
    ArchSpec a;
    a.kind = k;
    a.conv_depth = depth;
    a.n_classes = classes;
    return a;
}

// Shapes of the conv and pool outputs, in order.
std::vector<nn::Shape> spatial_trace(const Net& net) {
    std::vector<nn::Shape> out;
    for (std::size_t i = 0; i < net.size(); ++i)
        if (net.layer(i).kind() == "conv2d" || net.layer(i).kind() == "maxpool2x2") out.push_back(net.layer_shape(i));
    return out;
}

TrainHyper quick(std::size_t epochs) {
    TrainHyper h;
    h.max_epochs = epochs;
    h.batch_size = 16;
    return h;
}

std::filesystem::path scratch_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("bladenet_test_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(p);
    return p;
}

}  // namespace

TEST(Architecture, Cnn2FirstLayerAndTrace) {
    for (std::size_t d : {8u, 16u, 32u, 64u}) {
        const auto net = build(arch(ArchKind::cnn2_nn2, d));
        const auto convs = conv_layers(net);
        ASSERT_EQ(convs.size(), 2u);
        EXPECT_EQ(net.layer_shape(convs[0]), (nn::Shape{d, 20, 20}));
        const auto t = spatial_trace(net);
        ASSERT_EQ(t.size(), 4u);
        EXPECT_EQ(t[0][1], 20u);
        EXPECT_EQ(t[1][1], 10u);
        EXPECT_EQ(t[2][1], 10u);
        EXPECT_EQ(t[3][1], 5u);
    }
}

TEST(Architecture, Cnn4Trace) {
    const auto net = build(arch(ArchKind::cnn4_nn2, 8));
    EXPECT_EQ(conv_layers(net).size(), 4u);
    std::vector<std::size_t> sides;
    for (const auto& s : spatial_trace(net)) sides.push_back(s[1]);
    // conv 20, conv 20, pool 10, conv 10, conv 10, pool 5
    EXPECT_EQ(sides, (std::vector<std::size_t>{20, 20, 10, 10, 10, 5}));
    EXPECT_EQ(net.layer_shape(conv_layers(net).back()), (nn::Shape{8, 10, 10}));
}

TEST(Architecture, OutputWidthIsLabelCount) {
    for (ArchKind k : {ArchKind::nn2, ArchKind::cnn2_nn2, ArchKind::cnn4_nn2})
        for (std::size_t c : {1u, 3u, 32u}) {
            const auto net = build(arch(k, 8, c));
            EXPECT_EQ(net.output_shape(), (nn::Shape{c}));
        }
    // 400 -> 256 -> K fully connected
    auto nn2 = build(arch(ArchKind::nn2, 16, 32));
    EXPECT_EQ(nn2.parameter_count(), 400u * 256u + 256u + 256u * 32u + 32u);
}

TEST(Architecture, LabelsAndValidation) {
    EXPECT_EQ(arch(ArchKind::nn2).label(), "nn2");
    EXPECT_EQ(arch(ArchKind::cnn4_nn2, 32).label(), "cnn4_nn2_d32");
    EXPECT_EQ(arch_from_string("cnn2_nn2"), ArchKind::cnn2_nn2);
    EXPECT_THROW(arch_from_string("cnn3"), InputError);
    EXPECT_THROW(build(arch(ArchKind::cnn2_nn2, 12)), InputError);
    EXPECT_NO_THROW(build(arch(ArchKind::nn2, 12)));
    const auto a = arch(ArchKind::cnn4_nn2, 64, 9);
    const auto b = arch_from_json(to_json(a));
    EXPECT_EQ(b.kind, a.kind);
    EXPECT_EQ(b.conv_depth, 64u);
    EXPECT_EQ(b.n_classes, 9u);
}

TEST(Architecture, HyperJsonRoundTrip) {
    TrainHyper h;
    h.optimizer.kind = "adam";
    h.optimizer.learning_rate = 0.003;
    h.max_epochs = 7;
    h.early_stopping = false;
    const auto back = hyper_from_json(to_json(h));
    EXPECT_EQ(back.optimizer.kind, "adam");
    EXPECT_EQ(back.optimizer.learning_rate, 0.003);
    EXPECT_EQ(back.max_epochs, 7u);
    EXPECT_FALSE(back.early_stopping);
    EXPECT_THROW(hyper_from_json({{"max_epochs", 0}}), InputError);
}

TEST(Training, FitsStandardizerOnTrainSplitOnly) {
    const auto& bank = small_bank();
    auto m = train_station(arch(ArchKind::nn2), bank, 12, quick(1), 5);
    const auto& sd = bank.stations[12];
    const auto train = sd.indices(bank.split_assignment, Split::train);
    const auto& st = standardizer(m.net);
    for (std::size_t cell : {0u, 57u, 250u, 399u}) {
        double mean = 0.0;
        for (auto i : train) mean += bank.records[sd.samples[i].record].matrix.cells[cell];
        mean /= static_cast<double>(train.size());
        EXPECT_NEAR(st.mean[cell], mean, 1e-12);
    }
    // leading-edge cells are identical across the library
    EXPECT_EQ(st.inv_std[0], 0.0);
}

TEST(Training, DeterministicAndKeepsBestEpoch) {
    const auto& bank = small_bank();
    auto a = train_station(arch(ArchKind::cnn2_nn2, 8), bank, 13, quick(6), 21);
    auto b = train_station(arch(ArchKind::cnn2_nn2, 8), bank, 13, quick(6), 21);
    ASSERT_EQ(a.curve.size(), b.curve.size());
    for (std::size_t e = 0; e < a.curve.size(); ++e) EXPECT_EQ(a.curve[e].train_loss, b.curve[e].train_loss);
    auto pa = a.net.params(), pb = b.net.params();
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(*pa[i].value, *pb[i].value);

    EXPECT_EQ(a.arch.n_classes, bank.stations[13].label_spec.n_labels);
    ASSERT_GE(a.best_epoch, 1u);
    double best = 0.0;
    for (const auto& e : a.curve) best = std::max(best, e.val_accuracy);
    EXPECT_EQ(a.best_val_accuracy, best);
    EXPECT_EQ(a.curve[a.best_epoch - 1].val_accuracy, best);
    // the restored parameters reproduce the best validation accuracy
    const auto& sd = bank.stations[13];
    const auto val = sd.indices(bank.split_assignment, Split::validation);
    std::vector<std::size_t> recs;
    for (auto i : val) recs.push_back(sd.samples[i].record);
    const auto pred = predict_records(a.net, bank, recs);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < val.size(); ++i) ok += pred[i] == sd.samples[val[i]].label;
    EXPECT_DOUBLE_EQ(static_cast<double>(ok) / static_cast<double>(val.size()), best);

    auto c = train_station(arch(ArchKind::cnn2_nn2, 8), bank, 13, quick(2), 22);
    EXPECT_NE(c.curve[0].train_loss, a.curve[0].train_loss);
}

TEST(Training, EarlyStoppingHonoursPatience) {
    const auto& bank = small_bank();
    TrainHyper h = quick(40);
    h.patience = 2;
    h.optimizer.learning_rate = 1e-7;
    const auto m = train_station(arch(ArchKind::nn2), bank, 2, h, 3);
    EXPECT_LT(m.curve.size(), 40u);
    EXPECT_EQ(m.curve.size(), m.best_epoch + 2);
}

TEST(Training, LearnsAboveMajorityBaseline) {
    const auto& bank = small_bank();
    TrainHyper h = quick(30);
    auto m = train_station(arch(ArchKind::nn2), bank, 12, h, 8);
    const auto& sd = bank.stations[12];
    const auto train = sd.indices(bank.split_assignment, Split::train);
    std::vector<std::size_t> hist(sd.label_spec.n_labels);
    for (auto i : train) ++hist[sd.samples[i].label];
    const double majority = static_cast<double>(*std::max_element(hist.begin(), hist.end())) / static_cast<double>(train.size());
    EXPECT_GT(m.curve[m.best_epoch - 1].train_accuracy, majority);
}

TEST(Training, BankIsIndependentOfThreadCount) {
    const auto& bank = small_bank();
    const auto a = train_bank(arch(ArchKind::nn2), bank, quick(2), 4, 1);
    const auto b = train_bank(arch(ArchKind::nn2), bank, quick(2), 4, 3);
    ASSERT_EQ(a.models.size(), 18u);
    for (std::size_t i = 0; i < a.models.size(); ++i) {
        EXPECT_EQ(a.models[i].station, bank.stations[i].station);
        EXPECT_EQ(a.models[i].seed, b.models[i].seed);
        EXPECT_EQ(a.models[i].curve.back().train_loss, b.models[i].curve.back().train_loss);
    }
    EXPECT_EQ(station_seed(4, bank.stations[0].station), a.models[0].seed);
    EXPECT_NE(a.models[0].seed, a.models[1].seed);
}

TEST(BankIO, SaveLoadRoundTrip) {
    const auto& bank = small_bank();
    auto trained = train_bank(arch(ArchKind::cnn2_nn2, 8), bank, quick(1), 2);
    const auto dir = scratch_dir("bank");
    save_bank(dir, trained, {{"note", "x"}});
    for (const auto& st : bank.stations) {
        EXPECT_TRUE(std::filesystem::exists(dir / (st.station.name() + ".bnnm")));
        EXPECT_TRUE(std::filesystem::exists(dir / (st.station.name() + ".curve.csv")));
    }
    auto loaded = load_bank(dir);
    EXPECT_EQ(loaded.arch.label(), "cnn2_nn2_d8");
    EXPECT_EQ(loaded.manifest.at("note"), "x");
    ASSERT_EQ(loaded.models.size(), 18u);
    const auto& m0 = loaded.models[5];
    EXPECT_EQ(m0.label_spec.n_labels, bank.stations[5].label_spec.n_labels);
    EXPECT_EQ(m0.best_epoch, trained.models[5].best_epoch);

    // a second save of the loaded bank is byte-identical
    const auto dir2 = scratch_dir("bank2");
    save_bank(dir2, loaded);
    auto slurp = [](const std::filesystem::path& p) {
        std::ifstream is(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    };
    for (const auto& st : bank.stations) EXPECT_EQ(slurp(dir / (st.station.name() + ".bnnm")), slurp(dir2 / (st.station.name() + ".bnnm")));

    std::filesystem::remove(dir / "suction_0.40.bnnm");
    EXPECT_THROW(load_bank(dir), InputError);
    EXPECT_THROW(load_bank(dir / "missing"), InputError);
    std::filesystem::remove_all(dir);
    std::filesystem::remove_all(dir2);
}

TEST(Inspection, FeatureMapsMatchDirectConvolution) {
    const auto& bank = small_bank();
    for (std::size_t d : {8u, 16u}) {
        auto net = build(arch(ArchKind::cnn4_nn2, d, 4), 9);
        for (std::size_t ordinal : {1u, 2u, 0u}) {
            const auto& x = bank.records[3].matrix;
            const auto fm = inspect_activations(net, x, ordinal);
            const std::size_t C = fm.input.dim(0), H = fm.input.dim(1), W = fm.input.dim(2);
            ASSERT_EQ(fm.maps.shape(), (nn::Shape{d, H, W}));
            for (std::size_t k = 0; k < d; ++k)
                for (std::size_t r = 0; r < H; ++r)
                    for (std::size_t c = 0; c < W; ++c) {
                        double s = fm.bias[k];
                        for (std::size_t ch = 0; ch < C; ++ch)
                            for (std::size_t ky = 0; ky < 5; ++ky)
                                for (std::size_t kx = 0; kx < 5; ++kx) {
                                    const long iy = static_cast<long>(r + ky) - 2, ix = static_cast<long>(c + kx) - 2;
                                    if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W)) continue;
                                    s += fm.kernels[((k * C + ch) * 5 + ky) * 5 + kx] * fm.input[(ch * H + iy) * W + ix];
                                }
                        EXPECT_NEAR(fm.maps[(k * H + r) * W + c], std::max(0.0, s), 1e-12);
                    }
        }
    }
    auto nn2 = build(arch(ArchKind::nn2));
    EXPECT_THROW(inspect_activations(nn2, bank.records[0].matrix, 0), InputError);
    auto c2 = build(arch(ArchKind::cnn2_nn2, 8));
    EXPECT_THROW(inspect_activations(c2, bank.records[0].matrix, 3), RangeError);
}

TEST(Inspection, ActivatedCellCount) {
    const std::vector<double> maps{0.0, 1.0, 2.0, 4.0, 2.5, -1.0};
    EXPECT_EQ(count_activated(maps, 0.5), 2u);
    EXPECT_EQ(count_activated(maps, 1.0), 0u);
    EXPECT_EQ(count_activated(maps, 0.2), 4u);
    const std::vector<double> dead{0.0, 0.0};
    EXPECT_EQ(count_activated(dead), 0u);
    EXPECT_THROW(count_activated(maps, 0.0), InputError);
}
