#include "bladenet/evaluation.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

#include <map>
#include <sstream>

using namespace bladenet;
using testsupport::small_bank;

namespace {

struct Truths {
    std::vector<Station> stations;
    std::vector<std::vector<std::size_t>> labels;
};

Truths test_truths(const DatasetBank& bank) {
    Truths t;
    for (const auto& sd : bank.stations) {
        t.stations.push_back(sd.station);
        std::vector<std::size_t> l;
        for (auto i : sd.indices(bank.split_assignment, Split::test)) l.push_back(sd.samples[i].label);
        t.labels.push_back(std::move(l));
    }
    return t;
}

ClassifierBank tiny_bank(std::size_t epochs = 1) {
    ArchSpec a;
    a.kind = ArchKind::nn2;
    a.fc_hidden = 16;
    TrainHyper h;
    h.max_epochs = epochs;
    return train_bank(a, small_bank(), h, 6, 2);
}

}  // namespace

TEST(Metric, AdjacencyErrorClasses) {
    EXPECT_EQ(adjacency_error(4, 4), 1u);
    EXPECT_EQ(adjacency_error(4, 5), 3u);
    EXPECT_EQ(adjacency_error(5, 4), 3u);
    for (std::size_t k = 0; k < 40; ++k) {
        EXPECT_EQ(adjacency_error(k, 0), 2 * k + 1);
        EXPECT_EQ(adjacency_error(100, 100 + k), 2 * k + 1);
    }
    EXPECT_EQ(error_tag(2, 2), "1%");
    EXPECT_EQ(error_tag(0, 1), "3%");
    EXPECT_EQ(error_tag(7, 3), "9%");
}

TEST(Metric, PerfectPredictorScoresOne) {
    const auto t = test_truths(small_bank());
    const auto r = evaluate_predictions(t.stations, t.labels, t.labels);
    EXPECT_EQ(r.within_1pct, 1.0);
    EXPECT_EQ(r.within_3pct, 1.0);
    EXPECT_EQ(r.uniform_within_1pct, 1.0);
    for (const auto& s : r.stations) EXPECT_EQ(s.within_1pct, 1.0);
}

TEST(Metric, ConstantPredictorScoresLabelFrequency) {
    const auto& bank = small_bank();
    const auto t = test_truths(bank);
    for (std::size_t c : {0u, 1u, 2u, 5u}) {
        std::vector<std::vector<std::size_t>> preds;
        for (const auto& l : t.labels) preds.emplace_back(l.size(), c);
        const auto r = evaluate_predictions(t.stations, preds, t.labels);
        std::size_t exact_all = 0, adj_all = 0, n_all = 0;
        for (std::size_t s = 0; s < t.stations.size(); ++s) {
            // counting oracle: occurrences of label c, and of c-1, c, c+1
            std::map<long, std::size_t> freq;
            for (auto l : t.labels[s]) ++freq[static_cast<long>(l)];
            const long lc = static_cast<long>(c);
            const std::size_t exact = freq[lc], adj = freq[lc - 1] + freq[lc] + freq[lc + 1];
            const double n = static_cast<double>(t.labels[s].size());
            EXPECT_DOUBLE_EQ(r.stations[s].within_1pct, static_cast<double>(exact) / n);
            EXPECT_DOUBLE_EQ(r.stations[s].within_3pct, static_cast<double>(adj) / n);
            exact_all += exact;
            adj_all += adj;
            n_all += t.labels[s].size();
        }
        EXPECT_DOUBLE_EQ(r.within_1pct, static_cast<double>(exact_all) / static_cast<double>(n_all));
        EXPECT_DOUBLE_EQ(r.within_3pct, static_cast<double>(adj_all) / static_cast<double>(n_all));
        EXPECT_EQ(r.samples, n_all);
    }
}

TEST(Metric, MajorityBaselineMatchesBestConstantPredictor) {
    const auto& bank = small_bank();
    for (const auto& sd : bank.stations) {
        std::vector<std::size_t> truth;
        for (auto i : sd.indices(bank.split_assignment, Split::test)) truth.push_back(sd.samples[i].label);
        double best = 0.0;
        for (std::size_t c = 0; c < sd.label_spec.n_labels; ++c) {
            const auto hits = static_cast<double>(std::count(truth.begin(), truth.end(), c));
            best = std::max(best, hits / static_cast<double>(truth.size()));
        }
        EXPECT_DOUBLE_EQ(majority_baseline(sd, bank.split_assignment, Split::test), best);
    }
}

TEST(Metric, AggregatesWeightedAndUniform) {
    const std::vector<Station> st{{Side::pressure, 0.5}, {Side::suction, 0.5}};
    const std::vector<std::vector<std::size_t>> truth{{0, 1, 2, 3}, {5, 5}};
    const std::vector<std::vector<std::size_t>> pred{{0, 1, 0, 4}, {5, 7}};
    const auto r = evaluate_predictions(st, pred, truth);
    EXPECT_EQ(r.stations[0].exact, 2u);
    EXPECT_EQ(r.stations[0].adjacent, 3u);
    EXPECT_EQ(r.stations[1].exact, 1u);
    EXPECT_EQ(r.stations[1].adjacent, 1u);
    EXPECT_DOUBLE_EQ(r.within_1pct, 3.0 / 6.0);
    EXPECT_DOUBLE_EQ(r.within_3pct, 4.0 / 6.0);
    EXPECT_DOUBLE_EQ(r.uniform_within_1pct, 0.5 * (0.5 + 0.5));
    EXPECT_DOUBLE_EQ(r.uniform_within_3pct, 0.5 * (0.75 + 0.5));

    EXPECT_THROW(evaluate_predictions(st, {{0}, {5, 5}}, truth), InputError);
    EXPECT_THROW(evaluate_predictions(st, {{}, {}}, {{}, {}}), InputError);
}

TEST(Reports, Figure9AndTable2Csv) {
    const std::vector<Station> st{{Side::pressure, 0.1}, {Side::suction, 0.9}};
    const auto r = evaluate_predictions(st, {{1, 2}, {3}}, {{1, 1}, {3}});
    std::ostringstream f9;
    write_figure9_csv(f9, r);
    EXPECT_EQ(f9.str(), "side,cx,within_1pct,within_3pct\npressure,0.10,0.500000,1.000000\nsuction,0.90,1.000000,1.000000\n");
    ArchSpec nn2{ArchKind::nn2}, c4{ArchKind::cnn4_nn2};
    std::ostringstream t2;
    write_table2_csv(t2, {{nn2, r}, {c4, r}});
    std::istringstream lines(t2.str());
    std::string header, a, b;
    std::getline(lines, header);
    std::getline(lines, a);
    std::getline(lines, b);
    EXPECT_EQ(header, "arch,depth,within_1pct,within_3pct,uniform_within_1pct,uniform_within_3pct,samples");
    EXPECT_EQ(a, "nn2,0,0.666667,1.000000,0.750000,1.000000,3");
    EXPECT_EQ(b.substr(0, 13), "cnn4_nn2,16,0");
}

TEST(BankEvaluation, MatchesDirectPredictions) {
    auto bank = tiny_bank();
    const auto& data = small_bank();
    const auto r = evaluate_bank(bank, data, Split::test);
    ASSERT_EQ(r.stations.size(), 18u);
    for (std::size_t s = 0; s < 18; ++s) {
        auto& m = bank.models[s];
        const auto& sd = data.station(m.station);
        std::size_t ok = 0, n = 0;
        for (auto i : sd.indices(data.split_assignment, Split::test)) {
            ok += predict(m, data.records[sd.samples[i].record].matrix) == sd.samples[i].label;
            ++n;
        }
        EXPECT_DOUBLE_EQ(r.stations[s].within_1pct, static_cast<double>(ok) / static_cast<double>(n));
    }
    EXPECT_EQ(r.samples, 18u * (data.records.size() / 6));
}

TEST(BankEvaluation, RejectsMismatchedLabelSpecs) {
    auto bank = tiny_bank();
    bank.models[4].label_spec.cp_min += 0.01;
    EXPECT_THROW(evaluate_bank(bank, small_bank(), Split::test), InputError);
}

TEST(ExampleReport, OneRowPerStationForATestBlade) {
    auto bank = tiny_bank();
    const auto& data = small_bank();
    std::size_t rec = 0;
    while (data.split_assignment[rec] != Split::test) ++rec;
    const auto id = data.records[rec].profile.id;
    const auto rows = example_report(bank, data, id, Split::test);
    ASSERT_EQ(rows.size(), 18u);
    for (std::size_t s = 0; s < rows.size(); ++s) {
        const auto& sd = data.stations[s];
        EXPECT_EQ(rows[s].true_label, sd.samples[rec].label);
        EXPECT_EQ(rows[s].cp_solver, sd.samples[rec].cp);
        EXPECT_EQ(rows[s].tag, error_tag(rows[s].predicted_label, rows[s].true_label));
        EXPECT_DOUBLE_EQ(rows[s].cp_true_center, sd.label_spec.cp_min + (static_cast<double>(rows[s].true_label) + 0.5) * 0.1);
    }
    std::ostringstream csv;
    write_example_csv(csv, rows);
    const auto text = csv.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 19);

    std::size_t train_rec = 0;
    while (data.split_assignment[train_rec] != Split::train) ++train_rec;
    EXPECT_THROW(example_report(bank, data, data.records[train_rec].profile.id, Split::test), InputError);
    EXPECT_THROW(example_report(bank, data, 424242, Split::test), InputError);
}
