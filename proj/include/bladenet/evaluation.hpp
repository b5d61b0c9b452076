#pragma once

// Label-adjacency accuracy: an exact label counts as "1%", the neighbouring
// label as "3%", and k labels away as (2k + 1)%.

#include "bladenet/models.hpp"

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

namespace bladenet {

inline std::size_t label_distance(std::size_t a, std::size_t b) noexcept { return a > b ? a - b : b - a; }

// Error class in percent: 2k + 1.
inline std::size_t adjacency_error(std::size_t pred, std::size_t truth) noexcept { return 2 * label_distance(pred, truth) + 1; }

inline std::string error_tag(std::size_t pred, std::size_t truth) { return std::to_string(adjacency_error(pred, truth)) + "%"; }

struct StationResult {
    Station station;
    std::size_t samples = 0;
    std::size_t exact = 0;     // k = 0
    std::size_t adjacent = 0;  // k <= 1
    double within_1pct = 0.0;
    double within_3pct = 0.0;
};

struct AdjacencyResult {
    std::vector<StationResult> stations;
    std::size_t samples = 0;
    double within_1pct = 0.0;  // sample-weighted over stations
    double within_3pct = 0.0;
    double uniform_within_1pct = 0.0;  // plain mean of station fractions
    double uniform_within_3pct = 0.0;
};

// preds[s][i] and truths[s][i] are the labels of sample i at station s.
inline AdjacencyResult evaluate_predictions(std::span<const Station> stations, const std::vector<std::vector<std::size_t>>& preds,
                                            const std::vector<std::vector<std::size_t>>& truths) {
    if (stations.size() != preds.size() || preds.size() != truths.size()) throw InputError("evaluate: station count mismatch");
    AdjacencyResult r;
    std::size_t exact = 0, adjacent = 0;
    for (std::size_t s = 0; s < stations.size(); ++s) {
        if (preds[s].size() != truths[s].size()) throw InputError("evaluate: prediction count mismatch at " + stations[s].name());
        if (preds[s].empty()) throw InputError("evaluate: no samples at station " + stations[s].name());
        StationResult sr{stations[s], preds[s].size()};
        for (std::size_t i = 0; i < preds[s].size(); ++i) {
            const auto k = label_distance(preds[s][i], truths[s][i]);
            sr.exact += k == 0;
            sr.adjacent += k <= 1;
        }
        sr.within_1pct = static_cast<double>(sr.exact) / static_cast<double>(sr.samples);
        sr.within_3pct = static_cast<double>(sr.adjacent) / static_cast<double>(sr.samples);
        exact += sr.exact;
        adjacent += sr.adjacent;
        r.samples += sr.samples;
        r.uniform_within_1pct += sr.within_1pct;
        r.uniform_within_3pct += sr.within_3pct;
        r.stations.push_back(sr);
    }
    if (r.stations.empty()) throw InputError("evaluate: no stations");
    r.within_1pct = static_cast<double>(exact) / static_cast<double>(r.samples);
    r.within_3pct = static_cast<double>(adjacent) / static_cast<double>(r.samples);
    r.uniform_within_1pct /= static_cast<double>(r.stations.size());
    r.uniform_within_3pct /= static_cast<double>(r.stations.size());
    return r;
}

inline void require_matching_spec(const StationModel& m, const StationDataset& sd) {
    const auto& a = m.label_spec;
    const auto& b = sd.label_spec;
    if (a.n_labels != b.n_labels || a.cp_min != b.cp_min || a.interval != b.interval)
        throw InputError("model for " + m.station.name() + " was trained on different labels than this dataset");
}

struct BankPredictions {
    std::vector<Station> stations;
    std::vector<std::vector<std::size_t>> records;  // dataset record index per sample
    std::vector<std::vector<std::size_t>> preds;
    std::vector<std::vector<std::size_t>> truths;
};

inline BankPredictions predict_bank(ClassifierBank& bank, const DatasetBank& data, Split which) {
    BankPredictions out;
    for (auto& m : bank.models) {
        const auto& sd = data.station(m.station);
        require_matching_spec(m, sd);
        const auto idx = sd.indices(data.split_assignment, which);
        if (idx.empty()) throw InputError(std::string("split '") + to_string(which) + "' is empty");
        std::vector<std::size_t> recs, truth;
        for (auto i : idx) {
            recs.push_back(sd.samples[i].record);
            truth.push_back(sd.samples[i].label);
        }
        out.stations.push_back(m.station);
        out.preds.push_back(predict_records(m.net, data, recs));
        out.records.push_back(std::move(recs));
        out.truths.push_back(std::move(truth));
    }
    return out;
}

inline AdjacencyResult evaluate_bank(ClassifierBank& bank, const DatasetBank& data, Split which = Split::test) {
    const auto p = predict_bank(bank, data, which);
    return evaluate_predictions(p.stations, p.preds, p.truths);
}

// Fraction of the most frequent true label in the split: the score of the
// best constant predictor.
inline double majority_baseline(const StationDataset& sd, std::span<const Split> assignment, Split which) {
    std::vector<std::size_t> hist(sd.label_spec.n_labels);
    std::size_t n = 0;
    for (auto i : sd.indices(assignment, which)) {
        ++hist[sd.samples[i].label];
        ++n;
    }
    if (!n) throw InputError("majority_baseline: empty split");
    return static_cast<double>(*std::max_element(hist.begin(), hist.end())) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// CSV reports. Fractions are printed with six decimals.

struct Figure9Row {
    Station station;
    double within_1pct = 0.0;
    double within_3pct = 0.0;
};

inline std::vector<Figure9Row> figure9_series(const AdjacencyResult& r) {
    std::vector<Figure9Row> rows;
    for (const auto& s : r.stations) rows.push_back({s.station, s.within_1pct, s.within_3pct});
    return rows;
}

inline void write_figure9_csv(std::ostream& os, const AdjacencyResult& r) {
    os << "side,cx,within_1pct,within_3pct\n";
    char buf[128];
    for (const auto& row : figure9_series(r)) {
        std::snprintf(buf, sizeof buf, "%s,%.2f,%.6f,%.6f\n", to_string(row.station.side), row.station.cx, row.within_1pct, row.within_3pct);
        os << buf;
    }
}

struct Table2Row {
    ArchSpec arch;
    AdjacencyResult result;
};

inline void write_table2_csv(std::ostream& os, const std::vector<Table2Row>& rows) {
    os << "arch,depth,within_1pct,within_3pct,uniform_within_1pct,uniform_within_3pct,samples\n";
    char buf[192];
    for (const auto& row : rows) {
        const auto& r = row.result;
        std::snprintf(buf, sizeof buf, "%s,%zu,%.6f,%.6f,%.6f,%.6f,%zu\n", to_string(row.arch.kind),
                      row.arch.kind == ArchKind::nn2 ? std::size_t{0} : row.arch.conv_depth, r.within_1pct, r.within_3pct,
                      r.uniform_within_1pct, r.uniform_within_3pct, r.samples);
        os << buf;
    }
}

struct ExampleRow {
    Station station;
    std::size_t true_label = 0;
    std::size_t predicted_label = 0;
    double cp_solver = 0.0;  // unbinned solver value at the station
    double cp_true_center = 0.0;
    double cp_predicted_center = 0.0;
    std::string tag;
};

// One row per station for one blade. The blade must be in `which`.
inline std::vector<ExampleRow> example_report(ClassifierBank& bank, const DatasetBank& data, std::uint32_t blade_id,
                                              Split which = Split::test) {
    const std::size_t rec = data.find_record(blade_id);
    if (data.split_assignment[rec] != which)
        throw InputError("blade " + std::to_string(blade_id) + " is in the " + to_string(data.split_assignment[rec]) + " split, not " + to_string(which));
    std::vector<ExampleRow> rows;
    for (auto& m : bank.models) {
        const auto& sd = data.station(m.station);
        require_matching_spec(m, sd);
        const auto& s = sd.samples[rec];
        const auto pred = predict(m, data.records[rec].matrix);
        rows.push_back({m.station, s.label, pred, s.cp, label_to_cp_center(s.label, sd.label_spec), label_to_cp_center(pred, sd.label_spec),
                        error_tag(pred, s.label)});
    }
    return rows;
}

inline void write_example_csv(std::ostream& os, const std::vector<ExampleRow>& rows) {
    os << "side,cx,true_label,predicted_label,cp_solver,cp_true_center,cp_predicted_center,error_class\n";
    char buf[192];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%s,%.2f,%zu,%zu,%.6f,%.6f,%.6f,%s\n", to_string(r.station.side), r.station.cx, r.true_label,
                      r.predicted_label, r.cp_solver, r.cp_true_center, r.cp_predicted_center, r.tag.c_str());
        os << buf;
    }
}

}  // namespace bladenet
