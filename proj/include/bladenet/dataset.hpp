#pragma once

// Per-station Cp labels, the train/validation/test split and the dataset file.
//
// File layout (little-endian): "BLDN", u16 version, u32 length + UTF-8 JSON
// manifest, then one record per blade in id order:
//   u32 id, 2*pps float64 (x, y) pairs      (geometry)
//   2*pps float64 Cp, circulation, exit angle
//   400 float32 matrix cells

#include "bladenet/cascade.hpp"
#include "bladenet/common.hpp"
#include "bladenet/encoding.hpp"
#include "bladenet/geometry.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace bladenet {

using json = nlohmann::json;

struct Station {
    Side side = Side::pressure;
    double cx = 0.0;

    // e.g. "suction_0.40"
    std::string name() const {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%s_%.2f", to_string(side), cx);
        return buf;
    }
    bool operator==(const Station&) const = default;
};

// Nine axial stations per side, 0.1 ... 0.9, pressure side first.
inline std::vector<Station> default_stations(std::span<const double> cxs = {}) {
    static constexpr double kDefault[] = {0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    if (cxs.empty()) cxs = kDefault;
    std::vector<Station> out;
    for (Side s : {Side::pressure, Side::suction})
        for (double cx : cxs) out.push_back({s, cx});
    return out;
}

struct LabelSpec {
    Station station;
    double cp_min = 0.0;
    double interval = 0.1;
    std::size_t n_labels = 1;

    void validate() const {
        if (!(interval > 0.0) || !std::isfinite(interval)) throw InputError("LabelSpec.interval must be > 0");
        if (n_labels < 1) throw InputError("LabelSpec.n_labels must be >= 1");
        if (!std::isfinite(cp_min)) throw InputError("LabelSpec.cp_min must be finite");
    }
};

// n_labels = ceil((max - min) / interval), at least one. A relative slack of
// 1e-9 keeps exact multiples (3.2 / 0.1) from rounding up to an extra label.
inline LabelSpec compute_label_spec(std::span<const double> cp_values, double interval, Station station = {}) {
    if (cp_values.empty()) throw InputError("compute_label_spec: no Cp values");
    if (!(interval > 0.0)) throw InputError("compute_label_spec: interval must be > 0");
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (double v : cp_values) {
        if (!std::isfinite(v)) throw InputError("compute_label_spec: non-finite Cp value");
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double ratio = (hi - lo) / interval;
    const auto n = static_cast<std::size_t>(std::ceil(ratio - 1e-9 * std::max(1.0, ratio)));
    return {station, lo, interval, std::max<std::size_t>(1, n)};
}

// floor((cp - cp_min) / interval), clamped to [0, n_labels - 1]. Values
// outside [cp_min, cp_min + n_labels * interval] bump the counter.
inline std::size_t cp_to_label(double cp, const LabelSpec& spec, std::size_t* out_of_range = nullptr) {
    const double upper = spec.cp_min + static_cast<double>(spec.n_labels) * spec.interval;
    const double slack = 1e-12 * std::max(1.0, std::abs(upper));
    if (out_of_range && (cp < spec.cp_min - slack || cp > upper + slack || !std::isfinite(cp))) ++*out_of_range;
    if (!(cp > spec.cp_min)) return 0;
    const double k = std::floor((cp - spec.cp_min) / spec.interval);
    if (k >= static_cast<double>(spec.n_labels - 1)) return spec.n_labels - 1;
    return static_cast<std::size_t>(k);
}

inline double label_to_cp_center(std::size_t label, const LabelSpec& spec) {
    if (label >= spec.n_labels) throw RangeError("label " + std::to_string(label) + " outside [0, " + std::to_string(spec.n_labels) + ")");
    return spec.cp_min + (static_cast<double>(label) + 0.5) * spec.interval;
}

enum class Split : std::uint8_t { train = 0, validation = 1, test = 2 };

inline const char* to_string(Split s) noexcept {
    switch (s) {
        case Split::train: return "train";
        case Split::validation: return "validation";
        case Split::test: return "test";
    }
    return "?";
}

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "validation") return Split::validation;
    if (s == "test") return Split::test;
    throw InputError("unknown split '" + s + "'");
}

struct SplitCounts {
    std::size_t train = 0, validation = 0, test = 0;
};

inline SplitCounts split_counts(std::size_t n) noexcept {
    const std::size_t sixth = n / 6;
    return {n - 2 * sixth, sixth, sixth};
}

// Seeded shuffle of sample positions; the first floor(n/6) go to validation,
// the next floor(n/6) to test, the rest to train.
inline std::vector<Split> split(std::size_t n, std::uint64_t seed) {
    if (n < 6) throw InputError("split: need at least 6 samples, got " + std::to_string(n));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    Rng rng(derive_seed(seed, 0x5b117ULL));
    rng.shuffle(order);
    const auto counts = split_counts(n);
    std::vector<Split> out(n, Split::train);
    for (std::size_t k = 0; k < counts.validation; ++k) out[order[k]] = Split::validation;
    for (std::size_t k = 0; k < counts.test; ++k) out[order[counts.validation + k]] = Split::test;
    return out;
}

// ---------------------------------------------------------------------------

struct BladeRecord {
    BladeProfile profile;
    CpDistribution cp;
    InputMatrix matrix;
};

struct StationSample {
    std::size_t record = 0;  // index into DatasetBank::records
    std::size_t label = 0;
    double cp = 0.0;
};

struct StationDataset {
    Station station;
    LabelSpec label_spec;
    std::vector<StationSample> samples;  // aligned with DatasetBank::records

    std::vector<std::size_t> indices(std::span<const Split> assignment, Split which) const {
        std::vector<std::size_t> out;
        for (std::size_t i = 0; i < samples.size(); ++i)
            if (assignment[i] == which) out.push_back(i);
        return out;
    }
};

struct DatasetBank {
    json manifest;
    std::vector<BladeRecord> records;
    std::vector<Split> split_assignment;  // per record, shared by all stations
    std::vector<StationDataset> stations;
    Normalization normalization;
    std::size_t out_of_range_labels = 0;

    const StationDataset& station(const Station& s) const {
        for (const auto& st : stations)
            if (st.station == s) return st;
        throw InputError("dataset has no station " + s.name());
    }

    std::size_t find_record(std::uint32_t blade_id) const {
        auto it = std::lower_bound(records.begin(), records.end(), blade_id,
                                   [](const BladeRecord& r, std::uint32_t id) { return r.profile.id < id; });
        if (it == records.end() || it->profile.id != blade_id) throw InputError("no blade with id " + std::to_string(blade_id));
        return static_cast<std::size_t>(it - records.begin());
    }
};

inline json to_json(const LabelSpec& s) {
    return {{"side", to_string(s.station.side)}, {"cx", s.station.cx}, {"cp_min", s.cp_min}, {"interval", s.interval}, {"n_labels", s.n_labels}};
}

inline LabelSpec label_spec_from_json(const json& j) {
    LabelSpec s;
    s.station = {side_from_string(j.at("side").get<std::string>()), j.at("cx").get<double>()};
    s.cp_min = j.at("cp_min").get<double>();
    s.interval = j.at("interval").get<double>();
    s.n_labels = j.at("n_labels").get<std::size_t>();
    s.validate();
    return s;
}

namespace detail {

inline void attach_stations(DatasetBank& bank, const std::vector<LabelSpec>& specs) {
    bank.stations.clear();
    bank.out_of_range_labels = 0;
    for (const auto& spec : specs) {
        StationDataset sd{spec.station, spec, {}};
        sd.samples.reserve(bank.records.size());
        for (std::size_t r = 0; r < bank.records.size(); ++r) {
            const double cp = sample_cp_at(bank.records[r].cp, spec.station.side, spec.station.cx);
            sd.samples.push_back({r, cp_to_label(cp, spec, &bank.out_of_range_labels), cp});
        }
        bank.stations.push_back(std::move(sd));
    }
}

}  // namespace detail

struct DatasetOptions {
    std::vector<Station> stations = default_stations();
    double interval = 0.1;
    std::uint64_t split_seed = 0;
};

// Label specs come from the whole library, never a split subset.
inline std::vector<LabelSpec> library_label_specs(std::span<const BladeRecord> records, std::span<const Station> stations,
                                                  double interval) {
    std::vector<LabelSpec> specs;
    std::vector<double> values(records.size());
    for (const auto& st : stations) {
        for (std::size_t r = 0; r < records.size(); ++r) values[r] = sample_cp_at(records[r].cp, st.side, st.cx);
        specs.push_back(compute_label_spec(values, interval, st));
    }
    return specs;
}

inline DatasetBank build_dataset(std::vector<BladeRecord> records, const Normalization& norm, const DatasetOptions& opt,
                                 json library_meta = json::object()) {
    if (records.empty()) throw InputError("build_dataset: no blade records");
    std::sort(records.begin(), records.end(), [](const BladeRecord& a, const BladeRecord& b) { return a.profile.id < b.profile.id; });
    DatasetBank bank;
    bank.records = std::move(records);
    bank.normalization = norm;
    const auto specs = library_label_specs(bank.records, opt.stations, opt.interval);
    bank.split_assignment = split(bank.records.size(), opt.split_seed);
    detail::attach_stations(bank, specs);

    const auto counts = split_counts(bank.records.size());
    json jspecs = json::array();
    for (const auto& s : specs) jspecs.push_back(to_json(s));
    bank.manifest = {{"format", "BLDN"},
                     {"version", 1},
                     {"records", bank.records.size()},
                     {"points_per_side", bank.records.front().profile.points_per_side()},
                     {"normalization", {{"y_min", norm.y_min}, {"y_max", norm.y_max}}},
                     {"label_interval", opt.interval},
                     {"label_specs", jspecs},
                     {"split", {{"seed", opt.split_seed}, {"train", counts.train}, {"validation", counts.validation}, {"test", counts.test}}},
                     {"library", std::move(library_meta)}};
    return bank;
}

inline constexpr std::uint16_t kDatasetVersion = 1;

inline void save_dataset(std::ostream& os, const DatasetBank& bank) {
    os.write("BLDN", 4);
    io::write_pod<std::uint16_t>(os, kDatasetVersion);
    io::write_string(os, bank.manifest.dump());
    for (const auto& r : bank.records) {
        write_profile(os, r.profile);
        write_cp(os, r.cp);
        write_matrix(os, r.matrix);
    }
    if (!os) throw Error("failed writing dataset");
}

inline void save_dataset(const std::string& path, const DatasetBank& bank) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + path + " for writing");
    save_dataset(os, bank);
}

inline DatasetBank load_dataset(std::istream& is) {
    io::expect_magic(is, "BLDN");
    const auto version = io::read_pod<std::uint16_t>(is);
    if (version != kDatasetVersion)
        throw FormatError("dataset version " + std::to_string(version) + " is not supported (expected " + std::to_string(kDatasetVersion) + ")");
    DatasetBank bank;
    try {
        bank.manifest = json::parse(io::read_string(is));
    } catch (const json::exception& e) {
        throw FormatError(std::string("dataset manifest is not valid JSON: ") + e.what());
    }
    try {
        const auto n = bank.manifest.at("records").get<std::size_t>();
        const auto pps = bank.manifest.at("points_per_side").get<std::size_t>();
        bank.normalization = {bank.manifest.at("normalization").at("y_min").get<double>(),
                              bank.manifest.at("normalization").at("y_max").get<double>()};
        std::vector<LabelSpec> specs;
        for (const auto& j : bank.manifest.at("label_specs")) specs.push_back(label_spec_from_json(j));
        const auto seed = bank.manifest.at("split").at("seed").get<std::uint64_t>();

        bank.records.resize(n);
        for (auto& r : bank.records) {
            r.profile = read_profile(is, pps);
            r.cp = read_cp(is, r.profile);
            r.matrix = read_matrix(is);
        }
        if (is.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after last dataset record");
        bank.split_assignment = split(n, seed);
        detail::attach_stations(bank, specs);
    } catch (const json::exception& e) {
        throw FormatError(std::string("dataset manifest is missing fields: ") + e.what());
    }
    return bank;
}

inline DatasetBank load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw InputError("cannot open dataset " + path);
    return load_dataset(is);
}

inline std::vector<LabelSpec> label_specs(const DatasetBank& bank) {
    std::vector<LabelSpec> out;
    for (const auto& st : bank.stations) out.push_back(st.label_spec);
    return out;
}

}  // namespace bladenet
