#pragma once

// gen / train / eval steps shared by the command-line tool and the
// acceptance run.

#include "bladenet/config.hpp"
#include "bladenet/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace bladenet {

namespace fs = std::filesystem;

// Levels per axis for a count beyond the configured grid: n per axis with
// n^6 >= count, spread over each axis' configured range. An odd amplitude
// count is bumped to even so zero (a duplicate of the datum side) is never a level.
inline LibrarySweep enlarge_sweep(const LibrarySweep& s, std::size_t count) {
    if (count <= s.grid_size()) return s;
    std::size_t n = 2;
    while (n * n * n * n * n * n < count) ++n;
    auto spread = [](const std::vector<double>& v, std::size_t k) {
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        std::vector<double> out(k);
        for (std::size_t i = 0; i < k; ++i) out[i] = *lo + (*hi - *lo) * static_cast<double>(i) / static_cast<double>(k - 1);
        return out;
    };
    auto side = [&](const SideSweep& ss) {
        return SideSweep{spread(ss.centers, n), spread(ss.amplitudes, n + n % 2), spread(ss.widths, n)};
    };
    LibrarySweep out = s;
    out.pressure = side(s.pressure);
    out.suction = side(s.suction);
    return out;
}

inline LibrarySweep effective_sweep(const ExperimentConfig& c) { return enlarge_sweep(c.sweep, c.sweep.count); }

inline std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string file_fingerprint(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw InputError("cannot open " + p.string());
    const std::string bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return hex64(io::fnv1a(bytes));
}

inline void write_text(const fs::path& p, const std::string& text) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::binary | std::ios::trunc);
    os << text;
    if (!os) throw Error("failed writing " + p.string());
}

inline void write_config(const fs::path& dir, const ExperimentConfig& c) { write_text(dir / "config.json", to_json(c).dump(2) + "\n"); }

// ---------------------------------------------------------------------------

struct GenResult {
    DatasetBank dataset;
    std::size_t requested = 0;
    std::vector<SkippedBlade> skipped;   // invalid geometry
    std::vector<SkippedBlade> failures;  // solver errors
};

inline GenResult generate_dataset(const ExperimentConfig& c, std::ostream* log = nullptr) {
    c.validate();
    const auto sweep = effective_sweep(c);
    const auto datum = build_datum(c.datum);
    auto lib = generate_library(datum, sweep, c.library_seed, c.jobs, c.datum.chord);
    if (log) *log << "library: " << lib.requested << " requested, " << lib.profiles.size() << " valid, " << lib.skipped.size() << " skipped\n";

    const std::size_t n = lib.profiles.size();
    std::vector<std::optional<CpDistribution>> cps(n);
    std::vector<std::string> errors(n);
    std::mutex mu;
    std::size_t done = 0;
    parallel_for(n, c.jobs, [&](std::size_t i) {
        try {
            auto d = solve_cascade(lib.profiles[i], c.flow, c.solver);
            if (!(d.tangency_residual < 1e-8 * c.flow.inlet_speed))
                throw SolverError("tangency residual " + std::to_string(d.tangency_residual) + " above 1e-8", d.condition_estimate);
            cps[i] = std::move(d);
        } catch (const Error& e) {
            errors[i] = e.what();
        }
        std::lock_guard lock(mu);
        if (log && ++done % 500 == 0) *log << "  solved " << done << "/" << n << "\n" << std::flush;
    });

    GenResult out;
    out.requested = lib.requested;
    out.skipped = lib.skipped;
    std::vector<BladeRecord> records;
    std::vector<BladeProfile> kept;
    for (std::size_t i = 0; i < n; ++i) {
        if (!cps[i]) {
            out.failures.push_back({lib.profiles[i].id, errors[i]});
            if (log) *log << "solver failure, blade " << lib.profiles[i].id << ": " << errors[i] << "\n";
            continue;
        }
        kept.push_back(lib.profiles[i]);
        records.push_back({std::move(lib.profiles[i]), std::move(*cps[i]), {}});
    }
    if (static_cast<double>(out.failures.size()) > c.max_failure_fraction * static_cast<double>(lib.requested))
        throw Error(std::to_string(out.failures.size()) + " of " + std::to_string(lib.requested) + " blades failed to solve");

    const auto norm = library_normalization(kept);
    EncodeStats stats;
    for (auto& r : records) r.matrix = encode(r.profile, norm, &stats);

    json meta = {{"seed", c.library_seed},
                 {"requested", lib.requested},
                 {"grid_size", sweep.grid_size()},
                 {"jitter", sweep.jitter},
                 {"valid", n},
                 {"skipped", lib.skipped.size()},
                 {"solver_failures", out.failures.size()},
                 {"encode_clamped", stats.clamped}};
    DatasetOptions opt{c.stations(), c.label_interval, c.split_seed};
    out.dataset = build_dataset(std::move(records), norm, opt, meta);
    return out;
}

inline void write_gen_outputs(const fs::path& dir, const GenResult& g, const ExperimentConfig& c) {
    fs::create_directories(dir);
    save_dataset((dir / "dataset.bldn").string(), g.dataset);
    write_text(dir / "dataset_manifest.json", g.dataset.manifest.dump(2) + "\n");
    std::string skip;
    for (const auto& s : g.skipped) skip += std::to_string(s.id) + " geometry: " + s.reason + "\n";
    for (const auto& s : g.failures) skip += std::to_string(s.id) + " solver: " + s.reason + "\n";
    write_text(dir / "skipped.log", skip);
    write_config(dir, c);
}

// ---------------------------------------------------------------------------

inline fs::path bank_dir(const fs::path& out, const ArchSpec& a) { return out / "banks" / a.label(); }

inline ClassifierBank train_and_save(const ArchSpec& arch, const DatasetBank& data, const std::string& dataset_hash, const ExperimentConfig& c,
                                     const fs::path& dir, std::ostream* log = nullptr) {
    auto bank = train_bank(arch, data, c.train, c.train_seed, c.jobs, [&](const StationModel& m) {
        if (log)
            *log << "  " << arch.label() << " " << m.station.name() << ": " << m.arch.n_classes << " labels, best val acc "
                 << m.best_val_accuracy << " at epoch " << m.best_epoch << "/" << m.curve.size() << "\n"
                 << std::flush;
    });
    save_bank(dir, bank, {{"dataset_hash", dataset_hash}, {"dataset_records", data.records.size()}});
    write_config(dir, c);
    return bank;
}

struct EvalOutput {
    std::vector<Table2Row> rows;
    std::vector<std::string> labels;
};

// table2.csv with one row per bank, figure9_<label>.csv per bank and
// figure9.csv for the last bank listed.
inline EvalOutput evaluate_and_report(const std::vector<fs::path>& banks, const DatasetBank& data, Split which, const fs::path& out) {
    if (banks.empty()) throw InputError("no banks to evaluate");
    EvalOutput eo;
    for (const auto& dir : banks) {
        auto bank = load_bank(dir);
        auto r = evaluate_bank(bank, data, which);
        std::ostringstream f9;
        write_figure9_csv(f9, r);
        write_text(out / ("figure9_" + bank.arch.label() + ".csv"), f9.str());
        write_text(out / "figure9.csv", f9.str());
        eo.labels.push_back(bank.arch.label());
        eo.rows.push_back({bank.arch, std::move(r)});
    }
    std::ostringstream t2;
    write_table2_csv(t2, eo.rows);
    write_text(out / "table2.csv", t2.str());
    return eo;
}

}  // namespace bladenet
