#pragma once

// Experiment configuration. A JSON document whose keys are merged over the
// defaults; unknown keys are rejected so typos do not silently fall back.

#include "bladenet/cascade.hpp"
#include "bladenet/dataset.hpp"
#include "bladenet/geometry.hpp"
#include "bladenet/models.hpp"

#include <fstream>
#include <string>
#include <vector>

namespace bladenet {

struct ExperimentConfig {
    DatumSpec datum;
    LibrarySweep sweep = default_sweep();
    std::uint64_t library_seed = 1;
    FlowConditions flow;
    SolveOptions solver;
    std::vector<double> station_cx{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};
    double label_interval = 0.1;
    std::uint64_t split_seed = 2;
    std::vector<ArchSpec> archs = default_archs();
    TrainHyper train;
    std::uint64_t train_seed = 3;
    double activation_fraction = 0.5;
    double max_failure_fraction = 0.01;
    std::string out = "out";
    unsigned jobs = 1;

    // 4 centers x 4 amplitudes x 4 widths on each side: 64 x 64 = 4096 blades.
    static LibrarySweep default_sweep() {
        SideSweep s{{0.2, 0.4, 0.6, 0.8}, {-0.02, -0.01, 0.01, 0.02}, {0.1, 0.15, 0.2, 0.25}};
        return {s, s, 0.0, 0};
    }

    static std::vector<ArchSpec> default_archs() {
        ArchSpec nn2{ArchKind::nn2}, c2{ArchKind::cnn2_nn2}, c4{ArchKind::cnn4_nn2};
        return {nn2, c2, c4};
    }

    std::vector<Station> stations() const { return default_stations(station_cx); }

    void validate() const {
        datum.validate();
        flow.validate();
        train.validate();
        for (const auto& a : archs) a.validate();
        if (archs.empty()) throw InputError("config: archs must not be empty");
        if (station_cx.empty()) throw InputError("config: station_cx must not be empty");
        for (double cx : station_cx)
            if (!(cx >= 0.0 && cx <= 1.0)) throw InputError("config: station cx must be in [0, 1]");
        if (!(label_interval > 0.0)) throw InputError("config: label_interval must be > 0");
        if (!(activation_fraction > 0.0 && activation_fraction <= 1.0)) throw InputError("config: activation_fraction must be in (0, 1]");
        if (!(max_failure_fraction >= 0.0 && max_failure_fraction <= 1.0)) throw InputError("config: max_failure_fraction must be in [0, 1]");
        if (sweep.grid_size() == 0) throw InputError("config: sweep grid is empty");
        if (jobs < 1) throw InputError("config: jobs must be >= 1");
    }
};

inline json to_json(const SideSweep& s) { return {{"centers", s.centers}, {"amplitudes", s.amplitudes}, {"widths", s.widths}}; }

inline json to_json(const ExperimentConfig& c) {
    json archs = json::array();
    for (const auto& a : c.archs) archs.push_back({{"kind", to_string(a.kind)}, {"conv_depth", a.conv_depth}, {"fc_hidden", a.fc_hidden}, {"keep_prob", a.keep_prob}});
    const auto& d = c.datum;
    const auto& f = c.flow;
    return {
        {"datum", {{"inlet_metal_angle", d.inlet_metal_angle}, {"exit_metal_angle", d.exit_metal_angle}, {"pitch_to_chord", d.pitch_to_chord},
                   {"chord", d.chord}, {"max_thickness_to_chord", d.max_thickness_to_chord}, {"points_per_side", d.points_per_side},
                   {"camber_exponent", d.camber_exponent}}},
        {"sweep", {{"pressure", to_json(c.sweep.pressure)}, {"suction", to_json(c.sweep.suction)}, {"jitter", c.sweep.jitter}, {"count", c.sweep.count}}},
        {"library_seed", c.library_seed},
        {"flow", {{"rho", f.rho}, {"inlet_speed", f.inlet_speed}, {"inlet_static_pressure", f.inlet_static_pressure}, {"inlet_angle", f.inlet_angle},
                  {"pitch_to_chord", f.pitch_to_chord}, {"chord", f.chord}}},
        {"solver", {{"quadrature_points", c.solver.quadrature_points}, {"max_condition", c.solver.max_condition}}},
        {"station_cx", c.station_cx},
        {"label_interval", c.label_interval},
        {"split_seed", c.split_seed},
        {"archs", archs},
        {"train", to_json(c.train)},
        {"train_seed", c.train_seed},
        {"activation_fraction", c.activation_fraction},
        {"max_failure_fraction", c.max_failure_fraction},
        {"out", c.out},
        {"jobs", c.jobs},
    };
}

namespace detail {

inline void reject_unknown(const json& given, const json& known, const std::string& path) {
    if (!given.is_object()) return;
    for (auto& [k, v] : given.items()) {
        if (!known.contains(k)) throw InputError("config: unknown key '" + path + k + "'");
        if (known[k].is_object()) reject_unknown(v, known[k], path + k + ".");
    }
}

inline SideSweep side_sweep_from_json(const json& j) {
    return {j.at("centers").get<std::vector<double>>(), j.at("amplitudes").get<std::vector<double>>(), j.at("widths").get<std::vector<double>>()};
}

}  // namespace detail

inline ExperimentConfig config_from_json(const json& given) {
    if (!given.is_object()) throw InputError("config must be a JSON object");
    ExperimentConfig c;
    json j = to_json(c);
    detail::reject_unknown(given, j, "");
    j.merge_patch(given);
    try {
        const auto& d = j.at("datum");
        c.datum.inlet_metal_angle = d.at("inlet_metal_angle").get<double>();
        c.datum.exit_metal_angle = d.at("exit_metal_angle").get<double>();
        c.datum.pitch_to_chord = d.at("pitch_to_chord").get<double>();
        c.datum.chord = d.at("chord").get<double>();
        c.datum.max_thickness_to_chord = d.at("max_thickness_to_chord").get<double>();
        c.datum.points_per_side = d.at("points_per_side").get<std::size_t>();
        c.datum.camber_exponent = d.at("camber_exponent").get<double>();
        const auto& s = j.at("sweep");
        c.sweep.pressure = detail::side_sweep_from_json(s.at("pressure"));
        c.sweep.suction = detail::side_sweep_from_json(s.at("suction"));
        c.sweep.jitter = s.at("jitter").get<double>();
        c.sweep.count = s.at("count").get<std::size_t>();
        c.library_seed = j.at("library_seed").get<std::uint64_t>();
        const auto& f = j.at("flow");
        c.flow.rho = f.at("rho").get<double>();
        c.flow.inlet_speed = f.at("inlet_speed").get<double>();
        c.flow.inlet_static_pressure = f.at("inlet_static_pressure").get<double>();
        c.flow.inlet_angle = f.at("inlet_angle").get<double>();
        c.flow.pitch_to_chord = f.at("pitch_to_chord").get<double>();
        c.flow.chord = f.at("chord").get<double>();
        c.solver.quadrature_points = j.at("solver").at("quadrature_points").get<int>();
        c.solver.max_condition = j.at("solver").at("max_condition").get<double>();
        c.station_cx = j.at("station_cx").get<std::vector<double>>();
        c.label_interval = j.at("label_interval").get<double>();
        c.split_seed = j.at("split_seed").get<std::uint64_t>();
        c.archs.clear();
        for (const auto& a : j.at("archs")) c.archs.push_back(arch_from_json(a));
        c.train = hyper_from_json(j.at("train"));
        c.train_seed = j.at("train_seed").get<std::uint64_t>();
        c.activation_fraction = j.at("activation_fraction").get<double>();
        c.max_failure_fraction = j.at("max_failure_fraction").get<double>();
        c.out = j.at("out").get<std::string>();
        c.jobs = j.at("jobs").get<unsigned>();
    } catch (const json::exception& e) {
        throw InputError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw InputError("cannot open config " + path);
    json j;
    try {
        j = json::parse(is);
    } catch (const json::exception& e) {
        throw InputError("config " + path + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

}  // namespace bladenet
