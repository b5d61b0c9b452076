#pragma once

#include "bladenet/dataset.hpp"

namespace testsupport {

using namespace bladenet;

// Solved and encoded library of 3 x 2 x 2 per side (144 blades).
inline std::vector<BladeRecord> small_records(std::uint64_t seed = 1) {
    SideSweep s{{0.3, 0.5, 0.7}, {-0.02, 0.02}, {0.1, 0.2}};
    const auto lib = generate_library(build_datum(DatumSpec{}), LibrarySweep{s, s, 0.0, 0}, seed);
    const auto norm = library_normalization(lib.profiles);
    std::vector<BladeRecord> recs(lib.profiles.size());
    parallel_for(recs.size(), 4, [&](std::size_t i) {
        recs[i].profile = lib.profiles[i];
        recs[i].cp = solve_cascade(lib.profiles[i], FlowConditions{});
        recs[i].matrix = encode(lib.profiles[i], norm);
    });
    return recs;
}

inline const DatasetBank& small_bank() {
    static const DatasetBank bank = [] {
        auto recs = small_records();
        std::vector<BladeProfile> ps;
        for (const auto& r : recs) ps.push_back(r.profile);
        DatasetOptions opt;
        opt.split_seed = 4;
        return build_dataset(std::move(recs), library_normalization(ps), opt);
    }();
    return bank;
}

}  // namespace testsupport
