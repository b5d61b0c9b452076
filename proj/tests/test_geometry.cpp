#include "bladenet/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

using namespace bladenet;

namespace {

// Metal angle from a finite-difference slope of camber points, positive toward -y.
double slope_angle_deg(const BladeProfile& p, std::size_t i, std::size_t j) {
    const auto xs = detail::cosine_stations(p.points_per_side());
    const double dx = xs[j] - xs[i];
    const double dy = p.camber[j] - p.camber[i];
    return std::atan2(-dy, dx) * 180.0 / std::numbers::pi;
}

PerturbSpec bump(Side side, double c, double a, double w) { return PerturbSpec{side, {c}, {a}, {w}}; }

std::string serialize(const std::vector<BladeProfile>& ps) {
    std::ostringstream os;
    for (const auto& p : ps) write_profile(os, p);
    return os.str();
}

}  // namespace

TEST(Datum, DefaultSpecHas400PointsAndIsValid) {
    const auto p = build_datum(DatumSpec{});
    EXPECT_EQ(p.total_points(), 400u);
    EXPECT_EQ(p.points_per_side(), 200u);
    EXPECT_FALSE(check_profile(p).has_value());
}

TEST(Datum, CamberTangentsMatchMetalAngles) {
    const auto p = build_datum(DatumSpec{});
    const std::size_t n = p.points_per_side();
    EXPECT_NEAR(slope_angle_deg(p, 0, 1), 41.08, 0.1);
    EXPECT_NEAR(slope_angle_deg(p, n - 2, n - 1), 69.25, 0.1);
}

TEST(Datum, ZeroThicknessCollapsesOntoCamber) {
    DatumSpec s;
    s.max_thickness_to_chord = 0.0;
    const auto p = build_datum(s);
    for (std::size_t i = 0; i < p.points_per_side(); ++i) {
        EXPECT_EQ(p.pressure_side[i].y, p.suction_side[i].y);
        EXPECT_EQ(p.pressure_side[i].y, p.camber[i]);
    }
}

TEST(Datum, RejectsInvalidSpecs) {
    DatumSpec s;
    s.max_thickness_to_chord = 0.5;
    EXPECT_THROW(build_datum(s), InputError);
    s = {};
    s.pitch_to_chord = 0.0;
    EXPECT_THROW(build_datum(s), InputError);
    s = {};
    s.exit_metal_angle = 89.0;
    EXPECT_THROW(build_datum(s), InputError);
}

TEST(Datum, MaxThicknessIsTwelvePercentNearThirtyPercentChord) {
    const auto p = build_datum(DatumSpec{});
    const auto xs = detail::cosine_stations(p.points_per_side());
    double best = 0.0, at = 0.0;
    for (std::size_t i = 0; i < p.points_per_side(); ++i) {
        // vertical gap times cos(theta) is the thickness normal to the camber line
        const double theta = (41.08 + (69.25 - 41.08) * (1.0 - std::pow(1.0 - xs[i], 1.18))) * std::numbers::pi / 180.0;
        const double t = (p.suction_side[i].y - p.pressure_side[i].y) * std::cos(theta);
        if (t > best) best = t, at = xs[i];
    }
    EXPECT_NEAR(best, 0.12, 1e-3);
    EXPECT_NEAR(at, 0.3, 0.02);
}

TEST(Perturb, ZeroAmplitudeIsBitwiseIdentity) {
    const auto d = build_datum(DatumSpec{});
    const auto p = perturb(d, bump(Side::suction, 0.5, 0.0, 0.2));
    EXPECT_TRUE(p.same_shape(d));
    const auto q = perturb(d, PerturbSpec{Side::pressure, {}, {}, {}});
    EXPECT_TRUE(q.same_shape(d));
}

TEST(Perturb, SingleSuctionBumpMatchesIndependentOracle) {
    const auto d = build_datum(DatumSpec{});
    const auto p = perturb(d, bump(Side::suction, 0.5, 0.01, 0.2));
    std::size_t arg = 0, oracle_arg = 0;
    double mx = -1.0, oracle_mx = -1.0;
    for (std::size_t i = 0; i < d.points_per_side(); ++i) {
        const double x = d.suction_side[i].x;
        const double disp = p.suction_side[i].y - d.suction_side[i].y;
        // support [0.3, 0.7] lies inside the fully weighted window
        const double u = (x - 0.5) / 0.2;
        const double oracle = std::abs(u) < 1.0 ? 0.01 * std::pow(std::cos(0.5 * std::numbers::pi * u), 2) : 0.0;
        EXPECT_NEAR(disp, oracle, 1e-12) << "point " << i;
        if (disp > mx) mx = disp, arg = i;
        if (oracle > oracle_mx) oracle_mx = oracle, oracle_arg = i;
    }
    EXPECT_EQ(arg, oracle_arg);
    EXPECT_NEAR(mx, oracle_mx, 1e-6);
    // the node nearest x/c = 0.5
    std::size_t nearest = 0;
    for (std::size_t i = 1; i < d.points_per_side(); ++i)
        if (std::abs(d.suction_side[i].x - 0.5) < std::abs(d.suction_side[nearest].x - 0.5)) nearest = i;
    EXPECT_EQ(arg, nearest);
    EXPECT_NEAR(mx, 0.01, 1e-4);
}

TEST(Perturb, OtherSideUnchanged) {
    const auto d = build_datum(DatumSpec{});
    const auto p = perturb(d, bump(Side::pressure, 0.4, 0.02, 0.15));
    EXPECT_EQ(p.suction_side, d.suction_side);
    EXPECT_NE(p.pressure_side, d.pressure_side);
}

TEST(Perturb, LeadingAndTrailingEdgesStayPutForRandomBumps) {
    const auto d = build_datum(DatumSpec{});
    Rng rng(42);
    int accepted = 0;
    for (int trial = 0; trial < 300; ++trial) {
        PerturbSpec s{rng.uniform() < 0.5 ? Side::pressure : Side::suction, {}, {}, {}};
        const int k = 1 + static_cast<int>(rng.below(3));
        for (int j = 0; j < k; ++j) {
            s.bump_centers.push_back(rng.uniform(0.051, 0.949));
            s.bump_amplitudes.push_back(rng.uniform(-0.02, 0.02));
            s.bump_widths.push_back(rng.uniform(0.05, 1.0));
        }
        BladeProfile p;
        try {
            p = perturb(d, s);
        } catch (const InputError&) {
            continue;
        }
        ++accepted;
        for (Side side : {Side::pressure, Side::suction}) {
            EXPECT_LT(std::abs(p.side(side).front().y - d.side(side).front().y), 1e-4);
            EXPECT_LT(std::abs(p.side(side).back().y - d.side(side).back().y), 1e-4);
        }
        EXPECT_FALSE(check_profile(p).has_value());
    }
    EXPECT_GT(accepted, 200);
}

TEST(Perturb, LinearInAmplitude) {
    const auto d = build_datum(DatumSpec{});
    for (double c : {0.2, 0.5, 0.8})
        for (double w : {0.05, 0.2, 0.6}) {
            const auto p1 = perturb(d, bump(Side::suction, c, 0.01, w));
            const auto p2 = perturb(d, bump(Side::suction, c, 0.02, w));
            for (std::size_t i = 0; i < d.points_per_side(); ++i) {
                const double f1 = p1.suction_side[i].y - d.suction_side[i].y;
                const double f2 = p2.suction_side[i].y - d.suction_side[i].y;
                EXPECT_NEAR(f2, 2.0 * f1, 1e-12);
            }
        }
}

TEST(Perturb, RejectsCrossingAndBadSpecs) {
    const auto d = build_datum(DatumSpec{});
    EXPECT_THROW(perturb(d, PerturbSpec{Side::suction, {0.85, 0.85, 0.85}, {-0.05, -0.05, -0.05}, {0.1, 0.1, 0.1}}), InputError);
    EXPECT_THROW(perturb(d, bump(Side::suction, 0.02, 0.01, 0.1)), InputError);
    EXPECT_THROW(perturb(d, bump(Side::suction, 0.5, 0.06, 0.1)), InputError);
    EXPECT_THROW(perturb(d, bump(Side::suction, 0.5, 0.01, 0.0)), InputError);
    EXPECT_THROW(perturb(d, PerturbSpec{Side::suction, {0.5}, {0.01, 0.02}, {0.1}}), InputError);
}

TEST(Perturb, FadeWindowAndBumpShape) {
    EXPECT_EQ(edge_fade(0.0), 0.0);
    EXPECT_EQ(edge_fade(0.05), 0.0);
    EXPECT_EQ(edge_fade(0.15), 1.0);
    EXPECT_EQ(edge_fade(0.5), 1.0);
    EXPECT_EQ(edge_fade(0.97), 0.0);
    EXPECT_DOUBLE_EQ(sine_bump(0.4, 0.4, 0.1), 1.0);
    EXPECT_NEAR(sine_bump(0.5, 0.4, 0.1), 0.0, 1e-20);
    EXPECT_EQ(sine_bump(0.51, 0.4, 0.1), 0.0);
    EXPECT_NEAR(sine_bump(0.45, 0.4, 0.1), 0.5, 1e-15);
}

TEST(Library, RequestedCountIsGridProduct) {
    SideSweep s{{0.3, 0.5, 0.7}, {-0.02, -0.01, 0.0, 0.01, 0.02}, {0.1, 0.2}};
    LibrarySweep sw{s, s, 0.0, 0};
    EXPECT_EQ(sw.requested(), 900u);
    const auto lib = generate_library(build_datum(DatumSpec{}), sw, 5);
    EXPECT_EQ(lib.requested, 900u);
    EXPECT_EQ(lib.profiles.size() + lib.skipped.size(), 900u);
    for (const auto& p : lib.profiles) EXPECT_FALSE(check_profile(p).has_value());
}

TEST(Library, ContainsDatumWhenZeroAmplitudeIsOnTheGrid) {
    const auto d = build_datum(DatumSpec{});
    SideSweep s{{0.5}, {0.0, 0.01}, {0.2}};
    const auto lib = generate_library(d, LibrarySweep{s, s, 0.0, 0}, 9);
    ASSERT_EQ(lib.profiles.size(), 4u);
    EXPECT_TRUE(lib.profiles[0].same_shape(d));
    EXPECT_FALSE(lib.profiles[3].same_shape(d));
}

TEST(Library, SeedDeterminesSequence) {
    const auto d = build_datum(DatumSpec{});
    SideSweep s{{0.3, 0.6}, {-0.01, 0.01}, {0.1, 0.2}};
    LibrarySweep sw{s, s, 0.3, 0};
    const auto a = generate_library(d, sw, 11), b = generate_library(d, sw, 11), c = generate_library(d, sw, 12);
    EXPECT_EQ(serialize(a.profiles), serialize(b.profiles));
    EXPECT_NE(serialize(a.profiles), serialize(c.profiles));
    const auto par = generate_library(d, sw, 11, 3);
    EXPECT_EQ(serialize(a.profiles), serialize(par.profiles));
}

TEST(Library, CountSelectsSeededSubset) {
    SideSweep s{{0.3, 0.6}, {-0.01, 0.01}, {0.1, 0.2}};
    LibrarySweep sw{s, s, 0.0, 20};
    EXPECT_EQ(sw.requested(), 20u);
    const auto idx = library_grid_indices(sw, 3);
    ASSERT_EQ(idx.size(), 20u);
    EXPECT_TRUE(std::is_sorted(idx.begin(), idx.end()));
    EXPECT_EQ(std::adjacent_find(idx.begin(), idx.end()), idx.end());
    sw.count = 65;
    EXPECT_THROW(library_grid_indices(sw, 3), InputError);
}

TEST(Library, RandomJitteredSweepsYieldValidProfiles) {
    const auto d = build_datum(DatumSpec{});
    Rng rng(77);
    for (int trial = 0; trial < 5; ++trial) {
        auto axis = [&](double lo, double hi, int n) {
            std::vector<double> v;
            for (int i = 0; i < n; ++i) v.push_back(rng.uniform(lo, hi));
            return v;
        };
        SideSweep s{axis(0.1, 0.9, 3), axis(-0.03, 0.03, 3), axis(0.05, 0.4, 2)};
        const auto lib = generate_library(d, LibrarySweep{s, s, 0.5, 0}, rng.next());
        EXPECT_EQ(lib.profiles.size() + lib.skipped.size(), 324u);
        for (const auto& p : lib.profiles) EXPECT_FALSE(check_profile(p).has_value()) << "blade " << p.id;
        for (const auto& sk : lib.skipped) EXPECT_FALSE(sk.reason.empty());
    }
}

TEST(Serialization, ProfileRoundTripAndTextExport) {
    auto d = build_datum(DatumSpec{});
    d.id = 17;
    std::stringstream ss;
    write_profile(ss, d);
    EXPECT_EQ(ss.str().size(), 4u + 400u * 16u);
    const auto back = read_profile(ss, 200);
    EXPECT_EQ(back.id, 17u);
    EXPECT_TRUE(back.same_shape(d));

    std::ostringstream txt;
    export_profile_text(txt, d);
    std::istringstream in(txt.str());
    std::string line;
    int lines = 0, suction = 0;
    while (std::getline(in, line)) {
        ++lines;
        suction += line.find("suction") != std::string::npos;
    }
    EXPECT_EQ(lines, 400);
    EXPECT_EQ(suction, 200);

    std::stringstream truncated(ss.str().substr(0, 100));
    EXPECT_THROW(read_profile(truncated, 200), FormatError);
}
