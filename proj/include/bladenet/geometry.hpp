#pragma once

// Datum cascade blade, thickness perturbations and the blade library.
//
// Coordinates are blade-local: x is axial (0 at the leading edge, chord at the
// trailing edge), y is tangential. Flow angles are measured from +x and are
// positive toward -y, so the suction side (convex) lies above the pressure
// side and both design angles are positive numbers.

#include "bladenet/common.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace bladenet {

enum class Side : std::uint8_t { pressure = 0, suction = 1 };

inline const char* to_string(Side side) noexcept { return side == Side::pressure ? "pressure" : "suction"; }

inline Side side_from_string(const std::string& s) {
    if (s == "pressure") return Side::pressure;
    if (s == "suction") return Side::suction;
    throw InputError("unknown blade side '" + s + "'");
}

struct Point {
    double x = 0.0;
    double y = 0.0;
    bool operator==(const Point&) const = default;
};

struct DatumSpec {
    double inlet_metal_angle = 41.08;  // deg
    double exit_metal_angle = 69.25;   // deg
    double pitch_to_chord = 0.79;
    double chord = 1.0;
    double max_thickness_to_chord = 0.12;
    std::size_t points_per_side = 200;
    // Camber-angle law theta(x) = inlet + (exit - inlet) * (1 - (1 - x)^p):
    // p = 1 turns uniformly along the chord, p = 2 is the parabolic law that
    // straightens the rear of the blade. The default 1.18 gives an inviscid
    // exit flow angle of about 69.27 deg for the default cascade.
    double camber_exponent = 1.18;

    void validate() const {
        auto finite = [](double v) { return std::isfinite(v); };
        if (!finite(inlet_metal_angle) || std::abs(inlet_metal_angle) >= 85.0)
            throw InputError("DatumSpec.inlet_metal_angle must be finite with |angle| < 85 deg");
        if (!finite(exit_metal_angle) || std::abs(exit_metal_angle) >= 85.0)
            throw InputError("DatumSpec.exit_metal_angle must be finite with |angle| < 85 deg");
        if (!finite(pitch_to_chord) || pitch_to_chord <= 0.0) throw InputError("DatumSpec.pitch_to_chord must be > 0");
        if (!finite(chord) || chord <= 0.0) throw InputError("DatumSpec.chord must be > 0");
        // Zero thickness is accepted and yields a degenerate camber sheet.
        if (!finite(max_thickness_to_chord) || max_thickness_to_chord < 0.0 || max_thickness_to_chord >= 0.5)
            throw InputError("DatumSpec.max_thickness_to_chord must lie in [0, 0.5)");
        if (points_per_side < 3) throw InputError("DatumSpec.points_per_side must be >= 3");
        if (!finite(camber_exponent) || camber_exponent < 1.0) throw InputError("DatumSpec.camber_exponent must be >= 1");
    }
};

struct BladeProfile {
    std::uint32_t id = 0;
    // Both sides run leading edge -> trailing edge on the same x stations.
    std::vector<Point> pressure_side;
    std::vector<Point> suction_side;
    // Camber-line y at the shared x stations; thickness is measured from it.
    std::vector<double> camber;

    std::size_t points_per_side() const noexcept { return pressure_side.size(); }
    std::size_t total_points() const noexcept { return pressure_side.size() + suction_side.size(); }

    const std::vector<Point>& side(Side s) const noexcept { return s == Side::pressure ? pressure_side : suction_side; }
    std::vector<Point>& side(Side s) noexcept { return s == Side::pressure ? pressure_side : suction_side; }

    bool same_shape(const BladeProfile& other) const {
        return pressure_side == other.pressure_side && suction_side == other.suction_side;
    }
};

inline constexpr double kClosureTolerance = 1e-9;

// Returns the first violated profile invariant, or nothing when valid.
inline std::optional<std::string> check_profile(const BladeProfile& p, double chord = 1.0) {
    const auto n = p.pressure_side.size();
    if (n < 3 || p.suction_side.size() != n) return "sides must hold the same number (>= 3) of points";
    if (!p.camber.empty() && p.camber.size() != n) return "camber samples do not match side length";
    for (Side s : {Side::pressure, Side::suction}) {
        const auto& pts = p.side(s);
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(pts[i].x) || !std::isfinite(pts[i].y)) return std::string(to_string(s)) + " side has non-finite point";
            if (pts[i].x < -kClosureTolerance || pts[i].x > chord + kClosureTolerance)
                return std::string(to_string(s)) + " side x outside [0, chord]";
            if (i > 0 && pts[i].x < pts[i - 1].x) return std::string(to_string(s)) + " side x decreases";
        }
    }
    auto dist = [](Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); };
    if (dist(p.pressure_side.front(), p.suction_side.front()) > kClosureTolerance) return "leading-edge points do not coincide";
    if (dist(p.pressure_side.back(), p.suction_side.back()) > kClosureTolerance) return "trailing-edge points do not coincide";
    for (std::size_t i = 0; i < n; ++i) {
        if (std::abs(p.pressure_side[i].x - p.suction_side[i].x) > kClosureTolerance) return "sides are not sampled at matched x";
        if (p.suction_side[i].y < p.pressure_side[i].y) return "pressure and suction sides cross";
    }
    return std::nullopt;
}

inline void require_valid_profile(const BladeProfile& p, double chord = 1.0) {
    if (auto why = check_profile(p, chord)) throw InputError("invalid blade profile " + std::to_string(p.id) + ": " + *why);
}

namespace detail {

// Closed-trailing-edge NACA four-digit thickness law, full thickness per unit
// max thickness (peak about 1.0 near 30 % chord).
inline double thickness_shape(double x) noexcept {
    if (x <= 0.0) return 0.0;
    return 10.0 * (0.2969 * std::sqrt(x) - 0.1260 * x - 0.3516 * x * x + 0.2843 * x * x * x - 0.1036 * x * x * x * x);
}

inline double camber_angle_rad(const DatumSpec& spec, double x) noexcept {
    const double s = 1.0 - std::pow(1.0 - std::clamp(x, 0.0, 1.0), spec.camber_exponent);
    return deg_to_rad(spec.inlet_metal_angle + (spec.exit_metal_angle - spec.inlet_metal_angle) * s);
}

// Cosine clustering toward both ends.
inline std::vector<double> cosine_stations(std::size_t n) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = 0.5 * (1.0 - std::cos(std::numbers::pi * static_cast<double>(i) / static_cast<double>(n - 1)));
    x.front() = 0.0;
    x.back() = 1.0;
    return x;
}

// y_c(x) = -chord * integral_0^x tan(theta), 8-point Gauss-Legendre per interval.
inline std::vector<double> integrate_camber(const DatumSpec& spec, const std::vector<double>& xs) {
    static constexpr std::array<double, 8> nodes{-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                                 -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                                 0.7966664774136267,  0.9602898564975363};
    static constexpr std::array<double, 8> weights{0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                                   0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                                   0.2223810344533745, 0.1012285362903763};
    std::vector<double> y(xs.size(), 0.0);
    for (std::size_t i = 1; i < xs.size(); ++i) {
        const double a = xs[i - 1], b = xs[i];
        const double mid = 0.5 * (a + b), half = 0.5 * (b - a);
        double sum = 0.0;
        for (std::size_t k = 0; k < nodes.size(); ++k) sum += weights[k] * std::tan(camber_angle_rad(spec, mid + half * nodes[k]));
        y[i] = y[i - 1] - half * sum;
    }
    return y;
}

}  // namespace detail

inline BladeProfile build_datum(const DatumSpec& spec) {
    spec.validate();
    const auto xs = detail::cosine_stations(spec.points_per_side);
    const auto yc = detail::integrate_camber(spec, xs);

    BladeProfile profile;
    profile.pressure_side.resize(xs.size());
    profile.suction_side.resize(xs.size());
    profile.camber.resize(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        // Thickness is laid off tangentially so that both sides share the
        // axial stations; dividing by cos(theta) keeps it normal-thickness
        // equivalent.
        const double half = 0.5 * spec.max_thickness_to_chord * detail::thickness_shape(xs[i]) /
                            std::cos(detail::camber_angle_rad(spec, xs[i]));
        const double x = spec.chord * xs[i];
        profile.camber[i] = spec.chord * yc[i];
        profile.pressure_side[i] = {x, spec.chord * (yc[i] - half)};
        profile.suction_side[i] = {x, spec.chord * (yc[i] + half)};
    }
    // Closed trailing edge: the thickness polynomial vanishes at x = 1 only up
    // to rounding, so pin both sides to the camber point.
    profile.pressure_side.back().y = profile.suction_side.back().y = profile.camber.back();

    if (auto why = check_profile(profile, spec.chord)) throw InputError("datum construction failed: " + *why);
    return profile;
}

// ---------------------------------------------------------------------------
// Perturbations

struct PerturbSpec {
    Side side = Side::suction;
    std::vector<double> bump_centers;
    std::vector<double> bump_amplitudes;
    std::vector<double> bump_widths;

    // Amplitudes are in units of chord.
    void validate() const {
        const auto n = bump_centers.size();
        if (bump_amplitudes.size() != n || bump_widths.size() != n)
            throw InputError("PerturbSpec lists must have equal length");
        for (std::size_t k = 0; k < n; ++k) {
            if (!(bump_centers[k] > 0.05 && bump_centers[k] < 0.95))
                throw InputError("PerturbSpec bump center must lie in (0.05, 0.95)");
            if (!std::isfinite(bump_amplitudes[k]) || std::abs(bump_amplitudes[k]) > 0.05 + 1e-15)
                throw InputError("PerturbSpec |amplitude| must not exceed 0.05 chord");
            if (!(bump_widths[k] > 0.0 && bump_widths[k] <= 1.0))
                throw InputError("PerturbSpec bump width must lie in (0, 1]");
        }
    }
};

inline constexpr double kFadeStart = 0.05;
inline constexpr double kFadeFull = 0.15;

// Window that is exactly zero outside (0.05, 0.95) and one on [0.15, 0.85].
inline double edge_fade(double xc) noexcept {
    auto ramp = [](double t) {
        t = std::clamp(t, 0.0, 1.0);
        return t * t * (3.0 - 2.0 * t);
    };
    const double d = std::min(xc, 1.0 - xc);
    return ramp((d - kFadeStart) / (kFadeFull - kFadeStart));
}

// Sine-squared bump with unit peak at xc = center, support |xc - center| < width.
inline double sine_bump(double xc, double center, double width) noexcept {
    const double u = (xc - center) / width;
    if (u <= -1.0 || u >= 1.0) return 0.0;
    const double s = std::sin(0.5 * std::numbers::pi * (u + 1.0));
    return s * s;
}

// Thickness change in y/c (positive = away from camber) at axial fraction xc.
inline double bump_displacement(const PerturbSpec& p, double xc) noexcept {
    double sum = 0.0;
    for (std::size_t k = 0; k < p.bump_centers.size(); ++k)
        sum += p.bump_amplitudes[k] * sine_bump(xc, p.bump_centers[k], p.bump_widths[k]);
    return sum * edge_fade(xc);
}

inline BladeProfile perturb(const BladeProfile& datum, const PerturbSpec& p, double chord = 1.0) {
    require_valid_profile(datum, chord);
    p.validate();

    BladeProfile out = datum;
    auto& pts = out.side(p.side);
    const double sign = p.side == Side::suction ? 1.0 : -1.0;
    for (auto& pt : pts) {
        const double d = chord * bump_displacement(p, pt.x / chord);
        if (d != 0.0) pt.y += sign * d;
    }
    if (!out.camber.empty()) {
        for (std::size_t i = 0; i < pts.size(); ++i) {
            const double h = sign * (pts[i].y - out.camber[i]);
            if (h < -kClosureTolerance)
                throw InputError("perturbation gives negative thickness on the " + std::string(to_string(p.side)) + " side");
        }
    }
    if (auto why = check_profile(out, chord)) throw InputError("perturbation rejected: " + *why);
    return out;
}

// ---------------------------------------------------------------------------
// Library generation

// Single-bump grid for one side: every (center, amplitude, width) triple.
struct SideSweep {
    std::vector<double> centers;
    std::vector<double> amplitudes;
    std::vector<double> widths;

    std::size_t size() const noexcept { return centers.size() * amplitudes.size() * widths.size(); }
};

struct LibrarySweep {
    SideSweep pressure;
    SideSweep suction;
    // Per-blade uniform jitter, as a fraction of each axis' grid spacing.
    // Zero amplitudes are never jittered.
    double jitter = 0.0;
    // When > 0, a seeded subset of this many grid points is requested instead
    // of the whole grid (kept in grid-index order).
    std::size_t count = 0;

    std::size_t grid_size() const noexcept { return pressure.size() * suction.size(); }
    std::size_t requested() const noexcept { return count > 0 ? count : grid_size(); }
};

struct SkippedBlade {
    std::uint32_t id = 0;
    std::string reason;
};

struct Library {
    std::vector<BladeProfile> profiles;
    std::vector<SkippedBlade> skipped;
    std::size_t requested = 0;
};

namespace detail {

inline double min_spacing(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double best = 0.0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        const double d = v[i] - v[i - 1];
        if (d > 0.0 && (best == 0.0 || d < best)) best = d;
    }
    return best;
}

inline PerturbSpec grid_point(const SideSweep& sweep, Side side, std::size_t index, double jitter, Rng& rng) {
    const std::size_t na = sweep.amplitudes.size(), nw = sweep.widths.size();
    const std::size_t ic = index / (na * nw), ia = (index / nw) % na, iw = index % nw;
    double c = sweep.centers[ic], a = sweep.amplitudes[ia], w = sweep.widths[iw];
    // Draws happen unconditionally so the stream does not depend on values.
    const double jc = rng.uniform(-0.5, 0.5), ja = rng.uniform(-0.5, 0.5), jw = rng.uniform(-0.5, 0.5);
    if (jitter > 0.0) {
        c = std::clamp(c + jc * jitter * min_spacing(sweep.centers), 0.051, 0.949);
        if (a != 0.0) a = std::clamp(a + ja * jitter * min_spacing(sweep.amplitudes), -0.05, 0.05);
        w = std::max(1e-3, w + jw * jitter * min_spacing(sweep.widths));
    }
    return PerturbSpec{side, {c}, {a}, {w}};
}

}  // namespace detail

// Grid index of each requested library entry, ascending.
inline std::vector<std::size_t> library_grid_indices(const LibrarySweep& sweep, std::uint64_t seed) {
    const std::size_t total = sweep.grid_size();
    if (total == 0) throw InputError("library sweep grid is empty");
    std::vector<std::size_t> idx(total);
    for (std::size_t i = 0; i < total; ++i) idx[i] = i;
    if (sweep.count == 0 || sweep.count == total) return idx;
    if (sweep.count > total)
        throw InputError("requested library count " + std::to_string(sweep.count) + " exceeds grid size " + std::to_string(total));
    Rng rng(derive_seed(seed, 0x5ab5e7ULL));
    rng.shuffle(idx);
    idx.resize(sweep.count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

// The (pressure, suction) perturbations of library entry `id`.
inline std::pair<PerturbSpec, PerturbSpec> library_entry(const LibrarySweep& sweep, std::size_t grid_index, std::uint32_t id,
                                                         std::uint64_t seed) {
    Rng rng(derive_seed(seed, id));
    const std::size_t ns = sweep.suction.size();
    auto pp = detail::grid_point(sweep.pressure, Side::pressure, grid_index / ns, sweep.jitter, rng);
    auto ps = detail::grid_point(sweep.suction, Side::suction, grid_index % ns, sweep.jitter, rng);
    return {std::move(pp), std::move(ps)};
}

// Runs fn(i) for i in [0, n) over `jobs` threads with static partitioning.
template <typename Fn>
void parallel_for(std::size_t n, unsigned jobs, Fn&& fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(jobs);
    for (unsigned w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += jobs) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : workers) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

inline Library generate_library(const BladeProfile& datum, const LibrarySweep& sweep, std::uint64_t seed, unsigned jobs = 1,
                                double chord = 1.0) {
    require_valid_profile(datum, chord);
    const auto grid = library_grid_indices(sweep, seed);

    std::vector<std::optional<BladeProfile>> slots(grid.size());
    std::vector<std::string> reasons(grid.size());
    parallel_for(grid.size(), jobs, [&](std::size_t i) {
        const auto id = static_cast<std::uint32_t>(i);
        try {
            auto [pp, ps] = library_entry(sweep, grid[i], id, seed);
            auto blade = perturb(perturb(datum, pp, chord), ps, chord);
            blade.id = id;
            slots[i] = std::move(blade);
        } catch (const InputError& e) {
            reasons[i] = e.what();
        }
    });

    Library lib;
    lib.requested = grid.size();
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (slots[i])
            lib.profiles.push_back(std::move(*slots[i]));
        else
            lib.skipped.push_back({static_cast<std::uint32_t>(i), reasons[i]});
    }
    return lib;
}

// ---------------------------------------------------------------------------
// Serialization

// id (u32), then pressure LE->TE and suction LE->TE as float64 (x, y) pairs.
inline void write_profile(std::ostream& os, const BladeProfile& p) {
    io::write_pod<std::uint32_t>(os, p.id);
    for (Side s : {Side::pressure, Side::suction})
        for (const auto& pt : p.side(s)) {
            io::write_pod<double>(os, pt.x);
            io::write_pod<double>(os, pt.y);
        }
}

inline BladeProfile read_profile(std::istream& is, std::size_t points_per_side) {
    BladeProfile p;
    p.id = io::read_pod<std::uint32_t>(is);
    for (Side s : {Side::pressure, Side::suction}) {
        auto& pts = p.side(s);
        pts.resize(points_per_side);
        for (auto& pt : pts) {
            pt.x = io::read_pod<double>(is);
            pt.y = io::read_pod<double>(is);
        }
    }
    return p;
}

// One "x y side" line per point, for plotting.
inline void export_profile_text(std::ostream& os, const BladeProfile& p) {
    std::ostringstream line;
    line.precision(17);
    for (Side s : {Side::pressure, Side::suction})
        for (const auto& pt : p.side(s)) line << pt.x << ' ' << pt.y << ' ' << to_string(s) << '\n';
    os << line.str();
}

}  // namespace bladenet
