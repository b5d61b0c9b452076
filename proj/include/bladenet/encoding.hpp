#pragma once

// 20x20 network input: one cell per surface point, cell value = normalized
// tangential coordinate. Rows 0-9 hold the pressure side and rows 10-19 the
// suction side, each leading edge -> trailing edge in row-major order, so the
// cell position encodes the axial location of its point.

#include "bladenet/common.hpp"
#include "bladenet/geometry.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace bladenet {

inline constexpr std::size_t kGridSide = 20;
inline constexpr std::size_t kGridCells = kGridSide * kGridSide;
inline constexpr std::size_t kPointsPerSide = kGridCells / 2;

struct InputMatrix {
    std::array<double, kGridCells> cells{};

    double at(std::size_t row, std::size_t col) const noexcept { return cells[row * kGridSide + col]; }
    double& at(std::size_t row, std::size_t col) noexcept { return cells[row * kGridSide + col]; }
    bool operator==(const InputMatrix&) const = default;
};

struct Normalization {
    double y_min = 0.0;
    double y_max = 1.0;

    void validate() const {
        if (!(std::isfinite(y_min) && std::isfinite(y_max) && y_min < y_max))
            throw InputError("normalization requires finite y_min < y_max");
    }
};

struct Cell {
    std::size_t row = 0;
    std::size_t col = 0;
    bool operator==(const Cell&) const = default;
};

inline constexpr Cell cell_of(Side side, std::size_t point) noexcept {
    const std::size_t offset = side == Side::pressure ? 0 : kGridSide / 2;
    return {offset + point / kGridSide, point % kGridSide};
}

inline constexpr std::pair<Side, std::size_t> point_of(Cell c) noexcept {
    const Side side = c.row < kGridSide / 2 ? Side::pressure : Side::suction;
    return {side, (c.row % (kGridSide / 2)) * kGridSide + c.col};
}

// Library-wide tangential range.
inline Normalization library_normalization(std::span<const BladeProfile> library) {
    if (library.empty()) throw InputError("library_normalization: empty library");
    Normalization n{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (const auto& p : library)
        for (Side s : {Side::pressure, Side::suction})
            for (const auto& pt : p.side(s)) {
                n.y_min = std::min(n.y_min, pt.y);
                n.y_max = std::max(n.y_max, pt.y);
            }
    n.validate();
    return n;
}

struct EncodeStats {
    std::size_t clamped = 0;
};

inline InputMatrix encode(const BladeProfile& profile, const Normalization& norm, EncodeStats* stats = nullptr) {
    norm.validate();
    if (profile.points_per_side() != kPointsPerSide || profile.suction_side.size() != kPointsPerSide)
        throw InputError("encode: profile must have " + std::to_string(kPointsPerSide) + " points per side");
    InputMatrix m;
    const double span = norm.y_max - norm.y_min;
    for (Side s : {Side::pressure, Side::suction}) {
        const auto& pts = profile.side(s);
        for (std::size_t i = 0; i < kPointsPerSide; ++i) {
            double v = (pts[i].y - norm.y_min) / span;
            if (!std::isfinite(v)) throw InputError("encode: non-finite coordinate");
            if (v < 0.0 || v > 1.0) {
                v = std::clamp(v, 0.0, 1.0);
                if (stats) ++stats->clamped;
            }
            const auto c = cell_of(s, i);
            m.at(c.row, c.col) = v;
        }
    }
    return m;
}

// Tangential coordinate of every point, pressure LE->TE then suction LE->TE.
inline std::vector<double> decode(const InputMatrix& m, const Normalization& norm) {
    norm.validate();
    std::vector<double> y(kGridCells);
    const double span = norm.y_max - norm.y_min;
    for (Side s : {Side::pressure, Side::suction})
        for (std::size_t i = 0; i < kPointsPerSide; ++i) {
            const auto c = cell_of(s, i);
            y[(s == Side::pressure ? 0 : kPointsPerSide) + i] = norm.y_min + m.at(c.row, c.col) * span;
        }
    return y;
}

// 400 float32 values, row-major.
inline void write_matrix(std::ostream& os, const InputMatrix& m) {
    for (double v : m.cells) io::write_pod<float>(os, static_cast<float>(v));
}

inline InputMatrix read_matrix(std::istream& is) {
    InputMatrix m;
    for (auto& v : m.cells) v = static_cast<double>(io::read_pod<float>(is));
    return m;
}

// Binary 8-bit PGM; values are mapped linearly from [lo, hi] to [0, 255].
inline void write_pgm(std::ostream& os, std::span<const double> values, std::size_t rows, std::size_t cols, double lo = 0.0,
                      double hi = 1.0) {
    if (values.size() != rows * cols) throw InputError("write_pgm: value count does not match image size");
    os << "P5\n" << cols << ' ' << rows << "\n255\n";
    const double span = hi > lo ? hi - lo : 1.0;
    for (double v : values) {
        const double t = std::clamp((v - lo) / span, 0.0, 1.0);
        const auto byte = static_cast<unsigned char>(std::lround(t * 255.0));
        os.put(static_cast<char>(byte));
    }
}

inline void write_pgm(std::ostream& os, const InputMatrix& m) { write_pgm(os, m.cells, kGridSide, kGridSide); }

}  // namespace bladenet
