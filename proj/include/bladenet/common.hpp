#pragma once

// Shared error types, deterministic random numbers and little-endian I/O.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bladenet {

static_assert(std::endian::native == std::endian::little,
              "binary formats assume a little-endian host");

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad caller input: invalid specs, malformed profiles, shape mismatches.
struct InputError : Error {
    using Error::Error;
};

struct RangeError : Error {
    using Error::Error;
};

struct SolverError : Error {
    SolverError(const std::string& what, double condition)
        : Error(what), condition_estimate(condition) {}
    double condition_estimate;
};

struct FormatError : Error {
    using Error::Error;
};

// NaN/Inf produced inside the network.
struct NonFiniteError : Error {
    using Error::Error;
};

inline constexpr double deg_to_rad(double deg) noexcept { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad_to_deg(double rad) noexcept { return rad * 180.0 / std::numbers::pi; }

// ---------------------------------------------------------------------------
// Random numbers. std:: distributions are implementation-defined, so all
// sampling goes through these helpers to keep outputs reproducible.

inline std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) noexcept {
    return splitmix64(master ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
}

// xoshiro256** seeded through splitmix64.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) noexcept {
        std::uint64_t s = seed;
        for (auto& word : state_) {
            s = splitmix64(s);
            word = s;
        }
    }

    std::uint64_t next() noexcept {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    // Uniform in [0, 1).
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), rejection sampled.
    std::uint64_t below(std::uint64_t n) noexcept {
        if (n <= 1) return 0;
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t r;
        do {
            r = next();
        } while (r >= limit);
        return r % n;
    }

    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) noexcept {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }

    std::uint64_t state_[4]{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// ---------------------------------------------------------------------------
// Little-endian binary helpers.

namespace io {

template <typename T>
void write_pod(std::ostream& os, const T& value) {
    os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void write_span(std::ostream& os, std::span<const T> values) {
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size() * sizeof(T)));
}

template <typename T>
T read_pod(std::istream& is) {
    T value{};
    if (!is.read(reinterpret_cast<char*>(&value), sizeof(T))) throw FormatError("unexpected end of file");
    return value;
}

template <typename T>
void read_into(std::istream& is, std::span<T> out) {
    if (!is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size() * sizeof(T))))
        throw FormatError("unexpected end of file");
}

inline void write_string(std::ostream& os, const std::string& text) {
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
}

inline std::string read_string(std::istream& is, std::size_t max_len = 64u << 20) {
    const auto n = read_pod<std::uint32_t>(is);
    if (n > max_len) throw FormatError("string length field out of range");
    std::string text(n, '\0');
    if (n && !is.read(text.data(), n)) throw FormatError("unexpected end of file");
    return text;
}

inline void expect_magic(std::istream& is, const char (&magic)[5]) {
    char got[4]{};
    if (!is.read(got, 4) || std::memcmp(got, magic, 4) != 0)
        throw FormatError(std::string("bad magic, expected ") + magic);
}

// FNV-1a, used for dataset fingerprints in manifests.
inline std::uint64_t fnv1a(std::span<const char> bytes, std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
    for (char c : bytes) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace io

}  // namespace bladenet
