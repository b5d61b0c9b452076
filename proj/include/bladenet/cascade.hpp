#pragma once

// Incompressible inviscid flow through a linear cascade.
//
// Linear-strength vortex panels on the blade surface, flow tangency at panel
// midpoints, Kutta condition at the trailing edge. In cascade mode every
// panel is replaced by the infinite row of its images spaced one pitch apart
// in y; the row kernel is (i*gamma/2t) coth(pi (z - z0) / t). The self term
// is integrated in closed form and the image remainder, which is smooth on
// the blade, by Gauss-Legendre quadrature.

#include "bladenet/common.hpp"
#include "bladenet/geometry.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <span>
#include <vector>

namespace bladenet {

struct FlowConditions {
    double rho = 1.0;
    double inlet_speed = 1.0;            // U
    double inlet_static_pressure = 0.0;  // p1, gauge
    double inlet_angle = 41.08;          // deg from axial, positive toward -y
    double pitch_to_chord = 0.79;
    double chord = 1.0;

    double pitch() const noexcept { return pitch_to_chord * chord; }
    double inlet_dynamic_head() const noexcept { return 0.5 * rho * inlet_speed * inlet_speed; }

    void validate() const {
        if (!(rho > 0.0) || !std::isfinite(rho)) throw InputError("FlowConditions.rho must be > 0");
        if (!(inlet_speed > 0.0) || !std::isfinite(inlet_speed)) throw InputError("FlowConditions.inlet_speed must be > 0");
        if (!(pitch_to_chord > 0.0) || !std::isfinite(pitch_to_chord)) throw InputError("FlowConditions.pitch_to_chord must be > 0");
        if (!(chord > 0.0) || !std::isfinite(chord)) throw InputError("FlowConditions.chord must be > 0");
        if (!std::isfinite(inlet_static_pressure)) throw InputError("FlowConditions.inlet_static_pressure must be finite");
        if (!(std::abs(inlet_angle) < 85.0)) throw InputError("FlowConditions.inlet_angle must satisfy |angle| < 85 deg");
    }
};

struct SolveOptions {
    // Isolated airfoil: single-vortex kernel, pitch ignored.
    bool isolated = false;
    // Without Kutta the closing equation is zero net circulation.
    bool kutta = true;
    int quadrature_points = 2;
    double max_condition = 1e12;
};

struct CpSample {
    Side side = Side::pressure;
    double cx = 0.0;
    double cp = 0.0;
};

struct CpDistribution {
    // Pressure side LE->TE, then suction side LE->TE, aligned with the profile.
    std::vector<CpSample> samples;
    double circulation = 0.0;  // clockwise, divided by U * chord
    double exit_angle = 0.0;   // deg
    double tangency_residual = 0.0;  // max |V.n| / U over control points
    double condition_estimate = 0.0;

    std::size_t points_per_side() const noexcept { return samples.size() / 2; }

    std::span<const CpSample> side(Side s) const noexcept {
        const auto n = points_per_side();
        return {samples.data() + (s == Side::pressure ? 0 : n), n};
    }
};

namespace detail {

using cplx = std::complex<double>;

// Plain complex arithmetic for the assembly loop; std::complex multiply and
// divide go through the Annex G library routines, which dominate run time.
struct Cx {
    double re = 0.0;
    double im = 0.0;
};
inline constexpr Cx operator+(Cx a, Cx b) noexcept { return {a.re + b.re, a.im + b.im}; }
inline constexpr Cx operator-(Cx a, Cx b) noexcept { return {a.re - b.re, a.im - b.im}; }
inline constexpr Cx operator*(Cx a, Cx b) noexcept { return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re}; }
inline constexpr Cx operator*(double s, Cx a) noexcept { return {s * a.re, s * a.im}; }
inline constexpr Cx operator/(Cx a, Cx b) noexcept {
    const double d = b.re * b.re + b.im * b.im;
    return {(a.re * b.re + a.im * b.im) / d, (a.im * b.re - a.re * b.im) / d};
}
inline constexpr Cx times_i(Cx a) noexcept { return {-a.im, a.re}; }
inline constexpr Cx conj(Cx a) noexcept { return {a.re, -a.im}; }

// Complex velocity coefficients (u - iv, panel frame) of a panel of length
// `len` along the local real axis, clockwise vortex density linear from
// gamma_a to gamma_b, at local position z. Points on the panel itself take the
// limit from the outward (+y) side.
inline std::pair<Cx, Cx> linear_vortex_panel(Cx z, double len) noexcept {
    constexpr double inv2pi = 0.5 / std::numbers::pi;
    const double dx = z.re - len;
    // log(z) - log(z - len)
    const Cx log_ratio{0.5 * std::log((z.re * z.re + z.im * z.im) / (dx * dx + z.im * z.im)),
                       std::atan2(z.im, z.re) - std::atan2(z.im, dx)};
    const Cx zr{z.re / len, z.im / len};
    const Cx ca = inv2pi * times_i(Cx{1.0 - zr.re, -zr.im} * log_ratio + Cx{1.0, 0.0});
    const Cx cb = inv2pi * times_i(zr * log_ratio - Cx{1.0, 0.0});
    return {ca, cb};
}

// coth(x) - 1/x: the vortex-row kernel with the self term removed. Analytic
// for |Im x| < pi; the poles at +-i pi are the neighbouring blades.
inline Cx row_remainder(Cx x) noexcept {
    if (x.re * x.re + x.im * x.im < 0.01) {
        const Cx x2 = x * x;
        Cx acc{2.0 / 93555.0, 0.0};
        for (double c : {-1.0 / 4725.0, 2.0 / 945.0, -1.0 / 45.0, 1.0 / 3.0}) acc = x2 * acc + Cx{c, 0.0};
        return x * acc;
    }
    const bool flip = x.re < 0.0;
    const Cx xs = flip ? Cx{-x.re, -x.im} : x;
    const double mag = std::exp(-2.0 * xs.re);
    const Cx e{mag * std::cos(-2.0 * xs.im), mag * std::sin(-2.0 * xs.im)};
    Cx coth = Cx{1.0 + e.re, e.im} / Cx{1.0 - e.re, -e.im};
    if (flip) coth = Cx{-coth.re, -coth.im};
    return coth - Cx{1.0, 0.0} / x;
}

inline std::pair<std::vector<double>, std::vector<double>> gauss_legendre(int n) {
    switch (n) {
        case 1: return {{0.0}, {2.0}};
        case 2: return {{-0.5773502691896257, 0.5773502691896257}, {1.0, 1.0}};
        case 3: return {{-0.7745966692414834, 0.0, 0.7745966692414834}, {0.5555555555555556, 0.8888888888888888, 0.5555555555555556}};
        case 4:
            return {{-0.8611363115940526, -0.3399810435848563, 0.3399810435848563, 0.8611363115940526},
                    {0.3478548451374538, 0.6521451548625461, 0.6521451548625461, 0.3478548451374538}};
        default: throw InputError("quadrature_points must be 1..4");
    }
}

struct PanelSet {
    std::vector<cplx> nodes;     // N + 1 nodes, first and last at the trailing edge
    std::vector<cplx> tangent;   // N unit tangents
    std::vector<double> length;  // N
    std::vector<cplx> mid;       // control points

    std::size_t panels() const noexcept { return length.size(); }
};

// Trailing edge -> pressure side -> leading edge -> suction side -> trailing
// edge, i.e. clockwise; the outward normal is the tangent rotated by +90 deg.
inline PanelSet make_panels(const BladeProfile& profile) {
    const auto n = profile.points_per_side();
    PanelSet ps;
    ps.nodes.reserve(2 * n - 1);
    for (std::size_t i = n; i-- > 0;) ps.nodes.emplace_back(profile.pressure_side[i].x, profile.pressure_side[i].y);
    for (std::size_t i = 1; i < n; ++i) ps.nodes.emplace_back(profile.suction_side[i].x, profile.suction_side[i].y);
    const auto np = ps.nodes.size() - 1;
    ps.tangent.resize(np);
    ps.length.resize(np);
    ps.mid.resize(np);
    for (std::size_t j = 0; j < np; ++j) {
        const cplx d = ps.nodes[j + 1] - ps.nodes[j];
        ps.length[j] = std::abs(d);
        if (!(ps.length[j] > 0.0)) throw InputError("profile has a zero-length panel at node " + std::to_string(j));
        ps.tangent[j] = d / ps.length[j];
        ps.mid[j] = 0.5 * (ps.nodes[j] + ps.nodes[j + 1]);
    }
    return ps;
}

}  // namespace detail

// Exit angle from the cascade momentum relation: the tangential velocity
// changes by circulation / pitch while the axial velocity is conserved.
inline double exit_angle_from_circulation(double circulation, const FlowConditions& flow, bool isolated = false) {
    if (isolated) return flow.inlet_angle;
    const double a1 = deg_to_rad(flow.inlet_angle);
    const double vx = flow.inlet_speed * std::cos(a1);
    const double gamma = circulation * flow.inlet_speed * flow.chord;
    return rad_to_deg(std::atan(std::tan(a1) + gamma / (flow.pitch() * vx)));
}

inline double exit_flow_angle(CpDistribution& dist, const FlowConditions& flow, bool isolated = false) {
    dist.exit_angle = exit_angle_from_circulation(dist.circulation, flow, isolated);
    return dist.exit_angle;
}

// Exit over inlet dynamic head, (cos a1 / cos a2)^2 for conserved axial velocity.
inline double exit_dynamic_head_ratio(double inlet_angle_deg, double exit_angle_deg) noexcept {
    const double r = std::cos(deg_to_rad(inlet_angle_deg)) / std::cos(deg_to_rad(exit_angle_deg));
    return r * r;
}

inline CpDistribution solve_cascade(const BladeProfile& profile, const FlowConditions& flow, const SolveOptions& opt = {}) {
    using detail::cplx;
    flow.validate();
    require_valid_profile(profile, flow.chord);

    const auto ps = detail::make_panels(profile);
    const auto np = ps.panels();
    const auto nu = np + 1;
    const double pitch = flow.pitch();
    const double U = flow.inlet_speed;
    const double a1 = deg_to_rad(flow.inlet_angle);
    const cplx v_inlet = U * cplx(std::cos(a1), -std::sin(a1));
    const auto [gx, gw] = detail::gauss_legendre(opt.quadrature_points);

    // Circulation weights: Gamma = sum_j circ[j] * gamma_j (trapezoid).
    Eigen::VectorXd circ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nu));
    for (std::size_t j = 0; j < np; ++j) {
        circ[static_cast<Eigen::Index>(j)] += 0.5 * ps.length[j];
        circ[static_cast<Eigen::Index>(j + 1)] += 0.5 * ps.length[j];
    }

    // Normal velocity at control point i per unit gamma at node j.
    const auto N = static_cast<Eigen::Index>(nu);
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    RowMajor normal_vel = RowMajor::Zero(static_cast<Eigen::Index>(np), N);
    std::vector<detail::Cx> normals(np);
    for (std::size_t i = 0; i < np; ++i) normals[i] = {-ps.tangent[i].imag(), ps.tangent[i].real()};

    const double row_scale = 0.5 / pitch;
    const double row_arg = std::numbers::pi / pitch;
    for (std::size_t i = 0; i < np; ++i) {
        const detail::Cx zc{ps.mid[i].real(), ps.mid[i].imag()};
        const detail::Cx n = normals[i];
        double* row = &normal_vel(static_cast<Eigen::Index>(i), 0);
        for (std::size_t j = 0; j < np; ++j) {
            const detail::Cx t{ps.tangent[j].real(), ps.tangent[j].imag()};
            const detail::Cx a{ps.nodes[j].real(), ps.nodes[j].imag()};
            const double len = ps.length[j];
            const detail::Cx zl = i == j ? detail::Cx{0.5 * len, 0.0} : (zc - a) * detail::conj(t);
            auto [wa, wb] = detail::linear_vortex_panel(zl, len);
            // Local w -> global w.
            wa = wa * detail::conj(t);
            wb = wb * detail::conj(t);
            if (!opt.isolated) {
                detail::Cx ra, rb;
                for (std::size_t q = 0; q < gx.size(); ++q) {
                    const double sigma = 0.5 * (1.0 + gx[q]);
                    const detail::Cx zeta = a + (sigma * len) * t;
                    const detail::Cx r = (0.5 * gw[q] * len) * detail::row_remainder(row_arg * (zc - zeta));
                    ra = ra + (1.0 - sigma) * r;
                    rb = rb + sigma * r;
                }
                wa = wa + row_scale * detail::times_i(ra);
                wb = wb + row_scale * detail::times_i(rb);
            }
            // V = conj(w); V . n
            row[j] += wa.re * n.re - wa.im * n.im;
            row[j + 1] += wb.re * n.re - wb.im * n.im;
        }
    }

    Eigen::MatrixXd A(N, N);
    Eigen::VectorXd rhs(N);
    A.topRows(static_cast<Eigen::Index>(np)) = normal_vel;
    for (std::size_t i = 0; i < np; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        // Onset flow is the vector mean: v_inlet shifted by -Gamma/(2t) in y.
        if (!opt.isolated) A.row(r) += (-0.5 / pitch) * normals[i].im * circ.transpose();
        rhs[r] = -(v_inlet.real() * normals[i].re + v_inlet.imag() * normals[i].im);
    }
    if (opt.kutta) {
        A.row(N - 1).setZero();
        A(N - 1, 0) = 1.0;
        A(N - 1, N - 1) = 1.0;
    } else {
        A.row(N - 1) = circ.transpose();
    }
    rhs[N - 1] = 0.0;

    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    const double rcond = lu.rcond();
    const double cond = rcond > 0.0 ? 1.0 / rcond : std::numeric_limits<double>::infinity();
    if (!std::isfinite(rcond) || !(cond < opt.max_condition) || !A.allFinite())
        throw SolverError("singular panel influence matrix for blade " + std::to_string(profile.id) +
                              " (condition estimate " + std::to_string(cond) + ")",
                          cond);
    const Eigen::VectorXd gamma = lu.solve(rhs);
    if (!gamma.allFinite()) throw SolverError("non-finite vortex strengths for blade " + std::to_string(profile.id), cond);

    CpDistribution out;
    out.condition_estimate = cond;
    const double circulation = circ.dot(gamma);
    out.circulation = circulation / (U * flow.chord);

    const cplx v_onset = opt.isolated ? v_inlet : v_inlet - cplx(0.0, 0.5 * circulation / pitch);
    const Eigen::VectorXd induced = normal_vel * gamma;
    double residual = 0.0;
    for (std::size_t i = 0; i < np; ++i) {
        const double vn = induced[static_cast<Eigen::Index>(i)] + v_onset.real() * normals[i].re + v_onset.imag() * normals[i].im;
        residual = std::max(residual, std::abs(vn) / U);
    }
    out.tangency_residual = residual;

    // Surface speed equals the local sheet strength (stagnant interior).
    const auto n = profile.points_per_side();
    out.samples.resize(2 * n);
    auto cp_at_node = [&](std::size_t node) {
        const double v = gamma[static_cast<Eigen::Index>(node)] / U;
        return 1.0 - v * v;
    };
    for (std::size_t i = 0; i < n; ++i) {
        out.samples[i] = {Side::pressure, profile.pressure_side[i].x / flow.chord, cp_at_node(n - 1 - i)};
        out.samples[n + i] = {Side::suction, profile.suction_side[i].x / flow.chord, cp_at_node(n - 1 + i)};
    }
    // The nodal strength at the trailing edge is not resolved by midpoint
    // collocation; take the mean of the two one-sided linear extrapolations
    // (equal pressure at the edge), capped at stagnation.
    auto extrapolate = [&](Side side) {
        const auto& pts = profile.side(side);
        const std::size_t off = side == Side::pressure ? 0 : n;
        const double x1 = pts[n - 3].x, x2 = pts[n - 2].x, xt = pts[n - 1].x;
        const double c1 = out.samples[off + n - 3].cp, c2 = out.samples[off + n - 2].cp;
        return x2 > x1 ? c2 + (c2 - c1) * (xt - x2) / (x2 - x1) : c2;
    };
    const double cp_te = std::min(1.0, 0.5 * (extrapolate(Side::pressure) + extrapolate(Side::suction)));
    out.samples[n - 1].cp = cp_te;
    out.samples[2 * n - 1].cp = cp_te;
    exit_flow_angle(out, flow, opt.isolated);
    return out;
}

// Linear interpolation in x/c along one side.
inline double sample_cp_at(const CpDistribution& dist, Side side, double cx) {
    if (!(cx >= 0.0 && cx <= 1.0)) throw RangeError("sample_cp_at: cx must lie in [0, 1]");
    const auto s = dist.side(side);
    if (s.empty()) throw InputError("sample_cp_at: empty distribution");
    auto it = std::lower_bound(s.begin(), s.end(), cx, [](const CpSample& a, double v) { return a.cx < v; });
    if (it == s.end()) return s.back().cp;
    if (it->cx == cx || it == s.begin()) return it->cp;
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double w = (cx - lo.cx) / (hi.cx - lo.cx);
    return lo.cp + (hi.cp - lo.cp) * w;
}

// 400 Cp values (float64) in surface-point order, then circulation and exit angle.
inline void write_cp(std::ostream& os, const CpDistribution& d) {
    for (const auto& s : d.samples) io::write_pod<double>(os, s.cp);
    io::write_pod<double>(os, d.circulation);
    io::write_pod<double>(os, d.exit_angle);
}

// Reads a Cp record; x/c comes from the matching profile.
inline CpDistribution read_cp(std::istream& is, const BladeProfile& profile, double chord = 1.0) {
    CpDistribution d;
    const auto n = profile.points_per_side();
    d.samples.resize(2 * n);
    for (std::size_t i = 0; i < 2 * n; ++i) {
        const Side side = i < n ? Side::pressure : Side::suction;
        d.samples[i] = {side, profile.side(side)[i % n].x / chord, io::read_pod<double>(is)};
    }
    d.circulation = io::read_pod<double>(is);
    d.exit_angle = io::read_pod<double>(is);
    return d;
}

}  // namespace bladenet
