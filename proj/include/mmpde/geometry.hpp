#pragma once

// Parametric example geometries (curves and surfaces), seeded perturbed mesh
// generation and reprojection of moved vertices onto the analytic geometry.

#include "mmpde/mesh.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <tuple>
#include <vector>

namespace mmpde {

/// SplitMix64; the exact sequence is part of the mesh generation contract.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) from the top 53 bits.
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }

    /// Uniform in [-1, 1).
    double symmetric() { return 2.0 * uniform() - 1.0; }

private:
    std::uint64_t state_;
};

enum class GeometryName {
    circle,
    ellipse,
    lemniscate,
    cardioid,
    rose,
    mexican_cap,
    torus_curve,
    hyperboloid,
    cavatappi,
    external
};

inline std::string_view to_string(GeometryName g) {
    switch (g) {
    case GeometryName::circle: return "circle";
    case GeometryName::ellipse: return "ellipse";
    case GeometryName::lemniscate: return "lemniscate";
    case GeometryName::cardioid: return "cardioid";
    case GeometryName::rose: return "rose";
    case GeometryName::mexican_cap: return "mexican_cap";
    case GeometryName::torus_curve: return "torus_curve";
    case GeometryName::hyperboloid: return "hyperboloid";
    case GeometryName::cavatappi: return "cavatappi";
    case GeometryName::external: return "external";
    }
    return "unknown";
}

inline GeometryName geometry_from_string(std::string_view s) {
    for (auto g : {GeometryName::circle, GeometryName::ellipse, GeometryName::lemniscate, GeometryName::cardioid,
                   GeometryName::rose, GeometryName::mexican_cap, GeometryName::torus_curve,
                   GeometryName::hyperboloid, GeometryName::cavatappi, GeometryName::external})
        if (to_string(g) == s) return g;
    throw InputError("unknown geometry '" + std::string(s) + "'");
}

/// (m, d) of a named geometry.
inline std::pair<int, int> geometry_dims(GeometryName g) {
    switch (g) {
    case GeometryName::mexican_cap:
    case GeometryName::torus_curve: return {1, 3};
    case GeometryName::hyperboloid:
    case GeometryName::cavatappi: return {2, 3};
    case GeometryName::external: throw InputError("external geometry has no intrinsic dimensions");
    default: return {1, 2};
    }
}

struct GeometrySpec {
    GeometryName name = GeometryName::circle;
    double r = 1.0;  // ellipse semi-axis / rose frequency
    double c = 2.0;  // rose parameter range [0, c pi]
    int n = 100;     // curve elements
    int n_s = 44;    // surface grid cells along s
    int n_zeta = 44; // surface grid cells along zeta
    std::uint64_t seed = 1;
    double perturb = 0.3;  // fraction of the parameter spacing
};

/// Spec with the resolution and shape parameters of the reference examples.
inline GeometrySpec default_spec(GeometryName g) {
    GeometrySpec s;
    s.name = g;
    switch (g) {
    case GeometryName::circle: s.r = 1.0; s.n = 100; break;
    case GeometryName::ellipse: s.r = 6.0; s.n = 120; break;
    case GeometryName::lemniscate: s.n = 100; break;
    case GeometryName::cardioid: s.n = 70; break;
    case GeometryName::rose: s.r = 1.0 / 6.0; s.c = 3.0; s.n = 100; break;
    case GeometryName::mexican_cap: s.n = 300; break;
    case GeometryName::torus_curve: s.n = 180; break;
    case GeometryName::hyperboloid: s.n_s = 44; s.n_zeta = 44; break;
    case GeometryName::cavatappi: s.n_s = 70; s.n_zeta = 150; break;
    case GeometryName::external: break;
    }
    return s;
}

/// Analytic parametrization u -> x(u) over a box, with the current parameter of
/// every mesh vertex. Parameters with locked[i][k] set stay fixed on reprojection
/// (zeta on the rim of a surface).
template <int M, int D>
struct Parametrization {
    std::function<Vec<D>(const Vec<M>&)> position;
    Vec<M> lower;
    Vec<M> upper;
    std::array<bool, M> periodic{};
    std::vector<Vec<M>> vertex_params;
    std::vector<std::array<bool, M>> locked;

    /// Parameter difference b - a, reduced modulo the period where periodic.
    Vec<M> gap(const Vec<M>& a, const Vec<M>& b) const {
        Vec<M> d = b - a;
        for (int k = 0; k < M; ++k)
            if (periodic[k]) {
                const double period = upper[k] - lower[k];
                d[k] -= period * std::round(d[k] / period);
            }
        return d;
    }
};

template <int M, int D>
struct GeneratedMesh {
    SimplicialMesh<M, D> mesh;
    std::optional<Parametrization<M, D>> parametrization;
};

namespace curves {

inline Vec<2> ellipse(double r, double s) { return {r * std::cos(s), std::sin(s)}; }

inline Vec<2> lemniscate(double s) {
    const double d = 1.0 + std::sin(s) * std::sin(s);
    return {2.0 * std::cos(s) / d, std::sin(s) * std::cos(s) / d};
}

inline Vec<2> cardioid(double s) {
    const double w = 2.0 * (1.0 - std::cos(s));
    return {std::cos(s) * w, std::sin(s) * w};
}

inline Vec<2> rose(double r, double s) { return {std::cos(r * s) * std::cos(s), std::cos(r * s) * std::sin(s)}; }

inline Vec<3> mexican_cap(double s) {
    const double g = std::exp(0.1 * s);
    return {g * std::cos(10.0 * s), g * std::sin(10.0 * s), s};
}

inline Vec<3> torus_curve(double s) {
    const double w = 3.0 + std::cos(std::numbers::sqrt2 * s);
    return {w * std::cos(s), std::cos(std::numbers::sqrt2 * s), w * std::sin(s)};
}

inline Vec<3> hyperboloid(double s, double z) {
    const double w = std::sqrt(1.0 + z * z);
    return {w * std::cos(s), w * std::sin(s), z};
}

inline Vec<3> cavatappi(double s, double z) {
    const double pi = std::numbers::pi;
    const double base = 3.0 + 2.0 * std::cos(pi / 35.0 * s);
    const double wave = 0.1 * std::cos(2.0 * pi / 7.0 * s);
    return {base + wave * std::cos(pi / 30.0 * z), base + wave * std::sin(pi / 30.0 * z),
            3.0 + 2.0 * std::sin(pi / 35.0 * s) + 0.1 * std::sin(2.0 * pi / 7.0 * s) + z / 6.0};
}

} // namespace curves

namespace detail {

inline void check_perturb(double a) {
    if (!(a >= 0.0 && a < 0.45)) throw InputError("perturbation amplitude must lie in [0, 0.45)");
}

template <int D>
GeneratedMesh<1, D> make_curve(std::function<Vec<D>(double)> f, double s0, double s1, int n, double perturb,
                               std::uint64_t seed) {
    check_perturb(perturb);
    const Vec<D> a = f(s0), b = f(s1);
    const double scale = std::max({1.0, a.norm(), b.norm()});
    const bool closed = (a - b).norm() <= 1e-12 * scale;
    if (closed && n < 3) throw InputError("closed curves need at least 3 elements");
    if (n < 1) throw InputError("curve needs at least one element");

    SplitMix64 rng(seed);
    const double ds = (s1 - s0) / n;
    const int nv = closed ? n : n + 1;
    std::vector<Vec<1>> params(nv);
    std::vector<Vec<D>> x(nv);
    for (int i = 0; i < nv; ++i) {
        const bool endpoint = !closed && (i == 0 || i == n);
        const double delta = endpoint ? 0.0 : perturb * rng.symmetric();
        params[i][0] = s0 + (i + delta) * ds;
        if (endpoint) params[i][0] = (i == 0) ? s0 : s1;
        x[i] = f(params[i][0]);
    }
    std::vector<std::array<int, 2>> el;
    el.reserve(n);
    for (int i = 0; i < n; ++i) el.push_back({i, closed ? (i + 1) % n : i + 1});

    Parametrization<1, D> p;
    p.position = [f](const Vec<1>& u) { return f(u[0]); };
    p.lower[0] = s0;
    p.upper[0] = s1;
    p.periodic[0] = closed;
    p.vertex_params = std::move(params);
    p.locked.assign(nv, {false});
    return {SimplicialMesh<1, D>(std::move(x), std::move(el)), std::move(p)};
}

inline GeneratedMesh<2, 3> make_surface(std::function<Vec<3>(double, double)> f, double s0, double s1, double z0,
                                        double z1, bool periodic_s, int ns, int nz, double perturb,
                                        std::uint64_t seed) {
    check_perturb(perturb);
    if (ns < (periodic_s ? 3 : 1) || nz < 1) throw InputError("surface grid too small");
    // per-direction amplitude halved so that no triangle of the parameter grid can invert
    const double amp = perturb / 2.0;
    SplitMix64 rng(seed);
    const int cols = periodic_s ? ns : ns + 1;
    const double ds = (s1 - s0) / ns, dz = (z1 - z0) / nz;
    std::vector<Vec<2>> params;
    std::vector<Vec<3>> x;
    std::vector<std::array<bool, 2>> locked;
    for (int j = 0; j <= nz; ++j) {
        for (int i = 0; i < cols; ++i) {
            const double us = rng.symmetric(), uz = rng.symmetric();
            const bool rim = (j == 0 || j == nz);
            const bool side = !periodic_s && (i == 0 || i == ns);
            Vec<2> u;
            u[0] = side ? (i == 0 ? s0 : s1) : s0 + (i + amp * us) * ds;
            u[1] = rim ? (j == 0 ? z0 : z1) : z0 + (j + amp * uz) * dz;
            params.push_back(u);
            x.push_back(f(u[0], u[1]));
            locked.push_back({side, rim});
        }
    }
    auto id = [cols, periodic_s](int i, int j) { return j * cols + (periodic_s ? i % cols : i); };
    std::vector<std::array<int, 3>> el;
    el.reserve(2 * ns * nz);
    for (int j = 0; j < nz; ++j)
        for (int i = 0; i < ns; ++i) {
            const int v00 = id(i, j), v10 = id(i + 1, j), v11 = id(i + 1, j + 1), v01 = id(i, j + 1);
            el.push_back({v00, v10, v11});
            el.push_back({v00, v11, v01});
        }
    Parametrization<2, 3> p;
    p.position = [f](const Vec<2>& u) { return f(u[0], u[1]); };
    p.lower = Vec<2>(s0, z0);
    p.upper = Vec<2>(s1, z1);
    p.periodic = {periodic_s, false};
    p.vertex_params = std::move(params);
    p.locked = std::move(locked);
    return {SimplicialMesh<2, 3>(std::move(x), std::move(el)), std::move(p)};
}

} // namespace detail

using AnyGenerated = std::variant<GeneratedMesh<1, 2>, GeneratedMesh<1, 3>, GeneratedMesh<2, 3>>;

/// Perturbed mesh of a named geometry with its registered parametrization.
inline AnyGenerated generate_mesh(const GeometrySpec& spec) {
    const double two_pi = 2.0 * std::numbers::pi;
    const double a = spec.perturb;
    const auto seed = spec.seed;
    switch (spec.name) {
    case GeometryName::circle:
    case GeometryName::ellipse: {
        const double r = spec.r;
        return detail::make_curve<2>([r](double s) { return curves::ellipse(r, s); }, 0.0, two_pi, spec.n, a, seed);
    }
    case GeometryName::lemniscate:
        return detail::make_curve<2>(curves::lemniscate, 0.0, two_pi, spec.n, a, seed);
    case GeometryName::cardioid:
        return detail::make_curve<2>(curves::cardioid, 0.0, two_pi, spec.n, a, seed);
    case GeometryName::rose: {
        const double r = spec.r;
        if (!(spec.c > 0.0)) throw InputError("rose parameter c must be positive");
        return detail::make_curve<2>([r](double s) { return curves::rose(r, s); }, 0.0, spec.c * std::numbers::pi,
                                     spec.n, a, seed);
    }
    case GeometryName::mexican_cap:
        return detail::make_curve<3>(curves::mexican_cap, -12.0, 12.0, spec.n, a, seed);
    case GeometryName::torus_curve:
        return detail::make_curve<3>(curves::torus_curve, 0.0, 40.0 * std::numbers::pi, spec.n, a, seed);
    case GeometryName::hyperboloid:
        return detail::make_surface(curves::hyperboloid, 0.0, two_pi, -2.0, 2.0, true, spec.n_s, spec.n_zeta, a,
                                    seed);
    case GeometryName::cavatappi:
        return detail::make_surface(curves::cavatappi, 0.0, 70.0, 0.0, 150.0, true, spec.n_s, spec.n_zeta, a, seed);
    case GeometryName::external: break;
    }
    throw InputError("geometry '" + std::string(to_string(spec.name)) + "' cannot be generated");
}

/// Typed access when (m, d) is known at compile time.
template <int M, int D>
GeneratedMesh<M, D> generate_mesh_as(const GeometrySpec& spec) {
    auto any = generate_mesh(spec);
    if (auto* g = std::get_if<GeneratedMesh<M, D>>(&any)) return std::move(*g);
    throw InputError("geometry '" + std::string(to_string(spec.name)) + "' has different dimensions");
}

/// Move every vertex to the closest point of the parametrized geometry near its
/// current parameter (Gauss-Newton chord iterations, forward-difference Jacobian). A
/// parameter moves by at most 0.45 of the gap to its nearest mesh neighbour so
/// the ordering in parameter space is preserved. Vertices with keep[i] set are
/// left untouched.
template <int M, int D>
void reproject(Parametrization<M, D>& param, const SimplicialMesh<M, D>& topology, std::vector<Vec<D>>& x,
               const std::vector<bool>& keep) {
    const Vec<M> extent = param.upper - param.lower;
    std::vector<Vec<M>> updated = param.vertex_params;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!keep.empty() && keep[i]) continue;
        const Vec<M> u0 = param.vertex_params[i];
        double max_move = std::numeric_limits<double>::infinity();
        for (int j : topology.neighbors(i))
            max_move = std::min(max_move, 0.45 * param.gap(u0, param.vertex_params[j]).norm());
        if (!std::isfinite(max_move)) max_move = 0.01 * extent.norm();

        Vec<M> u = u0;
        Vec<D> p = param.position(u);
        double dist2 = (p - x[i]).squaredNorm();
        // chord iterations: the Jacobian is refreshed only when a step fails to
        // reduce the distance, which for the small moves of one flow step is rare
        auto jacobian_solver = [&](const Vec<M>& at, const Vec<D>& p_at) {
            Mat<D, M> jac;
            for (int k = 0; k < M; ++k) {
                Vec<M> h = Vec<M>::Zero();
                h[k] = 1e-7 * extent[k];
                jac.col(k) = (param.position(at + h) - p_at) / h[k];
                if (param.locked[i][k]) jac.col(k).setZero();
            }
            Mat<M, M> jtj = jac.transpose() * jac;
            for (int k = 0; k < M; ++k)
                if (param.locked[i][k]) jtj(k, k) = 1.0;
            return std::pair<Mat<D, M>, Mat<M, M>>{jac, jtj.inverse()};
        };
        auto [jac, jtj_inv] = jacobian_solver(u, p);
        bool fresh = true;
        for (int iter = 0; iter < 30; ++iter) {
            Vec<M> step = jtj_inv * (jac.transpose() * (x[i] - p));
            if (!step.allFinite()) break;
            // keep the accumulated move inside the trust region
            const Vec<M> total = u + step - u0;
            if (total.norm() > max_move) step = (u0 + total * (max_move / total.norm())) - u;
            if (step.norm() <= 1e-12 * std::max(1.0, extent.norm())) break;
            const Vec<M> trial = u + step;
            const Vec<D> pt = param.position(trial);
            const double d2 = (pt - x[i]).squaredNorm();
            if (d2 <= dist2) {
                u = trial;
                p = pt;
                dist2 = d2;
                fresh = false;
                continue;
            }
            if (fresh) break;  // no descent even with an exact Jacobian
            std::tie(jac, jtj_inv) = jacobian_solver(u, p);
            fresh = true;
        }
        updated[i] = u;
        x[i] = p;
    }
    param.vertex_params = std::move(updated);
}

} // namespace mmpde
