#pragma once

// Per-vertex tangents (curves), normals (surfaces) and mean-curvature
// magnitudes computed from the mesh alone.

#include "mmpde/mesh.hpp"

#include <array>
#include <cmath>
#include <deque>
#include <map>
#include <numbers>
#include <utility>
#include <vector>

namespace mmpde {

template <int D>
struct VertexFrames {
    std::vector<Vec<D>> directions;  // unit tangents (m = 1) or unit normals (m = 2, d = 3)
    std::vector<double> curvature;   // k_i >= 0, filled by discrete_curvature
    std::vector<bool> flagged;       // curvature copied from a neighbour (boundary vertex)
};

/// Previous and next vertex of each curve vertex by connectivity (-1 if absent).
/// Element (a, b) is read as a -> b; a vertex met twice as the same end gets
/// its second neighbour in the free slot.
template <int D>
std::vector<std::array<int, 2>> curve_neighbors(const SimplicialMesh<1, D>& mesh) {
    std::vector<std::array<int, 2>> nb(mesh.num_vertices(), {-1, -1});
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i)
        if (mesh.patch(i).size() > 2)
            throw InputError("curve vertex " + std::to_string(i) + " has valence " +
                             std::to_string(mesh.patch(i).size()));
    for (const auto& el : mesh.elements()) {
        const int a = el[0], b = el[1];
        auto place = [&](int v, int other, int preferred) {
            if (nb[v][preferred] < 0) nb[v][preferred] = other;
            else nb[v][1 - preferred] = other;
        };
        place(a, b, 1);
        place(b, a, 0);
    }
    return nb;
}

/// Interior: normalize(x_next - x_prev); endpoint: direction of its only edge.
template <int D>
VertexFrames<D> curve_tangents(const SimplicialMesh<1, D>& mesh) {
    const auto nb = curve_neighbors(mesh);
    VertexFrames<D> frames;
    frames.directions.resize(mesh.num_vertices());
    frames.flagged.assign(mesh.num_vertices(), false);
    const auto& x = mesh.vertices();
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
        const int prev = nb[i][0], next = nb[i][1];
        Vec<D> t;
        if (prev >= 0 && next >= 0) {
            t = x[next] - x[prev];
            if (t.norm() == 0.0) t = x[next] - x[i];
        } else if (next >= 0) {
            t = x[next] - x[i];
        } else if (prev >= 0) {
            t = x[i] - x[prev];
        } else {
            throw InputError("curve vertex " + std::to_string(i) + " has no incident edge");
        }
        const double n = t.norm();
        if (!(n > 0.0)) throw DegenerateElement(-1, "zero-length curve edge at vertex " + std::to_string(i));
        frames.directions[i] = t / n;
    }
    return frames;
}

namespace detail {

inline double corner_angle(const Vec<3>& p, const Vec<3>& q, const Vec<3>& r) {
    const Vec<3> a = q - p, b = r - p;
    return std::atan2(a.cross(b).norm(), a.dot(b));
}

template <int D>
Vec<3> lift3(const Vec<D>& v) {
    Vec<3> out = Vec<3>::Zero();
    out.template head<D>() = v;
    return out;
}

} // namespace detail

/// Throws if two faces traverse a shared edge in the same direction.
inline void check_consistent_orientation(const SimplicialMesh<2, 3>& mesh) {
    std::map<std::pair<int, int>, int> directed;
    for (std::size_t k = 0; k < mesh.num_elements(); ++k) {
        const auto& el = mesh.element(k);
        for (int j = 0; j < 3; ++j) {
            const std::pair<int, int> e{el[j], el[(j + 1) % 3]};
            auto [it, inserted] = directed.emplace(e, static_cast<int>(k));
            if (!inserted)
                throw InputError("inconsistent face orientation between elements " + std::to_string(it->second) +
                                 " and " + std::to_string(k));
        }
    }
}

/// Angle-weighted vertex normals of an orientable triangle mesh. The
/// orientation check can be skipped when the topology is known to be valid.
inline VertexFrames<3> surface_normals(const SimplicialMesh<2, 3>& mesh, bool check_orientation = true) {
    if (check_orientation) check_consistent_orientation(mesh);
    VertexFrames<3> frames;
    frames.directions.assign(mesh.num_vertices(), Vec<3>::Zero());
    frames.flagged.assign(mesh.num_vertices(), false);
    const auto& x = mesh.vertices();
    for (const auto& el : mesh.elements()) {
        const Vec<3> n = (x[el[1]] - x[el[0]]).cross(x[el[2]] - x[el[0]]);
        const double len = n.norm();
        if (!(len > 0.0)) continue;
        for (int j = 0; j < 3; ++j) {
            const double angle = detail::corner_angle(x[el[j]], x[el[(j + 1) % 3]], x[el[(j + 2) % 3]]);
            frames.directions[el[j]] += angle * n / len;
        }
    }
    for (std::size_t i = 0; i < frames.directions.size(); ++i) {
        const double len = frames.directions[i].norm();
        if (!(len > 0.0)) throw DegenerateElement(-1, "undefined normal at vertex " + std::to_string(i));
        frames.directions[i] /= len;
    }
    return frames;
}

/// Curves: inverse circumradius of (x_prev, x_i, x_next); endpoints copy their
/// neighbour's value and are flagged.
template <int D>
std::vector<double> discrete_curvature(const SimplicialMesh<1, D>& mesh, VertexFrames<D>& frames) {
    const auto nb = curve_neighbors(mesh);
    const auto& x = mesh.vertices();
    const std::size_t nv = mesh.num_vertices();
    std::vector<double> k(nv, 0.0);
    frames.flagged.assign(nv, false);
    for (std::size_t i = 0; i < nv; ++i) {
        const int prev = nb[i][0], next = nb[i][1];
        if (prev < 0 || next < 0) {
            frames.flagged[i] = true;
            continue;
        }
        const Vec<3> a = detail::lift3<D>(x[prev] - x[i]);
        const Vec<3> b = detail::lift3<D>(x[next] - x[i]);
        const double la = a.norm(), lb = b.norm(), lc = (a - b).norm();
        const double twice_area = a.cross(b).norm();
        if (twice_area <= 1e-12 * la * lb || !(la * lb * lc > 0.0)) continue;  // collinear
        k[i] = 2.0 * twice_area / (la * lb * lc);
    }
    for (std::size_t i = 0; i < nv; ++i) {
        if (!frames.flagged[i]) continue;
        const int other = nb[i][0] >= 0 ? nb[i][0] : nb[i][1];
        if (other >= 0 && !frames.flagged[other]) k[i] = k[other];
    }
    frames.curvature = k;
    return k;
}

/// Surfaces: |sum_j (cot a_ij + cot b_ij)(x_j - x_i)| / (4 A_mixed), i.e. the
/// magnitude of the mean curvature (1 on the unit sphere). Boundary vertices
/// take the value of the nearest interior vertex and are flagged.
inline std::vector<double> discrete_curvature(const SimplicialMesh<2, 3>& mesh, VertexFrames<3>& frames) {
    const std::size_t nv = mesh.num_vertices();
    const auto& x = mesh.vertices();
    std::vector<Vec<3>> laplace(nv, Vec<3>::Zero());
    std::vector<double> area(nv, 0.0);
    for (const auto& el : mesh.elements()) {
        std::array<double, 3> angle{};
        std::array<double, 3> cot{};
        for (int j = 0; j < 3; ++j) {
            angle[j] = detail::corner_angle(x[el[j]], x[el[(j + 1) % 3]], x[el[(j + 2) % 3]]);
            cot[j] = 1.0 / std::tan(angle[j]);
        }
        const double face_area = 0.5 * (x[el[1]] - x[el[0]]).cross(x[el[2]] - x[el[0]]).norm();
        const bool obtuse = angle[0] > std::numbers::pi / 2 || angle[1] > std::numbers::pi / 2 ||
                            angle[2] > std::numbers::pi / 2;
        for (int j = 0; j < 3; ++j) {
            const int p = el[j], q = el[(j + 1) % 3], r = el[(j + 2) % 3];
            // edge (p,q) is opposite corner r; edge (p,r) opposite corner q
            laplace[p] += cot[(j + 2) % 3] * (x[q] - x[p]) + cot[(j + 1) % 3] * (x[r] - x[p]);
            if (!obtuse) {
                area[p] += ((x[r] - x[p]).squaredNorm() * cot[(j + 1) % 3] +
                            (x[q] - x[p]).squaredNorm() * cot[(j + 2) % 3]) /
                           8.0;
            } else {
                area[p] += angle[j] > std::numbers::pi / 2 ? face_area / 2.0 : face_area / 4.0;
            }
        }
    }
    std::vector<double> k(nv, 0.0);
    frames.flagged.assign(nv, false);
    for (std::size_t i = 0; i < nv; ++i) {
        if (mesh.is_boundary(i)) {
            frames.flagged[i] = true;
            continue;
        }
        if (!(area[i] > 0.0)) throw NumericalError("zero mixed area at vertex " + std::to_string(i));
        k[i] = laplace[i].norm() / (4.0 * area[i]);
    }
    // boundary: nearest interior vertex, searched ring by ring
    for (std::size_t i = 0; i < nv; ++i) {
        if (!frames.flagged[i]) continue;
        std::vector<char> seen(nv, 0);
        std::vector<int> ring{static_cast<int>(i)};
        seen[i] = 1;
        int best = -1;
        while (!ring.empty() && best < 0) {
            std::vector<int> next;
            for (int v : ring)
                for (int w : mesh.neighbors(v))
                    if (!seen[w]) {
                        seen[w] = 1;
                        next.push_back(w);
                    }
            double best_d = std::numeric_limits<double>::infinity();
            for (int w : next)
                if (!mesh.is_boundary(w) && (x[w] - x[i]).norm() < best_d) {
                    best_d = (x[w] - x[i]).norm();
                    best = w;
                }
            ring = std::move(next);
        }
        if (best >= 0) k[i] = k[best];
    }
    frames.curvature = k;
    return k;
}

/// Frames plus curvature for curves.
template <int D>
VertexFrames<D> curve_frames(const SimplicialMesh<1, D>& mesh) {
    auto frames = curve_tangents(mesh);
    discrete_curvature(mesh, frames);
    return frames;
}

/// Frames plus curvature for surfaces in R^3.
inline VertexFrames<3> surface_frames(const SimplicialMesh<2, 3>& mesh, bool check_orientation = true) {
    auto frames = surface_normals(mesh, check_orientation);
    discrete_curvature(mesh, frames);
    return frames;
}

} // namespace mmpde
