#pragma once

// Nodal Riemannian metric tensors M_i on a mesh: identity, curvature-based
// (M = k I) or user supplied, with element averaging and spectral bounds.

#include "mmpde/mesh.hpp"
#include "mmpde/simplex_geometry.hpp"

#include <algorithm>
#include <span>
#include <utility>
#include <vector>

namespace mmpde {

enum class MetricKind { identity, curvature, user };

template <int D>
struct MetricField {
    std::vector<Mat<D, D>> nodal;
    MetricKind kind = MetricKind::identity;
    double floor_eps = 0.0;

    std::size_t size() const { return nodal.size(); }
    const Mat<D, D>& operator[](std::size_t i) const { return nodal[i]; }
};

template <int M, int D>
MetricField<D> build_identity_metric(const SimplicialMesh<M, D>& mesh) {
    return {std::vector<Mat<D, D>>(mesh.num_vertices(), Mat<D, D>::Identity()), MetricKind::identity, 0.0};
}

/// Default regularization of a curvature metric: 1e-3 of the largest curvature
/// (1e-3 when the curvature vanishes everywhere).
inline double default_curvature_floor(std::span<const double> curvatures) {
    double kmax = 0.0;
    for (double k : curvatures) kmax = std::max(kmax, k);
    return kmax > 0.0 ? 1e-3 * kmax : 1e-3;
}

/// M_i = max(k_i, floor_eps) I.
template <int M, int D>
MetricField<D> build_curvature_metric(const SimplicialMesh<M, D>& mesh, std::span<const double> curvatures,
                                      double floor_eps) {
    if (curvatures.size() != mesh.num_vertices())
        throw InputError("curvature count does not match vertex count");
    if (!(floor_eps > 0.0)) throw InputError("curvature metric floor must be positive");
    MetricField<D> field{{}, MetricKind::curvature, floor_eps};
    field.nodal.reserve(curvatures.size());
    for (double k : curvatures) {
        if (!(k >= 0.0)) throw InputError("curvature metric expects nonnegative curvature magnitudes");
        field.nodal.push_back(std::max(k, floor_eps) * Mat<D, D>::Identity());
    }
    return field;
}

template <int M, int D>
MetricField<D> build_user_metric(const SimplicialMesh<M, D>& mesh, std::vector<Mat<D, D>> tensors) {
    if (tensors.size() != mesh.num_vertices()) throw InputError("metric tensor count does not match vertex count");
    double floor = std::numeric_limits<double>::infinity();
    for (auto& t : tensors) {
        require_spd<D>(t);
        t = 0.5 * (t + t.transpose());
        Eigen::SelfAdjointEigenSolver<Mat<D, D>> eig(t, Eigen::EigenvaluesOnly);
        floor = std::min(floor, eig.eigenvalues().minCoeff());
    }
    return {std::move(tensors), MetricKind::user, floor};
}

/// n passes of vertex-neighbour averaging: M_i <- (M_i + sum_j M_j) / (1 + #neighbours).
template <int M, int D>
MetricField<D> smooth_metric(MetricField<D> field, const SimplicialMesh<M, D>& mesh, int passes) {
    for (int pass = 0; pass < passes; ++pass) {
        std::vector<Mat<D, D>> next(field.nodal.size());
        for (std::size_t i = 0; i < field.nodal.size(); ++i) {
            Mat<D, D> acc = field.nodal[i];
            for (int j : mesh.neighbors(i)) acc += field.nodal[j];
            next[i] = acc / double(1 + mesh.neighbors(i).size());
        }
        field.nodal = std::move(next);
    }
    return field;
}

/// Arithmetic vertex average (1/(m+1)) sum_j M_j over an element.
template <int D, std::size_t N>
Mat<D, D> element_average_metric(const MetricField<D>& field, const std::array<int, N>& element) {
    Mat<D, D> acc = Mat<D, D>::Zero();
    for (int v : element) acc += field.nodal[v];
    return acc / double(N);
}

struct MetricBounds {
    double lower = 0.0;
    double upper = 0.0;
};

/// Min over vertices of the smallest eigenvalue and max of the largest one.
template <int D>
MetricBounds metric_bounds(const MetricField<D>& field) {
    MetricBounds b{std::numeric_limits<double>::infinity(), 0.0};
    for (const auto& t : field.nodal) {
        Eigen::SelfAdjointEigenSolver<Mat<D, D>> eig(t, Eigen::EigenvaluesOnly);
        b.lower = std::min(b.lower, eig.eigenvalues().minCoeff());
        b.upper = std::max(b.upper, eig.eigenvalues().maxCoeff());
    }
    if (field.nodal.empty()) b.lower = 0.0;
    return b;
}

} // namespace mmpde
