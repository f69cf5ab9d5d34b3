#pragma once

// Linear-algebra kernel for m-simplexes embedded in R^d: edge matrices,
// measures, pseudo-inverse q-vectors, heights and their Riemannian analogues.
// Everything here is a pure function on fixed-size Eigen matrices.

#include "mmpde/types.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace mmpde {

/// A simplex counts as degenerate when prod(singular values of E) <= tol * (longest edge)^m,
/// i.e. its volume is negligible relative to its size.
inline constexpr double kDegeneracyTolerance = 1e-13;

/// Edge matrix [x_1 - x_0, ..., x_m - x_0] of an m-simplex in R^d.
template <int M, int D>
    requires SimplexDims<M, D>
struct EdgeMatrix {
    Mat<D, M> entries = Mat<D, M>::Zero();
    // Rank-deficient matrices are still returned so diagnostics can report them.
    bool degenerate = false;

    static constexpr int rows() { return D; }
    static constexpr int cols() { return M; }
};

/// Product of the singular values of E, i.e. m! |K|, without forming E^T E.
template <int D, int M>
double singular_value_product(const Mat<D, M>& e) {
    if constexpr (M == 1) return e.norm();
    else if constexpr (M == D) return std::abs(e.determinant());
    else return e.col(0).cross(e.col(1)).norm();
}

template <int D, int M>
bool rank_deficient(const Mat<D, M>& e) {
    if (!e.allFinite()) return true;
    const double longest = e.colwise().norm().maxCoeff();
    if (!(longest > 0.0)) return true;
    return !(singular_value_product<D, M>(e) > kDegeneracyTolerance * std::pow(longest, M));
}

template <int M, int D>
    requires SimplexDims<M, D>
EdgeMatrix<M, D> make_edge_matrix(const Mat<D, M>& entries) {
    return {entries, rank_deficient<D, M>(entries)};
}

template <int M, int D>
    requires SimplexDims<M, D>
EdgeMatrix<M, D> edge_matrix(const std::array<Vec<D>, M + 1>& vertices) {
    Mat<D, M> e;
    for (int j = 1; j <= M; ++j) e.col(j - 1) = vertices[j] - vertices[0];
    return make_edge_matrix<M, D>(e);
}

namespace detail {

// m-volume of the parallelotope spanned by the columns, sqrt(det(A^T A)).
// Forming A^T A squares the condition number, so flat simplices would lose
// half their digits; a determinant, cross product or Householder QR does not.
template <int M, int D>
double column_volume(const Mat<D, M>& a) {
    if constexpr (M == 1) {
        return a.norm();
    } else if constexpr (M == D) {
        return std::abs(a.determinant());
    } else if constexpr (M == 2 && D == 3) {
        return a.col(0).cross(a.col(1)).norm();
    } else {
        const Eigen::HouseholderQR<Mat<D, M>> qr(a);
        return std::abs(qr.matrixQR().diagonal().prod());
    }
}

} // namespace detail

/// Regular reference m-simplex scaled to a prescribed measure.
template <int M>
    requires(M >= 1 && M <= 3)
struct ReferenceElement {
    Mat<M, M> edge_matrix;  // upper triangular
    Mat<M, M> edge_matrix_inverse;
    double det_edge_matrix = 0.0;
    double measure = 0.0;
    double a_hat = 0.0;  // minimum height
    double h_hat = 0.0;  // diameter (edge length)
};

/// Coefficient lambda of the minimum height of a unit-measure regular m-simplex:
/// a_hat = lambda * |K_hat|^(1/m).
inline double regular_height_coefficient(int m) {
    const double md = m;
    return std::sqrt(md + 1.0) * std::pow(factorial(m), 1.0 / md) /
           (std::sqrt(md) * std::pow(md + 1.0, 1.0 / (2.0 * md)));
}

template <int M>
    requires(M >= 1 && M <= 3)
ReferenceElement<M> reference_element(double target_measure) {
    if (!(target_measure > 0.0) || !std::isfinite(target_measure))
        throw InputError("reference element measure must be positive");

    // Unit-edge regular simplex: xi_0 = 0, xi_1 = e_1, xi_2 in the (1,2)-plane, ...
    Mat<M, M> unit = Mat<M, M>::Zero();
    unit(0, 0) = 1.0;
    if constexpr (M >= 2) {
        unit(0, 1) = 0.5;
        unit(1, 1) = std::sqrt(3.0) / 2.0;
    }
    if constexpr (M >= 3) {
        unit(0, 2) = 0.5;
        unit(1, 2) = std::sqrt(3.0) / 6.0;
        unit(2, 2) = std::sqrt(2.0 / 3.0);
    }
    const double unit_measure = unit.determinant() / factorial(M);
    // Height of a unit-edge regular simplex: sqrt((m+1)/(2m)).
    const double unit_height = std::sqrt((M + 1.0) / (2.0 * M));
    const double scale = std::pow(target_measure / unit_measure, 1.0 / M);

    ReferenceElement<M> ref;
    ref.edge_matrix = scale * unit;
    ref.edge_matrix_inverse = ref.edge_matrix.inverse();
    ref.det_edge_matrix = ref.edge_matrix.determinant();
    ref.measure = target_measure;
    ref.a_hat = unit_height * scale;
    ref.h_hat = scale;
    return ref;
}

/// Runtime-dimension overload; throws for m outside {1,2,3}.
inline double reference_min_height(int m, double target_measure) {
    if (m < 1 || m > 3) throw InputError("reference element dimension must be 1, 2 or 3");
    switch (m) {
    case 1: return reference_element<1>(target_measure).a_hat;
    case 2: return reference_element<2>(target_measure).a_hat;
    default: return reference_element<3>(target_measure).a_hat;
    }
}

/// |K| = sqrt(det(E^T E)) / m!; zero for degenerate input.
template <int M, int D>
double simplex_measure(const EdgeMatrix<M, D>& e) {
    if (e.degenerate) return 0.0;
    return detail::column_volume<M, D>(e.entries) / factorial(M);
}

/// q-vectors (basis-function gradients) and the heights a_j = 1/|q_j|.
template <int M, int D>
struct QVectors {
    std::array<Vec<D>, M + 1> q;
    std::array<double, M + 1> heights{};

    double min_height() const { return *std::min_element(heights.begin(), heights.end()); }
};

/// Moore-Penrose pseudo-inverse (E^T E)^{-1} E^T.
template <int M, int D>
Mat<M, D> pseudo_inverse(const EdgeMatrix<M, D>& e) {
    if (e.degenerate) throw DegenerateElement(-1);
    const Mat<M, M> gram = e.entries.transpose() * e.entries;
    // closed-form inverse of the small Gram matrix; rank deficiency was ruled out above
    return gram.inverse() * e.entries.transpose();
}

template <int M, int D>
QVectors<M, D> q_vectors_from_pinv(const Mat<M, D>& pinv) {
    QVectors<M, D> out;
    out.q[0].setZero();
    for (int j = 1; j <= M; ++j) {
        out.q[j] = pinv.row(j - 1).transpose();
        out.q[0] -= out.q[j];
    }
    for (int j = 0; j <= M; ++j) out.heights[j] = 1.0 / out.q[j].norm();
    return out;
}

template <int M, int D>
QVectors<M, D> pseudo_inverse_q_vectors(const EdgeMatrix<M, D>& e) {
    return q_vectors_from_pinv<M, D>(pseudo_inverse(e));
}

/// Symmetric within a relative tolerance and strictly positive definite.
template <int D>
bool is_spd(const Mat<D, D>& m, double sym_tol = 1e-12) {
    if (!m.allFinite()) return false;
    const double scale = std::max(1e-300, m.cwiseAbs().maxCoeff());
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > sym_tol * scale) return false;
    Eigen::SelfAdjointEigenSolver<Mat<D, D>> eig(m, Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff() > 0.0;
}

template <int D>
void require_spd(const Mat<D, D>& m) {
    if (!is_spd<D>(m)) throw NumericalError("metric tensor is not symmetric positive definite");
}

/// M^{1/2} by symmetric eigen-decomposition.
template <int D>
Mat<D, D> spd_sqrt(const Mat<D, D>& m) {
    Eigen::SelfAdjointEigenSolver<Mat<D, D>> eig(m);
    return eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().asDiagonal() * eig.eigenvectors().transpose();
}

/// M^{-1/2} by symmetric eigen-decomposition.
template <int D>
Mat<D, D> spd_inverse_sqrt(const Mat<D, D>& m) {
    Eigen::SelfAdjointEigenSolver<Mat<D, D>> eig(m);
    return eig.eigenvectors() * eig.eigenvalues().cwiseSqrt().cwiseInverse().asDiagonal() *
           eig.eigenvectors().transpose();
}

/// |K|_M = sqrt(det(E^T M E)) / m!.
template <int M, int D>
double metric_measure(const EdgeMatrix<M, D>& e, const Mat<D, D>& metric) {
    require_spd<D>(metric);
    if (e.degenerate) return 0.0;
    // E^T M E = (L^T E)^T (L^T E) with M = L L^T
    const Eigen::LLT<Mat<D, D>> llt(metric);
    return detail::column_volume<M, D>(Mat<D, M>(llt.matrixU() * e.entries)) / factorial(M);
}

/// q-vectors and heights of K measured in the metric M: q_{j,M} = M^{-1/2} q_j.
template <int M, int D>
QVectors<M, D> metric_heights(const EdgeMatrix<M, D>& e, const Mat<D, D>& metric) {
    require_spd<D>(metric);
    auto out = pseudo_inverse_q_vectors(e);
    const Mat<D, D> inv_sqrt = spd_inverse_sqrt<D>(metric);
    for (int j = 0; j <= M; ++j) {
        out.q[j] = inv_sqrt * out.q[j];
        out.heights[j] = 1.0 / out.q[j].norm();
    }
    return out;
}

struct SimilarityResiduals {
    double align = 0.0;          // tr(T)/m - det(T)^{1/m}
    double align_inverse = 0.0;  // same for T^{-1}
};

/// AM-GM gaps of T = F'^T M F' with F' = E * E_hat^{-1}; both vanish iff K is
/// similar to the reference element in the metric M.
template <int M, int D>
SimilarityResiduals similarity_residuals(const EdgeMatrix<M, D>& e, const Mat<M, M>& e_hat,
                                         const Mat<D, D>& metric) {
    require_spd<D>(metric);
    if (e.degenerate) throw DegenerateElement(-1);
    const Mat<D, M> f = e.entries * e_hat.inverse();
    const Mat<M, M> t = f.transpose() * metric * f;
    const Mat<M, M> t_inv = t.inverse();
    SimilarityResiduals r;
    r.align = std::max(0.0, t.trace() / M - std::pow(t.determinant(), 1.0 / M));
    r.align_inverse = std::max(0.0, t_inv.trace() / M - std::pow(t_inv.determinant(), 1.0 / M));
    return r;
}

} // namespace mmpde
