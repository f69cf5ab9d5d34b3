#pragma once

// Independent reference computations for the tests. Nothing here calls the
// library's energy or geometry kernels; formulas are written out directly,
// generic-size Eigen decompositions replace the fixed-size fast paths.

#include "mmpde/mesh.hpp"
#include "mmpde/metric_field.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline double factorial(int m) {
    double f = 1.0;
    for (int i = 2; i <= m; ++i) f *= i;
    return f;
}

/// Regular m-simplex vertices with unit edge built from the standard simplex:
/// e_0..e_m in R^{m+1}, edges rotated into R^m by QR.
inline MatrixXd regular_simplex_edges(int m, double measure) {
    const MatrixXd pts = MatrixXd::Identity(m + 1, m + 1) / std::sqrt(2.0);  // unit edges
    MatrixXd edges(m + 1, m);
    for (int j = 1; j <= m; ++j) edges.col(j - 1) = pts.col(j) - pts.col(0);
    Eigen::HouseholderQR<MatrixXd> qr(edges);
    MatrixXd r = MatrixXd(qr.matrixQR().triangularView<Eigen::Upper>()).topRows(m);
    const double vol = std::abs(r.determinant()) / factorial(m);
    return r * std::pow(measure / vol, 1.0 / m);
}

/// |K| from the Gram determinant computed via a full SVD.
inline double measure_svd(const MatrixXd& e) {
    Eigen::JacobiSVD<MatrixXd> svd(e);
    double prod = 1.0;
    for (int i = 0; i < e.cols(); ++i) prod *= svd.singularValues()(i);
    return prod / factorial(int(e.cols()));
}

/// Classical formulas: |b - a|, |cross| / 2, |det| / 6.
inline double measure_classical(const std::vector<VectorXd>& v) {
    const int m = int(v.size()) - 1;
    const int d = int(v[0].size());
    if (m == 1) return (v[1] - v[0]).norm();
    if (m == 2) {
        Eigen::Vector3d a = Eigen::Vector3d::Zero(), b = Eigen::Vector3d::Zero();
        a.head(d) = v[1] - v[0];
        b.head(d) = v[2] - v[0];
        return a.cross(b).norm() / 2.0;
    }
    Eigen::Matrix3d e;
    e << v[1] - v[0], v[2] - v[0], v[3] - v[0];
    return std::abs(e.determinant()) / 6.0;
}

/// Distance from v[j] to the affine hull of the other vertices, by least squares.
inline double point_to_facet_distance(const std::vector<VectorXd>& v, int j) {
    const int m = int(v.size()) - 1;
    std::vector<VectorXd> facet;
    for (int l = 0; l <= m; ++l)
        if (l != j) facet.push_back(v[l]);
    if (facet.size() == 1) return (v[j] - facet[0]).norm();
    MatrixXd a(v[0].size(), facet.size() - 1);
    for (std::size_t l = 1; l < facet.size(); ++l) a.col(l - 1) = facet[l] - facet[0];
    const VectorXd rhs = v[j] - facet[0];
    const VectorXd coef = a.completeOrthogonalDecomposition().solve(rhs);
    return (rhs - a * coef).norm();
}

/// Energy of one element with the metric given directly, through
/// F = E * E_hat^{-1} and J = (F^T M F)^{-1}.
inline double element_g(const MatrixXd& e, const MatrixXd& e_hat, const MatrixXd& metric, double p, double theta) {
    const int m = int(e.cols());
    const MatrixXd f = e * e_hat.inverse();
    const MatrixXd j = (f.transpose() * metric * f).inverse();
    const double det_j = j.determinant();
    const double q = m * p / 2.0;
    return theta * std::pow(det_j, -0.5) * std::pow(j.trace(), q) +
           (1.0 - 2.0 * theta) * std::pow(double(m), q) * std::pow(det_j, (p - 1.0) / 2.0);
}

/// Barycentric coordinates of point y with respect to the anchor element
/// (least squares in the element's affine hull).
inline VectorXd barycentric(const std::vector<VectorXd>& anchor, const VectorXd& y) {
    const int m = int(anchor.size()) - 1;
    MatrixXd a(anchor[0].size(), m);
    for (int j = 1; j <= m; ++j) a.col(j - 1) = anchor[j] - anchor[0];
    const VectorXd t = a.completeOrthogonalDecomposition().solve(y - anchor[0]);
    VectorXd lambda(m + 1);
    lambda(0) = 1.0 - t.sum();
    lambda.tail(m) = t;
    return lambda;
}

/// I_h of positions x on a mesh topology. The element metric is the linear
/// interpolant of the anchor's nodal tensors over the anchor element, evaluated
/// at the element's current barycenter.
template <int M, int D>
double energy(const mmpde::SimplicialMesh<M, D>& anchor, const std::vector<VectorXd>& x,
              const std::vector<MatrixXd>& nodal, double p, double theta) {
    const double n = double(anchor.num_elements());
    const MatrixXd e_hat = regular_simplex_edges(M, 1.0 / n);
    double total = 0.0;
    for (std::size_t k = 0; k < anchor.num_elements(); ++k) {
        const auto& el = anchor.element(k);
        std::vector<VectorXd> a(M + 1);
        VectorXd bary = VectorXd::Zero(D);
        MatrixXd e(D, M);
        for (int j = 0; j <= M; ++j) {
            a[j] = anchor.vertex(el[j]);
            bary += x[el[j]] / double(M + 1);
        }
        for (int j = 1; j <= M; ++j) e.col(j - 1) = x[el[j]] - x[el[0]];
        const VectorXd lambda = barycentric(a, bary);
        MatrixXd metric = MatrixXd::Zero(D, D);
        for (int j = 0; j <= M; ++j) metric += lambda(j) * nodal[el[j]];
        total += element_g(e, e_hat, metric, p, theta) / n;
    }
    return total;
}

/// Central finite-difference gradient of `energy` at the anchor positions.
template <int M, int D>
std::vector<VectorXd> fd_gradient(const mmpde::SimplicialMesh<M, D>& mesh, const std::vector<MatrixXd>& nodal,
                                  double p, double theta, double h) {
    std::vector<VectorXd> x(mesh.num_vertices());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = mesh.vertex(i);
    std::vector<VectorXd> g(x.size(), VectorXd::Zero(D));
    for (std::size_t i = 0; i < x.size(); ++i)
        for (int c = 0; c < D; ++c) {
            const double keep = x[i](c);
            x[i](c) = keep + h;
            const double ep = energy(mesh, x, nodal, p, theta);
            x[i](c) = keep - h;
            const double em = energy(mesh, x, nodal, p, theta);
            x[i](c) = keep;
            g[i](c) = (ep - em) / (2.0 * h);
        }
    return g;
}

/// Random SPD matrix R diag(exp(U(-1,1))) R^T.
inline MatrixXd random_spd(int d, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss;
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    MatrixXd a(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = gauss(rng);
    Eigen::HouseholderQR<MatrixXd> qr(a);
    const MatrixXd q = qr.householderQ();
    VectorXd lambda(d);
    for (int i = 0; i < d; ++i) lambda(i) = std::exp(u(rng));
    MatrixXd s = q * lambda.asDiagonal() * q.transpose();
    return 0.5 * (s + s.transpose());
}

// ---------------------------------------------------------------------------
// random meshes with at most 50 elements

/// Closed polygon around a perturbed circle (d = 2) or a perturbed saddle
/// loop (d = 3) with n segments; an open perturbed chain for d = 1.
template <int D>
mmpde::SimplicialMesh<1, D> random_curve(int n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<mmpde::Vec<D>> x;
    std::vector<std::array<int, 2>> el;
    if constexpr (D == 1) {
        for (int i = 0; i <= n; ++i) x.push_back(mmpde::Vec<1>(i + 0.3 * u(rng)));
        for (int i = 0; i < n; ++i) el.push_back({i, i + 1});
    } else {
        for (int i = 0; i < n; ++i) {
            const double s = 2.0 * std::numbers::pi * (i + 0.3 * u(rng)) / n;
            const double r = 1.0 + 0.2 * u(rng);
            mmpde::Vec<D> p;
            p[0] = r * std::cos(s);
            p[1] = r * std::sin(s);
            if constexpr (D == 3) p[2] = 0.3 * std::sin(2.0 * s) + 0.05 * u(rng);
            x.push_back(p);
        }
        for (int i = 0; i < n; ++i) el.push_back({i, (i + 1) % n});
    }
    return {std::move(x), std::move(el)};
}

/// Perturbed structured triangulation of [0,1]^2 (nx * ny * 2 triangles),
/// lifted onto a smooth height field when D = 3.
template <int D>
mmpde::SimplicialMesh<2, D> random_triangulation(int nx, int ny, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<mmpde::Vec<D>> x;
    for (int j = 0; j <= ny; ++j)
        for (int i = 0; i <= nx; ++i) {
            double px = double(i) / nx, py = double(j) / ny;
            if (i > 0 && i < nx) px += 0.2 * u(rng) / nx;
            if (j > 0 && j < ny) py += 0.2 * u(rng) / ny;
            mmpde::Vec<D> p;
            p[0] = px;
            p[1] = py;
            if constexpr (D == 3) p[2] = 0.3 * std::sin(2.0 * px) * std::cos(3.0 * py) + 0.02 * u(rng);
            x.push_back(p);
        }
    std::vector<std::array<int, 3>> el;
    auto id = [nx](int i, int j) { return j * (nx + 1) + i; };
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            el.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
            el.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    return {std::move(x), std::move(el)};
}

/// Perturbed cube [0,1]^3 split into 2x2x2 sub-cubes of 6 tetrahedra (48).
inline mmpde::SimplicialMesh<3, 3> random_tetrahedra(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const int n = 2;
    std::vector<mmpde::Vec<3>> x;
    for (int k = 0; k <= n; ++k)
        for (int j = 0; j <= n; ++j)
            for (int i = 0; i <= n; ++i) {
                mmpde::Vec<3> p(double(i) / n, double(j) / n, double(k) / n);
                for (int c = 0; c < 3; ++c) p[c] += 0.08 * u(rng) / n;
                x.push_back(p);
            }
    auto id = [n](int i, int j, int k) { return (k * (n + 1) + j) * (n + 1) + i; };
    std::vector<std::array<int, 4>> el;
    for (int k = 0; k < n; ++k)
        for (int j = 0; j < n; ++j)
            for (int i = 0; i < n; ++i) {
                const int v0 = id(i, j, k), v1 = id(i + 1, j, k), v2 = id(i, j + 1, k), v3 = id(i + 1, j + 1, k);
                const int v4 = id(i, j, k + 1), v5 = id(i + 1, j, k + 1), v6 = id(i, j + 1, k + 1),
                          v7 = id(i + 1, j + 1, k + 1);
                // Kuhn subdivision along the main diagonal v0-v7
                el.push_back({v0, v1, v3, v7});
                el.push_back({v0, v1, v5, v7});
                el.push_back({v0, v2, v3, v7});
                el.push_back({v0, v2, v6, v7});
                el.push_back({v0, v4, v5, v7});
                el.push_back({v0, v4, v6, v7});
            }
    return {std::move(x), std::move(el)};
}

// ---------------------------------------------------------------------------
// geometry

/// Icosphere of the given subdivision level projected onto the unit sphere.
inline mmpde::SimplicialMesh<2, 3> icosphere(int level) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<mmpde::Vec<3>> x = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                                    {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& p : x) p.normalize();
    std::vector<std::array<int, 3>> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                         {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                         {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                         {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int l = 0; l < level; ++l) {
        std::map<std::pair<int, int>, int> mid;
        auto midpoint = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = mid.find(key);
            if (it != mid.end()) return it->second;
            x.push_back((x[a] + x[b]).normalized());
            const int id = int(x.size()) - 1;
            mid.emplace(key, id);
            return id;
        };
        std::vector<std::array<int, 3>> next;
        for (const auto& tri : f) {
            const int a = midpoint(tri[0], tri[1]), b = midpoint(tri[1], tri[2]), c = midpoint(tri[2], tri[0]);
            next.push_back({tri[0], a, c});
            next.push_back({tri[1], b, a});
            next.push_back({tri[2], c, b});
            next.push_back({a, b, c});
        }
        f = std::move(next);
    }
    return {std::move(x), std::move(f)};
}

/// Signed algebraic residuals of the implicit forms, scaled to distances by
/// the gradient norm.
inline double ellipse_distance(const mmpde::Vec<2>& p, double r) {
    const double f = p[0] * p[0] / (r * r) + p[1] * p[1] - 1.0;
    const double g = std::hypot(2.0 * p[0] / (r * r), 2.0 * p[1]);
    return std::abs(f) / g;
}

inline double hyperboloid_distance(const mmpde::Vec<3>& p) {
    const double f = p[0] * p[0] + p[1] * p[1] - p[2] * p[2] - 1.0;
    const double g = 2.0 * p.norm();
    return std::abs(f) / g;
}

/// Mexican cap: z fixes the parameter, so the deviation is exact.
inline double mexican_cap_distance(const mmpde::Vec<3>& p) {
    const double s = p[2];
    const double g = std::exp(0.1 * s);
    return std::hypot(p[0] - g * std::cos(10.0 * s), p[1] - g * std::sin(10.0 * s));
}

/// Best-fit rotation R (Kabsch) mapping centered a onto centered b; returns the
/// largest point distance after alignment.
inline double aligned_max_distance(const std::vector<VectorXd>& a, const std::vector<VectorXd>& b) {
    const int d = int(a[0].size());
    VectorXd ca = VectorXd::Zero(d), cb = VectorXd::Zero(d);
    for (std::size_t i = 0; i < a.size(); ++i) {
        ca += a[i];
        cb += b[i];
    }
    ca /= double(a.size());
    cb /= double(b.size());
    MatrixXd h = MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < a.size(); ++i) h += (a[i] - ca) * (b[i] - cb).transpose();
    Eigen::JacobiSVD<MatrixXd> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    MatrixXd s = MatrixXd::Identity(d, d);
    if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0) s(d - 1, d - 1) = -1.0;
    const MatrixXd r = svd.matrixV() * s * svd.matrixU().transpose();
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, (r * (a[i] - ca) + cb - b[i]).norm());
    return worst;
}

} // namespace oracle
