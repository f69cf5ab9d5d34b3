#pragma once

// Mesh quality analytics: equidistribution and alignment measures, edge ratio
// and the a-priori lower bounds on metric heights and element sizes that hold
// along the flow for a coercive energy.

#include "mmpde/mesh.hpp"
#include "mmpde/mesh_energy.hpp"
#include "mmpde/metric_field.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

namespace mmpde {

struct HeightBounds {
    double c1 = 0.0;
    double c2 = 0.0;
    double min_metric_height = 0.0;  // lower bound on a_{K,M}
    double min_measure = 0.0;        // lower bound on |K|
};

/// Lower bounds on min a_{K,M} and min |K| given the energy of the initial mesh,
/// with alpha = theta, beta = 0 and q = mp/2.
template <int M>
HeightBounds height_bounds(double energy, std::size_t num_elements, const EnergyParams<M>& params, double rho_upper,
                           int d) {
    if (!(energy > 0.0)) throw InputError("energy must be positive for the height bound");
    const double m = M;
    const double q = params.q();
    const double lambda = regular_height_coefficient(M);
    const double denom = std::pow(m, m / 2.0) * factorial(M);
    const double expo = 2.0 * q - m;
    HeightBounds b;
    b.c1 = std::pow(params.theta * std::pow(lambda, 2.0 * q) / denom, m / expo);
    b.c2 = std::pow(b.c1, m) / denom;
    const double n = double(num_elements);
    b.min_metric_height = b.c1 * std::pow(energy, -1.0 / expo) * std::pow(n, -2.0 * q / (m * expo));
    b.min_measure = b.c2 * std::pow(energy, -m / expo) * std::pow(n, -2.0 * q / expo) * std::pow(rho_upper, -d / 2.0);
    return b;
}

struct ElementSizes {
    double min_measure = std::numeric_limits<double>::infinity();
    double min_metric_height = std::numeric_limits<double>::infinity();
};

/// min |K| and min a_{K,M} with M_K the vertex average of the nodal tensors;
/// a_{j,M} = 1 / sqrt(q_j^T M_K^{-1} q_j).
template <int M, int D>
ElementSizes element_sizes(const SimplicialMesh<M, D>& mesh, const MetricField<D>& field) {
    ElementSizes s;
    for (std::size_t k = 0; k < mesh.num_elements(); ++k) {
        const auto e = mesh.edge_matrix(k);
        if (e.degenerate) throw DegenerateElement(static_cast<std::ptrdiff_t>(k));
        s.min_measure = std::min(s.min_measure, simplex_measure(e));
        const Mat<D, D> mk = element_average_metric<D>(field, mesh.element(k));
        const auto qv = pseudo_inverse_q_vectors(e);
        if (mk.isDiagonal(0.0) && (mk.diagonal().array() == mk(0, 0)).all()) {
            // scalar metric c I: a_{j,M} = sqrt(c) a_j
            if (!(mk(0, 0) > 0.0)) throw NumericalError("metric tensor is not positive definite");
            for (double h : qv.heights) s.min_metric_height = std::min(s.min_metric_height, std::sqrt(mk(0, 0)) * h);
            continue;
        }
        const Eigen::LLT<Mat<D, D>> llt(mk);
        if (llt.info() != Eigen::Success) throw NumericalError("metric tensor is not positive definite");
        for (const auto& q : qv.q)
            s.min_metric_height = std::min(s.min_metric_height, 1.0 / std::sqrt(q.dot(llt.solve(q))));
    }
    return s;
}

struct QualityReport {
    std::vector<double> eq_values;   // N |K|_M / sigma_h
    double eq_max = 0.0;
    double eq_min = 0.0;
    double eq_cov = 0.0;             // coefficient of variation of eq_values
    std::vector<double> ali_values;  // (tr(T)/m) / det(T)^{1/m}
    double ali_mean = 0.0;
    double bound_margin = 0.0;       // min a_{K,M} - lower bound
    double size_margin = 0.0;        // min |K| - lower bound
    double edge_ratio = 0.0;         // max / min Euclidean edge length
    double energy = 0.0;
    double min_measure = 0.0;
    double min_metric_height = 0.0;
    bool coercive = true;
};

/// Quality of the current mesh. The height bound is evaluated with
/// reference_energy (pass the energy of the initial mesh of a trajectory; the
/// current energy is used when it is not positive).
template <int M, int D>
QualityReport quality_report(const SimplicialMesh<M, D>& mesh, const MetricField<D>& field,
                             const EnergyParams<M>& params, double reference_energy = 0.0) {
    if (mesh.empty()) throw InputError("quality report of an empty mesh");
    const std::size_t n = mesh.num_elements();
    QualityReport r;
    r.coercive = params.coercive();
    r.eq_values.resize(n);
    r.ali_values.resize(n);
    double sigma = 0.0;
    std::vector<double> km(n);
    const Mat<M, M> e_hat_inv = params.reference.edge_matrix_inverse;
    for (std::size_t k = 0; k < n; ++k) {
        const auto e = mesh.edge_matrix(k);
        if (e.degenerate) throw DegenerateElement(static_cast<std::ptrdiff_t>(k));
        const Mat<D, D> mk = element_average_metric<D>(field, mesh.element(k));
        km[k] = metric_measure(e, mk);
        sigma += km[k];
        const Mat<D, M> f = e.entries * e_hat_inv;
        const Mat<M, M> t = f.transpose() * mk * f;
        r.ali_values[k] = (t.trace() / M) / std::pow(t.determinant(), 1.0 / M);
    }
    double sum = 0.0;
    r.eq_max = 0.0;
    r.eq_min = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < n; ++k) {
        r.eq_values[k] = double(n) * km[k] / sigma;
        r.eq_max = std::max(r.eq_max, r.eq_values[k]);
        r.eq_min = std::min(r.eq_min, r.eq_values[k]);
        sum += r.eq_values[k];
    }
    const double mean = sum / double(n);
    // two passes: E[x^2] - mean^2 cancels to sqrt(eps) noise on uniform meshes
    double var = 0.0;
    for (double v : r.eq_values) var += (v - mean) * (v - mean);
    r.eq_cov = std::sqrt(var / double(n)) / mean;
    r.ali_mean = std::accumulate(r.ali_values.begin(), r.ali_values.end(), 0.0) / double(n);

    double emin = std::numeric_limits<double>::infinity(), emax = 0.0;
    for (auto [a, b] : mesh.edges()) {
        const double len = (mesh.vertex(a) - mesh.vertex(b)).norm();
        emin = std::min(emin, len);
        emax = std::max(emax, len);
    }
    r.edge_ratio = emax / emin;

    r.energy = total_energy(mesh, field, params).energy;
    const auto sizes = element_sizes(mesh, field);
    r.min_measure = sizes.min_measure;
    r.min_metric_height = sizes.min_metric_height;
    const double ref = reference_energy > 0.0 ? reference_energy : r.energy;
    const auto bounds = height_bounds<M>(ref, n, params, metric_bounds(field).upper, D);
    r.bound_margin = sizes.min_metric_height - bounds.min_metric_height;
    r.size_margin = sizes.min_measure - bounds.min_measure;
    return r;
}

} // namespace mmpde
