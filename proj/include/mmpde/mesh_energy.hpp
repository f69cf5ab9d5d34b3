#pragma once

// Combined equidistribution/alignment mesh energy
//
//   I_h = sum_K |K_hat| G_K(J, det J),   J = (F'^T M_K F')^{-1} = E_hat (E^T M_K E)^{-1} E_hat^T,
//   G   = theta det(J)^{-1/2} tr(J)^{mp/2} + (1 - 2 theta) m^{mp/2} det(J)^{(p-1)/2},
//
// and its analytic gradient with respect to every vertex coordinate.

#include "mmpde/mesh.hpp"
#include "mmpde/metric_field.hpp"
#include "mmpde/simplex_geometry.hpp"

#include <array>
#include <cmath>
#include <optional>
#include <vector>

namespace mmpde {

template <int M>
struct EnergyParams {
    double p = 1.5;
    double theta = 1.0 / 3.0;
    ReferenceElement<M> reference = reference_element<M>(1.0);

    /// G satisfies the coercivity bound with alpha = theta, beta = 0, q = mp/2.
    bool coercive() const { return theta > 0.0 && theta <= 0.5; }
    double q() const { return M * p / 2.0; }
};

/// Parameters with the reference element scaled to |K_hat| = 1/N.
template <int M>
EnergyParams<M> make_energy_params(std::size_t num_elements, double p = 1.5, double theta = 1.0 / 3.0) {
    if (!(p > 1.0)) throw InputError("energy exponent p must be greater than 1");
    if (!(theta > 0.0 && theta <= 1.0)) throw InputError("energy weight theta must lie in (0, 1]");
    if (num_elements == 0) throw InputError("mesh has no elements");
    return {p, theta, reference_element<M>(1.0 / double(num_elements))};
}

template <int M>
struct ElementJacobian {
    Mat<M, M> j;
    double det_j = 0.0;
};

/// J = E_hat (E^T M_K E)^{-1} E_hat^T and det J = det(E_hat)^2 / det(E^T M_K E).
template <int M, int D>
ElementJacobian<M> element_jacobian(const EdgeMatrix<M, D>& e, const Mat<M, M>& e_hat, const Mat<D, D>& metric) {
    if (e.degenerate) throw DegenerateElement(-1);
    const Mat<M, M> a = e.entries.transpose() * metric * e.entries;
    Eigen::LLT<Mat<M, M>> llt(a);
    if (llt.info() != Eigen::Success) throw DegenerateElement(-1, "singular metric Gram matrix");
    const Mat<M, M> a_inv = llt.solve(Mat<M, M>::Identity());
    const double det_hat = e_hat.determinant();
    return {e_hat * a_inv * e_hat.transpose(), det_hat * det_hat / a.determinant()};
}

template <int M>
double g_function(const Mat<M, M>& j, double det_j, double p, double theta) {
    if (!(det_j > 0.0)) throw DegenerateElement(-1, "non-positive det(J)");
    const double mp2 = M * p / 2.0;
    return theta * std::pow(det_j, -0.5) * std::pow(j.trace(), mp2) +
           (1.0 - 2.0 * theta) * std::pow(double(M), mp2) * std::pow(det_j, (p - 1.0) / 2.0);
}

template <int M>
double g_function(const Mat<M, M>& j, double det_j, const EnergyParams<M>& params) {
    return g_function<M>(j, det_j, params.p, params.theta);
}

template <int M>
struct GDerivatives {
    double dg_dj_scale = 0.0;  // dG/dJ = dg_dj_scale * I
    Mat<M, M> dg_dj = Mat<M, M>::Zero();
    double dg_ddet = 0.0;
};

/// Partial derivatives of G with J and det(J) treated as independent variables.
template <int M>
GDerivatives<M> g_derivatives(const Mat<M, M>& j, double det_j, double p, double theta) {
    if (!(det_j > 0.0)) throw DegenerateElement(-1, "non-positive det(J)");
    const double mp = M * p;
    const double tr = j.trace();
    GDerivatives<M> out;
    // tr(J)^{(mp-2)/2} with a zero exponent is taken as 1
    const double tr_pow = (mp == 2.0) ? 1.0 : std::pow(tr, (mp - 2.0) / 2.0);
    out.dg_dj_scale = theta * mp / 2.0 * std::pow(det_j, -0.5) * tr_pow;
    out.dg_dj = out.dg_dj_scale * Mat<M, M>::Identity();
    out.dg_ddet = -theta / 2.0 * std::pow(det_j, -1.5) * std::pow(tr, mp / 2.0) +
                  (p - 1.0) / 2.0 * (1.0 - 2.0 * theta) * std::pow(double(M), mp / 2.0) *
                      std::pow(det_j, (p - 3.0) / 2.0);
    return out;
}

template <int M>
GDerivatives<M> g_derivatives(const Mat<M, M>& j, double det_j, const EnergyParams<M>& params) {
    return g_derivatives<M>(j, det_j, params.p, params.theta);
}

/// Per-element cache: J, det J, G, its derivatives and dG/dx for every vertex.
template <int M, int D>
struct ElementEnergy {
    Mat<M, M> j;
    double det_j = 0.0;
    double g = 0.0;
    Mat<M, M> dg_dj;
    double dg_ddet = 0.0;
    Mat<D, D> dg_dm;                             // dG/dM_K
    std::array<Vec<D>, M + 1> grad_vertices;     // dG/dx_j^K (columns)
    double metric_measure = 0.0;                 // |K|_M
};

/// G_K and its gradient with respect to the element's vertices. The metric on K
/// is the piecewise-linear interpolant of the (frozen) nodal tensors, so M_K is
/// their vertex average and its dependence on x enters through the barycenter.
template <int M, int D>
ElementEnergy<M, D> element_vertex_gradient(const EdgeMatrix<M, D>& e, const EnergyParams<M>& params,
                                            const std::array<Mat<D, D>, M + 1>& nodal_metric) {
    if (e.degenerate) throw DegenerateElement(-1);
    Mat<D, D> m_k = Mat<D, D>::Zero();
    for (const auto& t : nodal_metric) m_k += t;
    m_k /= double(M + 1);

    const Mat<M, M>& e_hat = params.reference.edge_matrix;
    const Mat<D, M>& ek = e.entries;
    const Mat<M, M> a = ek.transpose() * m_k * ek;
    Eigen::LLT<Mat<M, M>> llt(a);
    if (llt.info() != Eigen::Success) throw DegenerateElement(-1, "singular metric Gram matrix");
    const Mat<M, M> a_inv = llt.solve(Mat<M, M>::Identity());
    const double det_a = a.determinant();
    const double det_hat = params.reference.det_edge_matrix;

    ElementEnergy<M, D> out;
    out.j = e_hat * a_inv * e_hat.transpose();
    out.det_j = det_hat * det_hat / det_a;
    out.g = g_function<M>(out.j, out.det_j, params);
    const auto dg = g_derivatives<M>(out.j, out.det_j, params);
    out.dg_dj = dg.dg_dj;
    out.dg_ddet = dg.dg_ddet;
    out.metric_measure = std::sqrt(det_a) / factorial(M);

    // dG/dE (m x d)
    const Mat<M, M> inner = a_inv * e_hat.transpose() * dg.dg_dj * e_hat * a_inv;
    const Mat<M, D> ainv_et_m = a_inv * ek.transpose() * m_k;
    const Mat<M, D> dg_de = -2.0 * inner * ek.transpose() * m_k - 2.0 * out.det_j * dg.dg_ddet * ainv_et_m;

    // dG/dM_K (d x d)
    const Mat<D, D> e_ainv_et = ek * a_inv * ek.transpose();
    out.dg_dm = -ek * inner * ek.transpose() - out.det_j * dg.dg_ddet * e_ainv_et;

    // [-e^T; I] dG/dE
    out.grad_vertices[0] = -dg_de.colwise().sum().transpose();
    for (int j = 1; j <= M; ++j) out.grad_vertices[j] = dg_de.row(j - 1).transpose();

    // metric part: (1/(m+1)) sum_j tr(dG/dM_K M_j) dphi_j/dx, added to every vertex;
    // it vanishes when the nodal tensors agree because the q_j sum to zero
    bool uniform = true;
    for (int j = 1; j <= M && uniform; ++j) uniform = nodal_metric[j] == nodal_metric[0];
    if (uniform) return out;
    const auto qv = pseudo_inverse_q_vectors(e);
    Vec<D> metric_part = Vec<D>::Zero();
    for (int j = 0; j <= M; ++j) metric_part += (out.dg_dm * nodal_metric[j]).trace() * qv.q[j];
    metric_part /= double(M + 1);
    for (int j = 0; j <= M; ++j) out.grad_vertices[j] += metric_part;
    return out;
}

template <int D>
struct EnergyReport {
    double energy = 0.0;             // I_h
    double sigma = 0.0;              // sigma_h = sum_K |K|_M
    std::vector<double> g;           // G_K
    std::vector<double> metric_measure;  // |K|_M
    std::vector<Vec<D>> gradient;    // dI_h/dx_i
};

template <int M, int D>
std::array<Mat<D, D>, M + 1> element_nodal_metric(const MetricField<D>& field,
                                                  const typename SimplicialMesh<M, D>::Element& el) {
    std::array<Mat<D, D>, M + 1> out;
    for (int j = 0; j <= M; ++j) out[j] = field.nodal[el[j]];
    return out;
}

/// I_h, sigma_h and the gradient assembled over element patches in element order.
template <int M, int D>
EnergyReport<D> total_energy(const SimplicialMesh<M, D>& mesh, const MetricField<D>& field,
                             const EnergyParams<M>& params) {
    if (field.size() != mesh.num_vertices()) throw InputError("metric field does not match mesh");
    EnergyReport<D> report;
    report.g.resize(mesh.num_elements());
    report.metric_measure.resize(mesh.num_elements());
    report.gradient.assign(mesh.num_vertices(), Vec<D>::Zero());
    const double k_hat = params.reference.measure;
    for (std::size_t k = 0; k < mesh.num_elements(); ++k) {
        const auto& el = mesh.element(k);
        ElementEnergy<M, D> ee;
        try {
            ee = element_vertex_gradient<M, D>(mesh.edge_matrix(k), params, element_nodal_metric<M, D>(field, el));
        } catch (const DegenerateElement& err) {
            throw DegenerateElement(static_cast<std::ptrdiff_t>(k));
        }
        report.g[k] = ee.g;
        report.metric_measure[k] = ee.metric_measure;
        report.energy += k_hat * ee.g;
        report.sigma += ee.metric_measure;
        for (int j = 0; j <= M; ++j) report.gradient[el[j]] += k_hat * ee.grad_vertices[j];
    }
    return report;
}

/// The metric of one step, frozen as the piecewise-linear interpolant of the
/// nodal tensors on an anchor mesh. Moving an element shifts its barycenter
/// through that field: M_K(x) = M_K(anchor) + sum_j M_j (q_j . (x_K - x_K(anchor))).
/// This is the energy whose exact gradient element_vertex_gradient returns at
/// the anchor, and it is what step acceptance compares against.
template <int M, int D>
class FrozenMetric {
public:
    FrozenMetric(const SimplicialMesh<M, D>& anchor, const MetricField<D>& field) {
        const std::size_t ne = anchor.num_elements();
        base_.resize(ne);
        bary_.resize(ne);
        slope_.resize(ne);
        constant_ = true;
        for (std::size_t i = 1; i < field.size() && constant_; ++i)
            constant_ = (field.nodal[i] == field.nodal[0]);
        for (std::size_t k = 0; k < ne; ++k) {
            const auto& el = anchor.element(k);
            base_[k] = element_average_metric<D>(field, el);
            bary_[k] = anchor.barycenter(k);
            if (constant_) continue;
            const auto qv = pseudo_inverse_q_vectors(anchor.edge_matrix(k));
            for (int j = 0; j <= M; ++j) slope_[k][j] = {qv.q[j], field.nodal[el[j]]};
        }
    }

    Mat<D, D> element_metric(std::size_t k, const Vec<D>& barycenter) const {
        if (constant_) return base_[k];
        Mat<D, D> m = base_[k];
        const Vec<D> shift = barycenter - bary_[k];
        for (const auto& [q, t] : slope_[k]) m += q.dot(shift) * t;
        return m;
    }

    bool constant() const { return constant_; }

private:
    std::vector<Mat<D, D>> base_;
    std::vector<Vec<D>> bary_;
    std::vector<std::array<std::pair<Vec<D>, Mat<D, D>>, M + 1>> slope_;
    bool constant_ = true;
};

/// I_h of trial positions on the mesh topology under a frozen metric; nullopt
/// when an element is degenerate or the interpolated metric stops being
/// positive definite.
template <int M, int D>
std::optional<double> energy_value(const SimplicialMesh<M, D>& topology, const std::vector<Vec<D>>& x,
                                   const FrozenMetric<M, D>& metric, const EnergyParams<M>& params) {
    double total = 0.0;
    const Mat<M, M>& e_hat = params.reference.edge_matrix;
    const double det_hat = params.reference.det_edge_matrix;
    for (std::size_t k = 0; k < topology.num_elements(); ++k) {
        const auto& el = topology.element(k);
        std::array<Vec<D>, M + 1> pts;
        Vec<D> bary = Vec<D>::Zero();
        for (int j = 0; j <= M; ++j) {
            pts[j] = x[el[j]];
            bary += pts[j];
        }
        bary /= double(M + 1);
        const auto e = edge_matrix<M, D>(pts);
        if (e.degenerate) return std::nullopt;
        const Mat<D, D> m_k = metric.element_metric(k, bary);
        if (!metric.constant()) {
            Eigen::LLT<Mat<D, D>> llt(m_k);
            if (llt.info() != Eigen::Success) return std::nullopt;
        }
        const Mat<M, M> a = e.entries.transpose() * m_k * e.entries;
        Eigen::LLT<Mat<M, M>> llt(a);
        if (llt.info() != Eigen::Success) return std::nullopt;
        const Mat<M, M> j = e_hat * llt.solve(Mat<M, M>::Identity()) * e_hat.transpose();
        const double det_j = det_hat * det_hat / a.determinant();
        if (!(det_j > 0.0) || !std::isfinite(det_j)) return std::nullopt;
        total += params.reference.measure * g_function<M>(j, det_j, params);
    }
    return total;
}

template <int M, int D>
std::optional<double> energy_value(const SimplicialMesh<M, D>& mesh, const FrozenMetric<M, D>& metric,
                                   const EnergyParams<M>& params) {
    return energy_value<M, D>(mesh, mesh.vertices(), metric, params);
}

} // namespace mmpde
