#pragma once

// Moving mesh flow: dx_i/dt = u_i with u_i the projected, boundary-constrained
// velocity -(P_i / tau) dI_h/dx_i, integrated by explicit Euler with a capped,
// backtracked step so every accepted step decreases the energy and keeps all
// elements nonsingular.

#include "mmpde/discrete_differential.hpp"
#include "mmpde/geometry.hpp"
#include "mmpde/mesh.hpp"
#include "mmpde/mesh_energy.hpp"
#include "mmpde/metric_field.hpp"
#include "mmpde/quality.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

namespace mmpde {

enum class BoundaryPolicy { free, fixed, slide };

struct FlowConfig {
    double tau = 1.0;
    double dt_init = 1e-3;
    double dt_max_displacement_fraction = 0.2;
    int max_steps = 10000;
    double tol_velocity = 1e-6;  // relative to the mean edge length
    bool reproject = false;
    std::vector<BoundaryPolicy> boundary_policy;  // per vertex; empty: default_boundary_policy
    double dt_growth = 1.5;  // applied after a step accepted at its first trial
    int max_halvings = 20;
    double monotonicity_slack = 1e-12;

    void validate() const {
        if (!(tau > 0.0)) throw InputError("flow.tau must be positive");
        if (!(dt_init > 0.0)) throw InputError("flow.dt_init must be positive");
        if (!(dt_max_displacement_fraction > 0.0 && dt_max_displacement_fraction < 1.0))
            throw InputError("displacement fraction must lie in (0, 1)");
        if (max_steps < 0) throw InputError("flow.max_steps must be nonnegative");
        if (!(tol_velocity >= 0.0)) throw InputError("flow.tol must be nonnegative");
    }
};

/// One row of the flow log, describing the state at the start of a step.
struct StepRecord {
    int step = 0;
    double t = 0.0;
    double energy = 0.0;
    double min_measure = 0.0;
    double min_metric_height = 0.0;
    double max_velocity = 0.0;
    double grad_residual = 0.0;
};

template <int M, int D>
struct FlowState {
    double t = 0.0;
    SimplicialMesh<M, D> mesh;
    std::optional<Parametrization<M, D>> parametrization;
    std::vector<Vec<D>> velocities;
    std::vector<std::pair<double, double>> energy_history;  // (t, I_h)
    struct Quality {
        double t, min_measure, min_metric_height;
    };
    std::vector<Quality> quality_history;
    std::vector<StepRecord> log;
    // I_h(after) - I_h(before) of each accepted step, both under that step's metric
    std::vector<double> step_energy_change;
    std::vector<double> step_energy_before;
    bool converged = false;
    int steps = 0;
    int halvings = 0;
    double dt = 0.0;  // last accepted step size, 0 before the first step
    // dt has reached the displacement cap or the energy-decrease limit at least
    // once; before that a small displacement only reflects a small dt_init
    bool dt_settled = false;
    bool last_halved = false;
    double grad_residual = 0.0;
};

/// P_i = det(M_i)^{m(p-1)/(2d)}.
template <int D>
double balance_factor(const Mat<D, D>& metric, int m, double p) {
    require_spd<D>(metric);
    return std::pow(metric.determinant(), m * (p - 1.0) / (2.0 * D));
}

/// v_i = -(P_i / tau) dI_h/dx_i.
template <int D>
std::vector<Vec<D>> nodal_velocity(const EnergyReport<D>& report, const MetricField<D>& field, int m, double p,
                                   double tau) {
    if (!(tau > 0.0)) throw InputError("flow.tau must be positive");
    std::vector<Vec<D>> v(report.gradient.size());
    for (std::size_t i = 0; i < v.size(); ++i)
        v[i] = -(balance_factor<D>(field.nodal[i], m, p) / tau) * report.gradient[i];
    return v;
}

enum class ProjectionKind { bulk, surface, curve };

template <int M, int D>
constexpr ProjectionKind projection_kind() {
    if constexpr (M == D) return ProjectionKind::bulk;
    else if constexpr (M == 1) return ProjectionKind::curve;
    else return ProjectionKind::surface;
}

/// bulk: v; surface: v - (v.n) n; curve: (v.t) t. The direction must be a unit vector.
template <int D>
Vec<D> project_velocity(const Vec<D>& v, ProjectionKind kind, const Vec<D>& direction = Vec<D>::Zero()) {
    if (kind == ProjectionKind::bulk) return v;
    if (std::abs(direction.norm() - 1.0) > 1e-8) throw InputError("projection direction is not a unit vector");
    if (kind == ProjectionKind::surface) return v - v.dot(direction) * direction;
    return v.dot(direction) * direction;
}

/// Local boundary geometry used by the slide policy.
template <int D>
struct SlideConstraint {
    enum class Kind { none, along, remove_normal } kind = Kind::none;
    Vec<D> direction = Vec<D>::Zero();
};

template <int D>
Vec<D> apply_boundary_policy(const Vec<D>& u, BoundaryPolicy policy, const SlideConstraint<D>& constraint) {
    switch (policy) {
    case BoundaryPolicy::free: return u;
    case BoundaryPolicy::fixed: return Vec<D>::Zero();
    case BoundaryPolicy::slide:
        if (constraint.kind == SlideConstraint<D>::Kind::along)
            return u.dot(constraint.direction) * constraint.direction;
        if (constraint.kind == SlideConstraint<D>::Kind::remove_normal)
            return u - u.dot(constraint.direction) * constraint.direction;
        throw InputError("slide boundary policy requested without boundary geometry");
    }
    return u;
}

/// Boundary vertices of curves are fixed; boundaries of surfaces and bulk meshes slide.
template <int M, int D>
std::vector<BoundaryPolicy> default_boundary_policy(const SimplicialMesh<M, D>& mesh) {
    std::vector<BoundaryPolicy> out(mesh.num_vertices(), BoundaryPolicy::free);
    for (std::size_t i = 0; i < out.size(); ++i)
        if (mesh.is_boundary(i)) out[i] = (M == 1) ? BoundaryPolicy::fixed : BoundaryPolicy::slide;
    return out;
}

/// Boundary vertices get `policy`, interior vertices stay free.
template <int M, int D>
std::vector<BoundaryPolicy> uniform_boundary_policy(const SimplicialMesh<M, D>& mesh, BoundaryPolicy policy) {
    std::vector<BoundaryPolicy> out(mesh.num_vertices(), BoundaryPolicy::free);
    for (std::size_t i = 0; i < out.size(); ++i)
        if (mesh.is_boundary(i)) out[i] = policy;
    return out;
}

namespace detail {

// Boundary corners (turning angle above this) do not slide.
inline constexpr double kCornerCos = 0.9396926207859084;  // cos(20 deg)

template <int M, int D>
SlideConstraint<D> slide_constraint(const SimplicialMesh<M, D>& mesh, std::size_t i) {
    SlideConstraint<D> c;
    if constexpr (M == 1) {
        return c;
    } else if constexpr (M == 2) {
        const auto& bn = mesh.boundary_neighbors(i);
        if (bn.size() != 2) return c;
        const Vec<D> a = mesh.vertex(i) - mesh.vertex(bn[0]);
        const Vec<D> b = mesh.vertex(bn[1]) - mesh.vertex(i);
        if (a.dot(b) < kCornerCos * a.norm() * b.norm()) return c;
        Vec<D> t = mesh.vertex(bn[1]) - mesh.vertex(bn[0]);
        if (!(t.norm() > 0.0)) return c;
        c.kind = SlideConstraint<D>::Kind::along;
        c.direction = t / t.norm();
        return c;
    } else {
        // bulk tetrahedral mesh: average normal of incident boundary facets
        std::vector<Vec<3>> normals;
        for (const auto& f : mesh.boundary_facets()) {
            if (f[0] != int(i) && f[1] != int(i) && f[2] != int(i)) continue;
            Vec<3> n = (mesh.vertex(f[1]) - mesh.vertex(f[0])).cross(mesh.vertex(f[2]) - mesh.vertex(f[0]));
            if (n.norm() > 0.0) normals.push_back(n.normalized());
        }
        if (normals.empty()) return c;
        Vec<3> avg = Vec<3>::Zero();
        for (const auto& n : normals) avg += normals[0].dot(n) >= 0.0 ? n : Vec<3>(-n);
        for (const auto& n : normals)
            if (std::abs(n.dot(normals[0])) < kCornerCos) return c;
        c.kind = SlideConstraint<D>::Kind::remove_normal;
        c.direction = avg.normalized();
        return c;
    }
}

template <int M, int D>
std::vector<Vec<D>> projection_directions(const SimplicialMesh<M, D>& mesh) {
    if constexpr (M == 1 && D > 1) return curve_tangents(mesh).directions;
    else if constexpr (M == 2 && D == 3) return surface_normals(mesh, false).directions;
    else return {};
}

} // namespace detail

/// Projected, boundary-constrained velocities and the matching projected gradient.
template <int M, int D>
struct ProjectedField {
    std::vector<Vec<D>> velocity;
    std::vector<Vec<D>> gradient;
    double raw_gradient_max = 0.0;  // max_i |dI_h/dx_i| before projection
};

// A projected gradient this small relative to the raw one is rounding noise:
// the mesh sits at a critical point.
inline constexpr double kCriticalRatio = 1e-12;

template <int M, int D>
ProjectedField<M, D> projected_velocities(const SimplicialMesh<M, D>& mesh, const EnergyReport<D>& report,
                                          const MetricField<D>& field, const EnergyParams<M>& params,
                                          const FlowConfig& config, const std::vector<BoundaryPolicy>& policy) {
    const auto v = nodal_velocity<D>(report, field, M, params.p, config.tau);
    const auto dirs = detail::projection_directions<M, D>(mesh);
    constexpr auto kind = projection_kind<M, D>();
    ProjectedField<M, D> out;
    out.velocity.resize(v.size());
    out.gradient.resize(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const Vec<D> dir = dirs.empty() ? Vec<D>::Zero() : dirs[i];
        Vec<D> u = project_velocity<D>(v[i], kind, dir);
        Vec<D> g = project_velocity<D>(report.gradient[i], kind, dir);
        if (policy[i] == BoundaryPolicy::slide) {
            const auto c = detail::slide_constraint(mesh, i);
            if (c.kind == SlideConstraint<D>::Kind::none && (M == 1 || !mesh.is_boundary(i)))
                throw InputError("slide boundary policy requested without boundary geometry (vertex " +
                                 std::to_string(i) + ")");
            // boundary corners have no unique tangent and stay put
            u = c.kind == SlideConstraint<D>::Kind::none ? Vec<D>::Zero() : apply_boundary_policy<D>(u, policy[i], c);
            g = c.kind == SlideConstraint<D>::Kind::none ? Vec<D>::Zero() : apply_boundary_policy<D>(g, policy[i], c);
        } else if (policy[i] == BoundaryPolicy::fixed) {
            u.setZero();
            g.setZero();
        }
        out.velocity[i] = u;
        out.gradient[i] = g;
        out.raw_gradient_max = std::max(out.raw_gradient_max, report.gradient[i].norm());
    }
    return out;
}

template <int M, int D>
using MetricBuilder = std::function<MetricField<D>(const SimplicialMesh<M, D>&)>;

template <int M, int D>
using FlowObserver = std::function<void(const FlowState<M, D>&, const StepRecord&)>;

template <int M, int D>
MetricBuilder<M, D> identity_metric_builder() {
    return [](const SimplicialMesh<M, D>& mesh) { return build_identity_metric(mesh); };
}

/// M = max(k, floor) I from the discrete curvature of the current mesh. A
/// non-positive floor is replaced by the default floor of the first mesh seen.
template <int M, int D>
MetricBuilder<M, D> curvature_metric_builder(double floor_eps = 0.0, int smoothing_passes = -1) {
    static_assert(M < D, "curvature metrics need a curve or surface");
    const int passes = smoothing_passes >= 0 ? smoothing_passes : (M == 1 ? 0 : 2);
    auto floor = std::make_shared<double>(floor_eps);
    return [floor, passes](const SimplicialMesh<M, D>& mesh) {
        VertexFrames<D> frames;
        if constexpr (M == 1) frames = curve_frames(mesh);
        else frames = surface_frames(mesh, false);
        if (!(*floor > 0.0)) *floor = default_curvature_floor(frames.curvature);
        auto field = build_curvature_metric(mesh, std::span<const double>(frames.curvature), *floor);
        return smooth_metric(std::move(field), mesh, passes);
    };
}

template <int M, int D>
FlowState<M, D> make_flow_state(SimplicialMesh<M, D> mesh,
                                std::optional<Parametrization<M, D>> parametrization = std::nullopt) {
    FlowState<M, D> s;
    s.mesh = std::move(mesh);
    s.parametrization = std::move(parametrization);
    s.velocities.assign(s.mesh.num_vertices(), Vec<D>::Zero());
    return s;
}

/// Energy, velocities and sizes of the current state, appended to its histories.
template <int M, int D>
std::pair<StepRecord, ProjectedField<M, D>> record_state(FlowState<M, D>& state, const MetricField<D>& field,
                                                         const EnergyParams<M>& params, const FlowConfig& config,
                                                         const std::vector<BoundaryPolicy>& policy) {
    const auto report = total_energy(state.mesh, field, params);
    auto pf = projected_velocities(state.mesh, report, field, params, config, policy);
    const auto sizes = element_sizes(state.mesh, field);
    StepRecord rec;
    rec.step = state.steps;
    rec.t = state.t;
    rec.energy = report.energy;
    rec.min_measure = sizes.min_measure;
    rec.min_metric_height = sizes.min_metric_height;
    for (std::size_t i = 0; i < pf.velocity.size(); ++i) {
        rec.max_velocity = std::max(rec.max_velocity, pf.velocity[i].norm());
        rec.grad_residual = std::max(rec.grad_residual, pf.gradient[i].norm());
    }
    state.velocities = pf.velocity;
    state.grad_residual = rec.grad_residual;
    state.energy_history.emplace_back(state.t, report.energy);
    state.quality_history.push_back({state.t, sizes.min_measure, sizes.min_metric_height});
    state.log.push_back(rec);
    return {rec, std::move(pf)};
}

/// One explicit Euler step with displacement cap and energy backtracking.
/// Returns the log record of the state the step started from.
template <int M, int D>
StepRecord advance_step(FlowState<M, D>& state, const MetricField<D>& field, const EnergyParams<M>& params,
                        const FlowConfig& config) {
    const auto& mesh = state.mesh;
    const std::size_t nv = mesh.num_vertices();
    const auto policy = config.boundary_policy.empty() ? default_boundary_policy(mesh) : config.boundary_policy;
    if (policy.size() != nv) throw InputError("boundary policy does not match vertex count");

    const auto [rec, pf] = record_state(state, field, params, config, policy);

    if (rec.max_velocity == 0.0 || rec.grad_residual <= kCriticalRatio * pf.raw_gradient_max) {
        state.t += state.dt > 0.0 ? state.dt : config.dt_init;
        state.converged = true;
        ++state.steps;
        return rec;
    }

    double cap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < nv; ++i) {
        const double s = pf.velocity[i].norm();
        if (s > 0.0) cap = std::min(cap, config.dt_max_displacement_fraction * mesh.min_incident_edge(i) / s);
    }
    // grow only after a step that was accepted at its first trial
    const double wanted =
        state.dt > 0.0 ? state.dt * (state.last_halved ? 1.0 : config.dt_growth) : config.dt_init;
    double dt = std::min(wanted, cap);
    if (cap <= wanted) state.dt_settled = true;

    const FrozenMetric<M, D> frozen(mesh, field);
    const std::optional<double> e0 = rec.energy;
    std::vector<Mat<D, M>> old_edges(mesh.num_elements());
    for (std::size_t k = 0; k < mesh.num_elements(); ++k) old_edges[k] = mesh.edge_matrix(k).entries;
    std::vector<bool> keep(nv, false);
    for (std::size_t i = 0; i < nv; ++i) keep[i] = policy[i] == BoundaryPolicy::fixed;
    const bool reproject_now = config.reproject && state.parametrization.has_value();

    std::vector<Vec<D>> trial(nv);
    std::optional<Parametrization<M, D>> trial_param;
    for (int half = 0; half <= config.max_halvings; ++half) {
        for (std::size_t i = 0; i < nv; ++i) trial[i] = mesh.vertex(i) + dt * pf.velocity[i];
        if (reproject_now) {
            trial_param = state.parametrization;
            reproject(*trial_param, mesh, trial, keep);
        }
        bool ok = true;
        for (std::size_t k = 0; k < mesh.num_elements() && ok; ++k) {
            const auto& el = mesh.element(k);
            std::array<Vec<D>, M + 1> pts;
            for (int j = 0; j <= M; ++j) pts[j] = trial[el[j]];
            const auto e_new = edge_matrix<M, D>(pts);
            if (e_new.degenerate || !((old_edges[k].transpose() * e_new.entries).determinant() > 0.0))
                ok = false;
        }
        std::optional<double> e1;
        if (ok) e1 = energy_value(mesh, trial, frozen, params);
        // compare the difference itself, the quantity that is logged
        if (ok && e1 && *e1 - *e0 <= config.monotonicity_slack * std::abs(*e0)) {
            double disp = 0.0;
            for (std::size_t i = 0; i < nv; ++i) disp = std::max(disp, (trial[i] - mesh.vertex(i)).norm());
            const double mean_edge = mesh.mean_edge_length();
            state.mesh.set_vertices(std::move(trial));
            if (reproject_now) state.parametrization = std::move(trial_param);
            state.t += dt;
            state.dt = dt;
            ++state.steps;
            state.halvings += half;
            state.step_energy_change.push_back(*e1 - *e0);
            state.step_energy_before.push_back(*e0);
            if (half > 0) state.dt_settled = true;
            state.last_halved = half > 0;
            state.converged = state.dt_settled && half == 0 && disp <= config.tol_velocity * mean_edge;
            return rec;
        }
        dt *= 0.5;
    }
    throw NumericalError("step rejected: energy or element validity could not be restored after " +
                         std::to_string(config.max_halvings) + " step halvings");
}

/// Iterate advance_step until the step displacement falls below tol_velocity
/// times the mean edge length or max_steps is reached. The metric is rebuilt
/// from the current mesh before every step. The observer sees every log row,
/// including the final state.
template <int M, int D>
FlowState<M, D> run_to_convergence(FlowState<M, D> state, const std::type_identity_t<MetricBuilder<M, D>>& metric,
                                   const EnergyParams<M>& params, const FlowConfig& config,
                                   const std::type_identity_t<FlowObserver<M, D>>& observer = {}) {
    config.validate();
    if constexpr (M == 2 && D == 3) check_consistent_orientation(state.mesh);
    while (state.steps < config.max_steps && !state.converged) {
        const auto field = metric(state.mesh);
        const auto rec = advance_step(state, field, params, config);
        if (observer) observer(state, rec);
    }
    // final state row
    const auto field = metric(state.mesh);
    const auto policy =
        config.boundary_policy.empty() ? default_boundary_policy(state.mesh) : config.boundary_policy;
    const auto rec = record_state(state, field, params, config, policy).first;
    if (observer) observer(state, rec);
    return state;
}

} // namespace mmpde
