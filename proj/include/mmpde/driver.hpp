#pragma once

// Configuration-driven runs: mesh generation or loading, the flow with
// snapshots, the CSV log and a final text report.

#include "mmpde/config.hpp"
#include "mmpde/discrete_differential.hpp"
#include "mmpde/geometry.hpp"
#include "mmpde/mesh_io.hpp"
#include "mmpde/mmpde_integrator.hpp"
#include "mmpde/quality.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>

namespace mmpde {

inline constexpr const char* kVersion = "1.0.0";

struct RunSummary {
    int m = 0;
    int d = 0;
    int steps = 0;
    bool converged = false;
    double initial_energy = 0.0;
    double final_energy = 0.0;
    double grad_residual = 0.0;
    QualityReport initial_quality;
    QualityReport final_quality;
    // smallest ratio of logged min a_{K,M} (and min |K|) to its lower bound
    double height_bound_ratio = 0.0;
    double size_bound_ratio = 0.0;
    int bound_violations = 0;
    // largest relative energy change of an accepted step
    double worst_step_change = -std::numeric_limits<double>::infinity();
    std::vector<std::string> warnings;
};

template <int M, int D>
std::vector<double> vertex_curvature(const SimplicialMesh<M, D>& mesh) {
    if constexpr (M == 1 && D > 1) return curve_frames(mesh).curvature;
    else if constexpr (M == 2 && D == 3) return surface_frames(mesh).curvature;
    else return {};
}

template <int M, int D>
MetricBuilder<M, D> make_metric_builder(const RunConfig& cfg) {
    if (cfg.metric == MetricKind::identity) return identity_metric_builder<M, D>();
    if constexpr (M < D) {
        return curvature_metric_builder<M, D>(cfg.floor_eps, cfg.smoothing);
    } else {
        throw ConfigError("metric.kind = curvature needs a curve or surface mesh");
    }
}

template <int M, int D>
std::vector<BoundaryPolicy> make_boundary_policy(const SimplicialMesh<M, D>& mesh, BoundaryChoice choice) {
    switch (choice) {
    case BoundaryChoice::automatic: return default_boundary_policy(mesh);
    case BoundaryChoice::free: return uniform_boundary_policy(mesh, BoundaryPolicy::free);
    case BoundaryChoice::fixed: return uniform_boundary_policy(mesh, BoundaryPolicy::fixed);
    case BoundaryChoice::slide: return uniform_boundary_policy(mesh, BoundaryPolicy::slide);
    }
    return {};
}

template <int M, int D>
void write_snapshot(const SimplicialMesh<M, D>& mesh, const std::vector<Vec<D>>& velocity,
                    const std::filesystem::path& path) {
    const auto k = vertex_curvature(mesh);
    write_vtk<M, D>(mesh, path, k, velocity);
}

template <int M, int D>
RunSummary run_flow(SimplicialMesh<M, D> mesh, std::optional<Parametrization<M, D>> param, const RunConfig& cfg,
                    const std::filesystem::path& out_dir, std::ostream* progress = nullptr) {
    RunSummary summary;
    summary.m = M;
    summary.d = D;
    summary.warnings = cfg.warnings;

    const auto params = make_energy_params<M>(mesh.num_elements(), cfg.p, cfg.theta);
    const auto base_builder = make_metric_builder<M, D>(cfg);
    double rho_upper = 1.0;
    const MetricBuilder<M, D> builder = [&](const SimplicialMesh<M, D>& m) {
        auto field = base_builder(m);
        rho_upper = metric_bounds(field).upper;
        return field;
    };

    FlowConfig flow = cfg.flow;
    flow.boundary_policy = make_boundary_policy(mesh, cfg.boundary);
    flow.reproject = cfg.reproject.value_or(param.has_value());
    if (flow.reproject && !param) {
        summary.warnings.push_back("reprojection requested but the mesh has no parametrization; disabled");
        flow.reproject = false;
    }

    std::filesystem::create_directories(out_dir);
    std::ofstream log(out_dir / "log.csv");
    if (!log) throw InputError("cannot write '" + (out_dir / "log.csv").string() + "'");
    log << kLogHeader << '\n';

    const auto initial_field = builder(mesh);
    summary.initial_quality = quality_report(mesh, initial_field, params);
    write_snapshot<M, D>(mesh, {}, out_dir / "mesh_initial.vtk");

    double reference_energy = 0.0;
    summary.height_bound_ratio = std::numeric_limits<double>::infinity();
    summary.size_bound_ratio = std::numeric_limits<double>::infinity();
    const FlowObserver<M, D> observer = [&](const FlowState<M, D>& state, const StepRecord& rec) {
        log << format_log_row(rec) << '\n';
        // with a metric rebuilt every step the largest energy seen so far plays
        // the role of the initial energy in the lower bounds
        reference_energy = std::max(reference_energy, rec.energy);
        const auto b = height_bounds<M>(reference_energy, state.mesh.num_elements(), params, rho_upper, D);
        summary.height_bound_ratio = std::min(summary.height_bound_ratio, rec.min_metric_height / b.min_metric_height);
        summary.size_bound_ratio = std::min(summary.size_bound_ratio, rec.min_measure / b.min_measure);
        if (rec.min_metric_height < b.min_metric_height || rec.min_measure < b.min_measure || !(rec.min_measure > 0.0))
            ++summary.bound_violations;
        if (cfg.output_every > 0 && rec.step > 0 && rec.step % cfg.output_every == 0) {
            char name[64];
            std::snprintf(name, sizeof name, "mesh_%06d.vtk", rec.step);
            write_snapshot<M, D>(state.mesh, state.velocities, out_dir / name);
        }
        if (progress && rec.step % 500 == 0)
            *progress << "step " << rec.step << "  t=" << rec.t << "  energy=" << rec.energy << '\n';
    };

    auto state = run_to_convergence(make_flow_state(std::move(mesh), std::move(param)), builder, params, flow,
                                    observer);

    summary.steps = state.steps;
    summary.converged = state.converged;
    summary.initial_energy = state.log.front().energy;
    summary.final_energy = state.log.back().energy;
    summary.grad_residual = state.grad_residual;
    for (std::size_t i = 0; i < state.step_energy_change.size(); ++i)
        summary.worst_step_change = std::max(summary.worst_step_change,
                                             state.step_energy_change[i] / std::abs(state.step_energy_before[i]));
    const auto final_field = builder(state.mesh);
    summary.final_quality = quality_report(state.mesh, final_field, params, reference_energy);
    write_snapshot<M, D>(state.mesh, state.velocities, out_dir / "mesh_final.vtk");

    if (summary.bound_violations > 0 && !params.coercive())
        summary.warnings.push_back("lower bounds violated; expected without coercivity (θ > 0.5)");

    std::ofstream report(out_dir / "report.txt");
    const auto& q0 = summary.initial_quality;
    const auto& q1 = summary.final_quality;
    report << "mmpde run report\n";
    report << "mesh: m=" << M << " d=" << D << "  vertices=" << state.mesh.num_vertices()
           << "  elements=" << state.mesh.num_elements() << '\n';
    report << "energy: p=" << cfg.p << " theta=" << cfg.theta
           << "  metric=" << (cfg.metric == MetricKind::identity ? "identity" : "curvature") << '\n';
    report << "steps: " << summary.steps << "  converged: " << (summary.converged ? "yes" : "no")
           << "  t_final=" << state.t << '\n';
    report << "energy initial=" << summary.initial_energy << "  final=" << summary.final_energy << '\n';
    report << "projected gradient residual: " << summary.grad_residual << '\n';
    report << "largest relative energy change of an accepted step: " << summary.worst_step_change << '\n';
    report << "                 initial        final\n";
    auto row = [&](const char* label, double a, double b) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-16s %-14.6g %-14.6g\n", label, a, b);
        report << buf;
    };
    row("edge_ratio", q0.edge_ratio, q1.edge_ratio);
    row("eq_max", q0.eq_max, q1.eq_max);
    row("eq_min", q0.eq_min, q1.eq_min);
    row("eq_cov", q0.eq_cov, q1.eq_cov);
    row("ali_mean", q0.ali_mean, q1.ali_mean);
    row("min_K", q0.min_measure, q1.min_measure);
    row("min_aKM", q0.min_metric_height, q1.min_metric_height);
    row("bound_margin", q0.bound_margin, q1.bound_margin);
    report << "lower bound ratios over the trajectory: height=" << summary.height_bound_ratio
           << "  size=" << summary.size_bound_ratio << "  violations=" << summary.bound_violations << '\n';
    for (const auto& w : summary.warnings) report << "warning: " << w << '\n';
    return summary;
}

namespace detail {

template <typename Fn>
auto visit_generated(const RunConfig& cfg, Fn&& fn) {
    if (cfg.geometry.name == GeometryName::external) {
        auto any = read_mesh(cfg.mesh_file);
        return std::visit(
            [&](auto& mesh) {
                using T = std::decay_t<decltype(mesh)>;
                constexpr int M = T::element_dim, D = T::ambient_dim;
                return fn(std::move(mesh), std::optional<Parametrization<M, D>>{});
            },
            any);
    }
    auto gen = generate_mesh(cfg.geometry);
    return std::visit([&](auto& g) { return fn(std::move(g.mesh), std::move(g.parametrization)); }, gen);
}

} // namespace detail

/// Generate (or load) the configured mesh and run the flow into out_dir.
inline RunSummary run_from_config(const RunConfig& cfg, const std::filesystem::path& out_dir,
                                  std::ostream* progress = nullptr) {
    return detail::visit_generated(cfg, [&](auto mesh, auto param) {
        return run_flow(std::move(mesh), std::move(param), cfg, out_dir, progress);
    });
}

/// Write the configured initial mesh as out_dir/mesh_initial.vtk; returns (m, d).
inline std::pair<int, int> generate_from_config(const RunConfig& cfg, const std::filesystem::path& out_dir) {
    return detail::visit_generated(cfg, [&](auto mesh, auto) {
        using T = decltype(mesh);
        std::filesystem::create_directories(out_dir);
        write_snapshot<T::element_dim, T::ambient_dim>(mesh, {}, out_dir / "mesh_initial.vtk");
        return std::pair<int, int>{T::element_dim, T::ambient_dim};
    });
}

/// Human-readable quality report of a mesh.
template <int M, int D>
std::string describe_quality(const SimplicialMesh<M, D>& mesh, MetricKind kind, double p, double theta) {
    const auto params = make_energy_params<M>(mesh.num_elements(), p, theta);
    MetricField<D> field;
    if (kind == MetricKind::identity) {
        field = build_identity_metric(mesh);
    } else {
        if constexpr (M < D) field = curvature_metric_builder<M, D>()(mesh);
        else throw ConfigError("curvature metric needs a curve or surface mesh");
    }
    const auto q = quality_report(mesh, field, params);
    std::ostringstream os;
    os << "mesh: m=" << M << " d=" << D << "  vertices=" << mesh.num_vertices() << "  elements=" << mesh.num_elements()
       << '\n';
    os << "energy: " << q.energy << '\n';
    os << "edge_ratio: " << q.edge_ratio << '\n';
    os << "eq_max: " << q.eq_max << "\neq_min: " << q.eq_min << "\neq_cov: " << q.eq_cov << '\n';
    os << "ali_mean: " << q.ali_mean << '\n';
    os << "min_K: " << q.min_measure << "\nmin_aKM: " << q.min_metric_height << '\n';
    os << "bound_margin: " << q.bound_margin << "\nsize_margin: " << q.size_margin << '\n';
    if (!q.coercive) os << "warning: coercivity condition not guaranteed (θ > 0.5)\n";
    return os.str();
}

} // namespace mmpde
