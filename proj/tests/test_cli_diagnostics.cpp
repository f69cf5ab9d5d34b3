#include "mmpde/driver.hpp"
#include "mmpde/quality.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <sstream>

using namespace mmpde;
namespace fs = std::filesystem;

namespace {

SimplicialMesh<1, 2> regular_polygon(int n, double r) {
    std::vector<Vec<2>> x;
    std::vector<std::array<int, 2>> el;
    for (int i = 0; i < n; ++i) {
        const double s = 2.0 * std::numbers::pi * i / n;
        x.emplace_back(r * std::cos(s), r * std::sin(s));
        el.push_back({i, (i + 1) % n});
    }
    return {x, el};
}

template <int M, int D>
MetricField<D> random_field(const SimplicialMesh<M, D>& mesh, std::mt19937_64& rng) {
    std::vector<Mat<D, D>> t(mesh.num_vertices());
    for (auto& m : t) m = oracle::random_spd(D, rng);
    return {t, MetricKind::user, 0.0};
}

template <int M, int D>
void expect_sane(const SimplicialMesh<M, D>& mesh, const MetricField<D>& field) {
    const auto params = make_energy_params<M>(mesh.num_elements());
    const auto q = quality_report(mesh, field, params);
    double sum = 0.0;
    for (double v : q.eq_values) {
        EXPECT_GT(v, 0.0);
        sum += v;
    }
    EXPECT_NEAR(sum, double(mesh.num_elements()), 1e-10 * mesh.num_elements());
    for (double a : q.ali_values) EXPECT_GE(a, 1.0 - 1e-12);
    EXPECT_GE(q.ali_mean, 1.0 - 1e-12);
    EXPECT_GE(q.edge_ratio, 1.0);
    EXPECT_LE(q.eq_min, 1.0 + 1e-12);
    EXPECT_GE(q.eq_max, 1.0 - 1e-12);
}

double mean_ali_excess(const QualityReport& q) { return q.ali_mean - 1.0; }

std::string read_text(const fs::path& p) {
    std::ifstream in(p);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

} // namespace

TEST(Quality, RegularPolygonIsPerfect) {
    for (int n : {3, 7, 64}) {
        const auto mesh = regular_polygon(n, 2.5);
        const auto q = quality_report(mesh, build_identity_metric(mesh), make_energy_params<1>(n));
        EXPECT_NEAR(q.eq_max / q.eq_min, 1.0, 1e-12);
        EXPECT_LE(q.eq_cov, 1e-12);
        for (double a : q.ali_values) EXPECT_NEAR(a, 1.0, 1e-12);
        EXPECT_NEAR(q.edge_ratio, 1.0, 1e-12);
        EXPECT_TRUE(q.coercive);
    }
}

TEST(Quality, RandomMeshesAndMetrics) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 5; ++trial) {
        const auto c2 = oracle::random_curve<2>(20, rng);
        expect_sane(c2, random_field(c2, rng));
        const auto c3 = oracle::random_curve<3>(20, rng);
        expect_sane(c3, random_field(c3, rng));
        const auto t2 = oracle::random_triangulation<2>(4, 3, rng);
        expect_sane(t2, random_field(t2, rng));
        const auto t3 = oracle::random_triangulation<3>(4, 3, rng);
        expect_sane(t3, random_field(t3, rng));
        const auto k3 = oracle::random_tetrahedra(rng);
        expect_sane(k3, random_field(k3, rng));
    }
}

TEST(Quality, AlignmentMatchesEigenvalueRatio) {
    // for m = 2 the alignment measure is the ratio of arithmetic to geometric mean of the eigenvalues
    const SimplicialMesh<2, 2> mesh({Vec<2>(0, 0), Vec<2>(1, 0), Vec<2>(0, 1)}, {{0, 1, 2}});
    std::mt19937_64 rng(2);
    const auto field = random_field(mesh, rng);
    const auto params = make_energy_params<2>(1);
    const auto q = quality_report(mesh, field, params);
    const auto e = mesh.edge_matrix(0);
    const Mat<2, 2> mk = element_average_metric<2>(field, mesh.element(0));
    const Mat<2, 2> f = e.entries * params.reference.edge_matrix_inverse;
    const auto eig = Eigen::SelfAdjointEigenSolver<Mat<2, 2>>(f.transpose() * mk * f).eigenvalues();
    EXPECT_NEAR(q.ali_values[0], 0.5 * (eig[0] + eig[1]) / std::sqrt(eig[0] * eig[1]), 1e-12);
}

TEST(Quality, RigidMotionInvariance) {
    const auto gen = generate_mesh_as<1, 3>(default_spec(GeometryName::torus_curve));
    const Mat<3, 3> rot = Eigen::AngleAxisd(2.1, Vec<3>(-1, 0.4, 2).normalized()).toRotationMatrix();
    auto moved = gen.mesh;
    for (std::size_t i = 0; i < moved.num_vertices(); ++i) moved.set_vertex(i, rot * gen.mesh.vertex(i) + Vec<3>(5, 6, 7));
    const auto params = make_energy_params<1>(gen.mesh.num_elements());
    const auto builder = curvature_metric_builder<1, 3>();
    const auto a = quality_report(gen.mesh, builder(gen.mesh), params);
    const auto b = quality_report(moved, builder(moved), params);
    for (std::size_t k = 0; k < a.eq_values.size(); ++k) {
        EXPECT_NEAR(a.eq_values[k], b.eq_values[k], 1e-9);
        EXPECT_NEAR(a.ali_values[k], b.ali_values[k], 1e-9);
    }
    EXPECT_NEAR(a.energy, b.energy, 1e-9 * a.energy);
    EXPECT_NEAR(a.edge_ratio, b.edge_ratio, 1e-12 * a.edge_ratio);
}

TEST(Quality, DegenerateElementIsReported) {
    const SimplicialMesh<2, 3> mesh({Vec<3>(0, 0, 0), Vec<3>(1, 0, 0), Vec<3>(0, 1, 0), Vec<3>(2, 0, 0)},
                                    {{0, 1, 2}, {0, 1, 3}});
    try {
        quality_report(mesh, build_identity_metric(mesh), make_energy_params<2>(2));
        FAIL() << "degenerate element accepted";
    } catch (const DegenerateElement& e) {
        EXPECT_EQ(e.index(), 1);
    }
}

TEST(HeightBounds, MatchesClosedForm) {
    for (int trial = 0; trial < 3; ++trial) {
        const double p = 1.2 + 0.6 * trial, theta = 0.2 + 0.1 * trial;
        const double energy = 3.7, n = 250.0, rho = 4.0;
        auto check = [&](auto tag) {
            constexpr int M = decltype(tag)::value;
            const auto params = make_energy_params<M>(std::size_t(n), p, theta);
            const auto b = height_bounds<M>(energy, std::size_t(n), params, rho, 3);
            // height coefficient of the regular simplex from an explicit unit-measure instance
            const auto e = oracle::regular_simplex_edges(M, 1.0);
            std::vector<Eigen::VectorXd> v{Eigen::VectorXd::Zero(M)};
            for (int j = 0; j < M; ++j) v.push_back(e.col(j));
            double lambda = 1e300;
            for (int j = 0; j <= M; ++j) lambda = std::min(lambda, oracle::point_to_facet_distance(v, j));
            const double m = M, q = m * p / 2.0, expo = 2.0 * q - m;
            const double denom = std::pow(m, m / 2.0) * oracle::factorial(M);
            const double c1 = std::pow(theta * std::pow(lambda, 2.0 * q) / denom, m / expo);
            const double c2 = std::pow(c1, m) / denom;
            EXPECT_NEAR(b.c1, c1, 1e-12 * c1);
            EXPECT_NEAR(b.c2, c2, 1e-12 * c2);
            const double h = c1 * std::pow(energy, -1.0 / expo) * std::pow(n, -2.0 * q / (m * expo));
            const double s = c2 * std::pow(energy, -m / expo) * std::pow(n, -2.0 * q / expo) * std::pow(rho, -1.5);
            EXPECT_NEAR(b.min_metric_height, h, 1e-12 * h);
            EXPECT_NEAR(b.min_measure, s, 1e-12 * s);
        };
        check(std::integral_constant<int, 1>{});
        check(std::integral_constant<int, 2>{});
        check(std::integral_constant<int, 3>{});
    }
    EXPECT_THROW(height_bounds<1>(0.0, 10, make_energy_params<1>(10), 1.0, 2), InputError);
}

TEST(HeightBounds, LargerEnergyLowersTheBound) {
    const auto params = make_energy_params<2>(100);
    const auto a = height_bounds<2>(1.0, 100, params, 1.0, 3), b = height_bounds<2>(10.0, 100, params, 1.0, 3);
    EXPECT_LT(b.min_metric_height, a.min_metric_height);
    EXPECT_LT(b.min_measure, a.min_measure);
}

TEST(FlowQuality, PerturbedCircleEquidistributes) {
    auto gen = generate_mesh_as<1, 2>(default_spec(GeometryName::circle));
    const auto params = make_energy_params<1>(gen.mesh.num_elements());
    const auto builder = identity_metric_builder<1, 2>();
    const auto before = quality_report(gen.mesh, builder(gen.mesh), params);
    EXPECT_GT(before.eq_cov, 0.1);
    FlowConfig cfg;
    cfg.reproject = true;
    double e0 = 0.0;
    const auto s = run_to_convergence(make_flow_state(gen.mesh, gen.parametrization), builder, params, cfg,
                                      [&](const FlowState<1, 2>& st, const StepRecord& rec) {
                                          if (rec.step == 0) e0 = rec.energy;
                                          const auto q = quality_report(st.mesh, builder(st.mesh), params, e0);
                                          EXPECT_GE(q.bound_margin, 0.0) << "step " << rec.step;
                                          EXPECT_GE(q.size_margin, 0.0) << "step " << rec.step;
                                      });
    ASSERT_TRUE(s.converged);
    const auto after = quality_report(s.mesh, builder(s.mesh), params, e0);
    EXPECT_LE(after.eq_cov, 0.02);
    EXPECT_LE(after.eq_cov, before.eq_cov);
    EXPECT_LE(mean_ali_excess(after), mean_ali_excess(before) + 1e-12);
}

TEST(FlowQuality, EllipseCurvatureMetricImproves) {
    auto gen = generate_mesh_as<1, 2>(default_spec(GeometryName::ellipse));
    const auto params = make_energy_params<1>(gen.mesh.num_elements());
    const auto builder = curvature_metric_builder<1, 2>();
    const auto before = quality_report(gen.mesh, builder(gen.mesh), params);
    FlowConfig cfg;
    cfg.reproject = true;
    cfg.max_steps = 2000;
    const auto s = run_to_convergence(make_flow_state(gen.mesh, gen.parametrization), builder, params, cfg);
    const auto after = quality_report(s.mesh, builder(s.mesh), params);
    EXPECT_LT(after.eq_cov, before.eq_cov);
    EXPECT_LE(mean_ali_excess(after), mean_ali_excess(before) + 1e-12);
}

TEST(Describe, ReportListsQuantities) {
    const auto text = describe_quality(regular_polygon(12, 1.0), MetricKind::identity, 1.5, 1.0 / 3.0);
    for (const char* key : {"mesh: m=1 d=2", "vertices=12", "energy:", "edge_ratio: 1", "eq_cov:", "ali_mean: 1",
                            "bound_margin:"})
        EXPECT_NE(text.find(key), std::string::npos) << key;
    EXPECT_EQ(text.find("warning"), std::string::npos);
    const auto warned = describe_quality(regular_polygon(12, 1.0), MetricKind::curvature, 1.5, 0.7);
    EXPECT_NE(warned.find("coercivity condition not guaranteed"), std::string::npos);
    std::mt19937_64 rng(1);
    EXPECT_THROW(describe_quality(oracle::random_triangulation<2>(2, 2, rng), MetricKind::curvature, 1.5, 0.3),
                 ConfigError);
}

TEST(Driver, RunWritesLogReportAndSnapshots) {
    const auto dir = fs::temp_directory_path() / "mmpde_driver_test";
    fs::remove_all(dir);
    auto cfg = parse_config_string("geometry.name = circle\ngeometry.n = 40\noutput.every = 25\n");
    const auto summary = run_from_config(cfg, dir);
    EXPECT_EQ(summary.m, 1);
    EXPECT_EQ(summary.d, 2);
    EXPECT_TRUE(summary.converged);
    EXPECT_LT(summary.final_energy, summary.initial_energy);
    EXPECT_EQ(summary.bound_violations, 0);
    EXPECT_GE(summary.height_bound_ratio, 1.0);
    EXPECT_LE(summary.worst_step_change, 1e-12);
    EXPECT_LE(summary.final_quality.edge_ratio, 1.05);

    std::ifstream log(dir / "log.csv");
    std::string line;
    ASSERT_TRUE(std::getline(log, line));
    EXPECT_EQ(line, kLogHeader);
    int rows = 0;
    while (std::getline(log, line)) ++rows;
    EXPECT_EQ(rows, summary.steps + 1);

    EXPECT_TRUE(fs::exists(dir / "mesh_initial.vtk"));
    EXPECT_TRUE(fs::exists(dir / "mesh_final.vtk"));
    EXPECT_TRUE(fs::exists(dir / "mesh_000025.vtk"));
    const auto final_mesh = read_mesh(dir / "mesh_final.vtk");
    EXPECT_EQ(dims_of(final_mesh), (std::pair<int, int>{1, 2}));
    EXPECT_NE(read_text(dir / "mesh_final.vtk").find("SCALARS curvature"), std::string::npos);

    const auto report = read_text(dir / "report.txt");
    EXPECT_NE(report.find("edge_ratio"), std::string::npos);
    EXPECT_NE(report.find("converged: yes"), std::string::npos);
    EXPECT_NE(report.find("violations=0"), std::string::npos);
}

TEST(Driver, ExternalMeshRun) {
    const auto dir = fs::temp_directory_path() / "mmpde_driver_external";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::mt19937_64 rng(12);
    write_node_ele(oracle::random_curve<2>(16, rng), dir / "ring");
    auto cfg = parse_config_string("geometry.name = external\ngeometry.file = " + (dir / "ring.node").string() +
                                   "\nflow.max_steps = 20\n");
    const auto summary = run_from_config(cfg, dir / "out");
    EXPECT_EQ(summary.steps, 20);
    EXPECT_LE(summary.final_energy, summary.initial_energy);
    EXPECT_NE(read_text(dir / "out" / "report.txt").find("steps: 20"), std::string::npos);
}

TEST(Driver, GenerateWritesInitialMesh) {
    const auto dir = fs::temp_directory_path() / "mmpde_driver_generate";
    fs::remove_all(dir);
    const auto dims = generate_from_config(parse_config_string("geometry.name = hyperboloid\n"), dir);
    EXPECT_EQ(dims, (std::pair<int, int>{2, 3}));
    const auto mesh = read_mesh(dir / "mesh_initial.vtk");
    EXPECT_EQ((std::get<SimplicialMesh<2, 3>>(mesh).num_elements()), 3872u);
}
