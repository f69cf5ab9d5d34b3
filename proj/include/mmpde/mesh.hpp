#pragma once

#include "mmpde/simplex_geometry.hpp"
#include "mmpde/types.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace mmpde {

/// Vertex coordinates in R^d plus (m+1)-vertex element connectivity. The
/// topology is fixed at construction; positions may change (mesh movement).
template <int M, int D>
    requires SimplexDims<M, D>
class SimplicialMesh {
public:
    using Point = Vec<D>;
    using Element = std::array<int, M + 1>;
    using Facet = std::array<int, M>;
    static constexpr int element_dim = M;
    static constexpr int ambient_dim = D;

    SimplicialMesh() = default;

    SimplicialMesh(std::vector<Point> vertices, std::vector<Element> elements)
        : vertices_(std::move(vertices)), elements_(std::move(elements)) {
        build_topology();
    }

    std::size_t num_vertices() const { return vertices_.size(); }
    std::size_t num_elements() const { return elements_.size(); }
    bool empty() const { return elements_.empty() || vertices_.empty(); }

    const std::vector<Point>& vertices() const { return vertices_; }
    const Point& vertex(std::size_t i) const { return vertices_[i]; }
    const std::vector<Element>& elements() const { return elements_; }
    const Element& element(std::size_t k) const { return elements_[k]; }

    /// Replace all positions; the vertex count must not change.
    void set_vertices(std::vector<Point> vertices) {
        if (vertices.size() != vertices_.size()) throw InputError("vertex count mismatch in set_vertices");
        vertices_ = std::move(vertices);
    }
    void set_vertex(std::size_t i, const Point& p) { vertices_[i] = p; }

    /// Elements sharing vertex i.
    const std::vector<int>& patch(std::size_t i) const { return patches_[i]; }
    /// Vertices joined to i by an element edge, ascending.
    const std::vector<int>& neighbors(std::size_t i) const { return neighbors_[i]; }

    bool is_boundary(std::size_t i) const { return boundary_[i]; }
    const std::vector<Facet>& boundary_facets() const { return boundary_facets_; }
    /// Neighbors of a boundary vertex along boundary facets (edges for m = 2).
    const std::vector<int>& boundary_neighbors(std::size_t i) const { return boundary_neighbors_[i]; }

    std::array<Point, M + 1> element_points(std::size_t k) const {
        std::array<Point, M + 1> pts;
        for (int j = 0; j <= M; ++j) pts[j] = vertices_[elements_[k][j]];
        return pts;
    }

    EdgeMatrix<M, D> edge_matrix(std::size_t k) const { return mmpde::edge_matrix<M, D>(element_points(k)); }

    Point barycenter(std::size_t k) const {
        Point c = Point::Zero();
        for (int j = 0; j <= M; ++j) c += vertices_[elements_[k][j]];
        return c / double(M + 1);
    }

    /// Unique undirected edges (i < j), sorted.
    const std::vector<std::pair<int, int>>& edges() const { return edges_; }

    double mean_edge_length() const {
        double s = 0.0;
        for (auto [a, b] : edges_) s += (vertices_[a] - vertices_[b]).norm();
        return edges_.empty() ? 0.0 : s / double(edges_.size());
    }

    /// Shortest edge incident to vertex i.
    double min_incident_edge(std::size_t i) const {
        double h = std::numeric_limits<double>::infinity();
        for (int j : neighbors_[i]) h = std::min(h, (vertices_[i] - vertices_[j]).norm());
        return h;
    }

    /// Sum of Euclidean element measures.
    double total_measure() const {
        double s = 0.0;
        for (std::size_t k = 0; k < elements_.size(); ++k) s += simplex_measure(edge_matrix(k));
        return s;
    }

private:
    void build_topology() {
        const auto nv = static_cast<int>(vertices_.size());
        patches_.assign(nv, {});
        neighbors_.assign(nv, {});
        boundary_.assign(nv, false);
        boundary_neighbors_.assign(nv, {});
        boundary_facets_.clear();

        std::vector<std::set<int>> nbr(nv);
        std::set<std::pair<int, int>> edge_set;
        std::map<Facet, int> facet_count;
        std::map<Facet, Facet> facet_oriented;

        for (std::size_t k = 0; k < elements_.size(); ++k) {
            const Element& el = elements_[k];
            for (int j = 0; j <= M; ++j) {
                if (el[j] < 0 || el[j] >= nv)
                    throw InputError("element " + std::to_string(k) + " references vertex " +
                                     std::to_string(el[j]) + " out of range");
                for (int l = 0; l < j; ++l)
                    if (el[j] == el[l])
                        throw InputError("element " + std::to_string(k) + " repeats vertex " +
                                         std::to_string(el[j]));
            }
            for (int j = 0; j <= M; ++j) {
                patches_[el[j]].push_back(static_cast<int>(k));
                for (int l = j + 1; l <= M; ++l) {
                    nbr[el[j]].insert(el[l]);
                    nbr[el[l]].insert(el[j]);
                    edge_set.insert({std::min(el[j], el[l]), std::max(el[j], el[l])});
                }
                // facet opposite vertex j
                Facet f{};
                int c = 0;
                for (int l = 0; l <= M; ++l)
                    if (l != j) f[c++] = el[l];
                Facet key = f;
                std::sort(key.begin(), key.end());
                ++facet_count[key];
                facet_oriented[key] = f;
            }
        }
        for (int i = 0; i < nv; ++i) neighbors_[i].assign(nbr[i].begin(), nbr[i].end());
        edges_.assign(edge_set.begin(), edge_set.end());

        std::vector<std::set<int>> bnbr(nv);
        for (const auto& [key, count] : facet_count) {
            if (count != 1) continue;
            boundary_facets_.push_back(facet_oriented[key]);
            for (int a : key) boundary_[a] = true;
            for (int a : key)
                for (int b : key)
                    if (a != b) bnbr[a].insert(b);
        }
        for (int i = 0; i < nv; ++i) boundary_neighbors_[i].assign(bnbr[i].begin(), bnbr[i].end());
    }

    std::vector<Point> vertices_;
    std::vector<Element> elements_;
    std::vector<std::vector<int>> patches_;
    std::vector<std::vector<int>> neighbors_;
    std::vector<bool> boundary_;
    std::vector<Facet> boundary_facets_;
    std::vector<std::vector<int>> boundary_neighbors_;
    std::vector<std::pair<int, int>> edges_;
};

/// Mesh of any supported (m, d) combination, for file readers and the CLI.
using AnyMesh = std::variant<SimplicialMesh<1, 1>, SimplicialMesh<1, 2>, SimplicialMesh<1, 3>,
                             SimplicialMesh<2, 2>, SimplicialMesh<2, 3>, SimplicialMesh<3, 3>>;

inline std::pair<int, int> dims_of(const AnyMesh& mesh) {
    return std::visit(
        [](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            return std::pair<int, int>{T::element_dim, T::ambient_dim};
        },
        mesh);
}

} // namespace mmpde
