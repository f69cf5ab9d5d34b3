#pragma once

// Mesh files: legacy ASCII VTK (write/read), Wavefront OBJ subset (v, l, f)
// and the two-file node_ele text format.

#include "mmpde/mesh.hpp"

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

namespace mmpde {

enum class MeshFormat { automatic, vtk, obj, node_ele };

inline MeshFormat mesh_format_from_string(const std::string& s) {
    if (s == "auto") return MeshFormat::automatic;
    if (s == "vtk") return MeshFormat::vtk;
    if (s == "obj") return MeshFormat::obj;
    if (s == "node_ele") return MeshFormat::node_ele;
    throw InputError("unknown mesh format '" + s + "'");
}

class ParseError : public InputError {
public:
    ParseError(const std::string& file, int line, const std::string& what)
        : InputError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}
    int line() const noexcept { return line_; }

private:
    int line_;
};

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <int D>
std::array<double, 3> pad3(const Vec<D>& p) {
    std::array<double, 3> out{0.0, 0.0, 0.0};
    for (int k = 0; k < D; ++k) out[k] = p[k];
    return out;
}

// Whitespace tokens with the line each came from.
class TokenStream {
public:
    TokenStream(std::istream& in, std::string name, int line_offset = 0) : name_(std::move(name)) {
        std::string line;
        int no = line_offset;
        while (std::getline(in, line)) {
            ++no;
            std::istringstream ls(line);
            std::string tok;
            while (ls >> tok) tokens_.push_back({tok, no});
        }
        last_line_ = no;
    }

    bool done() const { return pos_ >= tokens_.size(); }
    int line() const { return done() ? last_line_ : tokens_[pos_].second; }

    const std::string& peek() {
        if (done()) fail("unexpected end of file");
        return tokens_[pos_].first;
    }

    std::string next() {
        const std::string t = peek();
        ++pos_;
        return t;
    }

    void expect(const std::string& word) {
        const int at = line();
        const std::string t = next();
        if (t != word) throw ParseError(name_, at, "expected '" + word + "', found '" + t + "'");
    }

    long long next_int() {
        const int at = line();
        const std::string t = next();
        try {
            std::size_t used = 0;
            const long long v = std::stoll(t, &used);
            if (used == t.size()) return v;
        } catch (const std::exception&) {
        }
        throw ParseError(name_, at, "expected an integer, found '" + t + "'");
    }

    double next_double() {
        const int at = line();
        const std::string t = next();
        try {
            std::size_t used = 0;
            const double v = std::stod(t, &used);
            if (used == t.size()) return v;
        } catch (const std::exception&) {
        }
        throw ParseError(name_, at, "expected a number, found '" + t + "'");
    }

    // Skip to the token after the end of the current line.
    void skip_line() {
        const int at = line();
        while (!done() && tokens_[pos_].second == at) ++pos_;
    }

    [[noreturn]] void fail(const std::string& what) const { throw ParseError(name_, line(), what); }

private:
    std::vector<std::pair<std::string, int>> tokens_;
    std::size_t pos_ = 0;
    int last_line_ = 0;
    std::string name_;
};

template <int M, int D>
AnyMesh make_any(const std::vector<std::array<double, 3>>& pts, const std::vector<std::vector<int>>& cells) {
    std::vector<Vec<D>> x(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (int k = 0; k < D; ++k) x[i][k] = pts[i][k];
    std::vector<std::array<int, M + 1>> el(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c)
        for (int j = 0; j <= M; ++j) el[c][j] = cells[c][j];
    return SimplicialMesh<M, D>(std::move(x), std::move(el));
}

} // namespace detail

/// Build a mesh of runtime dimensions (m, d) from padded points and cells.
inline AnyMesh make_any_mesh(int m, int d, const std::vector<std::array<double, 3>>& pts,
                             const std::vector<std::vector<int>>& cells) {
    for (const auto& c : cells)
        if (int(c.size()) != m + 1) throw InputError("mixed element arities");
    if (m == 1 && d == 1) return detail::make_any<1, 1>(pts, cells);
    if (m == 1 && d == 2) return detail::make_any<1, 2>(pts, cells);
    if (m == 1 && d == 3) return detail::make_any<1, 3>(pts, cells);
    if (m == 2 && d == 2) return detail::make_any<2, 2>(pts, cells);
    if (m == 2 && d == 3) return detail::make_any<2, 3>(pts, cells);
    if (m == 3 && d == 3) return detail::make_any<3, 3>(pts, cells);
    throw InputError("unsupported dimensions m=" + std::to_string(m) + " d=" + std::to_string(d));
}

/// Legacy ASCII VTK. Curves and surfaces are POLYDATA (LINES / POLYGONS),
/// tetrahedral meshes an UNSTRUCTURED_GRID. The title line records m and d.
template <int M, int D>
void write_vtk(const SimplicialMesh<M, D>& mesh, const std::filesystem::path& path,
               std::span<const double> curvature = {}, std::span<const Vec<D>> velocity = {}) {
    if (mesh.empty()) throw InputError("refusing to write an empty mesh");
    if (!curvature.empty() && curvature.size() != mesh.num_vertices())
        throw InputError("curvature array does not match vertex count");
    if (!velocity.empty() && velocity.size() != mesh.num_vertices())
        throw InputError("velocity array does not match vertex count");
    std::ostringstream os;
    os << "# vtk DataFile Version 3.0\n";
    os << "mmpde mesh m=" << M << " d=" << D << "\n";
    os << "ASCII\n";
    const bool volume = (M == 3);
    os << (volume ? "DATASET UNSTRUCTURED_GRID\n" : "DATASET POLYDATA\n");
    os << "POINTS " << mesh.num_vertices() << " double\n";
    for (const auto& p : mesh.vertices()) {
        const auto q = detail::pad3<D>(p);
        os << detail::format_double(q[0]) << ' ' << detail::format_double(q[1]) << ' '
           << detail::format_double(q[2]) << '\n';
    }
    const std::size_t ne = mesh.num_elements();
    if (volume) os << "CELLS ";
    else os << (M == 1 ? "LINES " : "POLYGONS ");
    os << ne << ' ' << ne * (M + 2) << '\n';
    for (const auto& el : mesh.elements()) {
        os << M + 1;
        for (int v : el) os << ' ' << v;
        os << '\n';
    }
    if (volume) {
        os << "CELL_TYPES " << ne << '\n';
        for (std::size_t k = 0; k < ne; ++k) os << "10\n";
    }
    if (!curvature.empty() || !velocity.empty()) {
        os << "POINT_DATA " << mesh.num_vertices() << '\n';
        if (!curvature.empty()) {
            os << "SCALARS curvature double 1\nLOOKUP_TABLE default\n";
            for (double k : curvature) os << detail::format_double(k) << '\n';
        }
        if (!velocity.empty()) {
            os << "VECTORS velocity double\n";
            for (const auto& v : velocity) {
                const auto q = detail::pad3<D>(v);
                os << detail::format_double(q[0]) << ' ' << detail::format_double(q[1]) << ' '
                   << detail::format_double(q[2]) << '\n';
            }
        }
    }
    std::ofstream out(path);
    if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
    out << os.str();
    if (!out) throw InputError("failed writing '" + path.string() + "'");
}

namespace detail {

// Ambient dimension from the title line ("m=.. d=..") or, failing that, the
// number of leading coordinates that are not identically zero (at least m).
inline int infer_ambient_dim(const std::string& title, const std::vector<std::array<double, 3>>& pts, int m) {
    const auto pos = title.find("d=");
    if (pos != std::string::npos) {
        const int d = std::atoi(title.c_str() + pos + 2);
        if (d >= 1 && d <= 3) return std::max(d, m);
    }
    int d = 1;
    for (const auto& p : pts) {
        if (p[2] != 0.0) d = 3;
        else if (p[1] != 0.0) d = std::max(d, 2);
    }
    return std::max(d, m);
}

inline AnyMesh read_vtk_stream(std::istream& in, const std::string& name) {
    std::string header, title;
    if (!std::getline(in, header) || header.rfind("# vtk DataFile", 0) != 0)
        throw ParseError(name, 1, "missing '# vtk DataFile' header");
    if (!std::getline(in, title)) throw ParseError(name, 2, "missing title line");
    TokenStream ts(in, name, 2);
    const auto fail = [&](const std::string& what) { ts.fail(what); };
    if (ts.next() != "ASCII") fail("only ASCII VTK files are supported");
    ts.expect("DATASET");
    const std::string dataset = ts.next();
    if (dataset != "POLYDATA" && dataset != "UNSTRUCTURED_GRID") fail("unsupported dataset '" + dataset + "'");
    ts.expect("POINTS");
    const long long np = ts.next_int();
    if (np <= 0) fail("point count must be positive");
    ts.next();  // data type
    std::vector<std::array<double, 3>> pts(np);
    for (auto& p : pts)
        for (double& c : p) c = ts.next_double();

    std::vector<std::vector<int>> cells;
    int m = 0;
    while (!ts.done()) {
        const std::string key = ts.next();
        if (key == "LINES" || key == "POLYGONS" || key == "CELLS") {
            const long long nc = ts.next_int();
            ts.next_int();  // total size
            for (long long c = 0; c < nc; ++c) {
                const long long k = ts.next_int();
                if (k < 2 || k > 4) fail("cell with " + std::to_string(k) + " vertices");
                std::vector<int> cell(k);
                for (auto& v : cell) {
                    const long long idx = ts.next_int();
                    if (idx < 0 || idx >= np) fail("vertex index " + std::to_string(idx) + " out of range");
                    v = int(idx);
                }
                const int cm = int(k) - 1;
                if (key == "LINES" && cm != 1) fail("polyline cells must be single segments");
                if (m != 0 && cm != m) fail("mixed element arities");
                m = cm;
                cells.push_back(std::move(cell));
            }
        } else if (key == "CELL_TYPES") {
            const long long nc = ts.next_int();
            for (long long c = 0; c < nc; ++c) {
                const long long t = ts.next_int();
                if (t != 3 && t != 5 && t != 10) fail("unsupported cell type " + std::to_string(t));
            }
        } else if (key == "POINT_DATA" || key == "CELL_DATA") {
            break;  // attributes are not needed to rebuild the mesh
        } else {
            fail("unexpected keyword '" + key + "'");
        }
    }
    if (cells.empty()) fail("no cells");
    return make_any_mesh(m, infer_ambient_dim(title, pts, m), pts, cells);
}

inline AnyMesh read_obj_stream(std::istream& in, const std::string& name) {
    std::vector<std::array<double, 3>> pts;
    std::vector<std::vector<int>> cells;
    std::vector<int> cell_line;
    int m = 0;
    std::string line;
    int no = 0;
    auto parse_index = [&](const std::string& tok) {
        const std::string head = tok.substr(0, tok.find('/'));
        try {
            std::size_t used = 0;
            const long long v = std::stoll(head, &used);
            if (used == head.size() && v != 0) return v > 0 ? int(v - 1) : int(pts.size() + v);
        } catch (const std::exception&) {
        }
        throw ParseError(name, no, "bad vertex reference '" + tok + "'");
    };
    while (std::getline(in, line)) {
        ++no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key)) continue;
        if (key == "v") {
            std::array<double, 3> p{0.0, 0.0, 0.0};
            int count = 0;
            std::string tok;
            while (ls >> tok && count < 4) {
                try {
                    std::size_t used = 0;
                    const double v = std::stod(tok, &used);
                    if (used != tok.size()) throw std::invalid_argument(tok);
                    if (count < 3) p[count] = v;
                } catch (const std::exception&) {
                    throw ParseError(name, no, "bad coordinate '" + tok + "'");
                }
                ++count;
            }
            if (count < 3) throw ParseError(name, no, "vertex needs 3 coordinates");
            pts.push_back(p);
        } else if (key == "l" || key == "f") {
            std::vector<int> idx;
            std::string tok;
            while (ls >> tok) idx.push_back(parse_index(tok));
            const int cm = key == "l" ? 1 : 2;
            if (m != 0 && cm != m) throw ParseError(name, no, "mixed element arities");
            m = cm;
            if (key == "l") {
                if (idx.size() < 2) throw ParseError(name, no, "line record needs 2 vertices");
                for (std::size_t j = 0; j + 1 < idx.size(); ++j) {
                    cells.push_back({idx[j], idx[j + 1]});
                    cell_line.push_back(no);
                }
            } else {
                if (idx.size() != 3) throw ParseError(name, no, "only triangular faces are supported");
                cells.push_back(idx);
                cell_line.push_back(no);
            }
        } else if (key == "vn" || key == "vt" || key == "o" || key == "g" || key == "s" || key == "usemtl" ||
                   key == "mtllib") {
            continue;
        } else {
            throw ParseError(name, no, "unsupported record '" + key + "'");
        }
    }
    for (std::size_t c = 0; c < cells.size(); ++c)
        for (int v : cells[c])
            if (v < 0 || v >= int(pts.size())) throw ParseError(name, cell_line[c], "vertex index out of range");
    if (cells.empty()) throw ParseError(name, no, "no elements");
    return make_any_mesh(m, 3, pts, cells);
}

inline std::pair<std::filesystem::path, std::filesystem::path> node_ele_paths(const std::filesystem::path& path) {
    std::filesystem::path base = path;
    if (base.extension() == ".node" || base.extension() == ".ele") base.replace_extension();
    auto node = base, ele = base;
    node += ".node";
    ele += ".ele";
    return {node, ele};
}

} // namespace detail

/// node_ele: `<base>.node` holds "N_v d" then one "i x_1 .. x_d" line per
/// vertex; `<base>.ele` holds "N_e m+1" then "k v_0 .. v_m". Indices are
/// 0-based and the leading index must equal the row number; '#' starts a comment.
inline AnyMesh read_node_ele(const std::filesystem::path& path) {
    const auto [node_path, ele_path] = detail::node_ele_paths(path);
    std::ifstream node_in(node_path), ele_in(ele_path);
    if (!node_in) throw InputError("cannot open '" + node_path.string() + "'");
    if (!ele_in) throw InputError("cannot open '" + ele_path.string() + "'");

    auto strip = [](std::istream& in) {
        std::ostringstream os;
        std::string line;
        while (std::getline(in, line)) {
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            os << line << '\n';
        }
        return std::istringstream(os.str());
    };

    auto ns = strip(node_in);
    detail::TokenStream nt(ns, node_path.string());
    const long long nv = nt.next_int();
    const long long d = nt.next_int();
    if (nv <= 0) nt.fail("vertex count must be positive");
    if (d < 1 || d > 3) nt.fail("dimension must be 1, 2 or 3");
    std::vector<std::array<double, 3>> pts(nv, {0.0, 0.0, 0.0});
    for (long long i = 0; i < nv; ++i) {
        const int at = nt.line();
        if (nt.next_int() != i) throw ParseError(node_path.string(), at, "expected vertex index " + std::to_string(i));
        for (long long k = 0; k < d; ++k) pts[i][k] = nt.next_double();
    }
    if (!nt.done()) nt.fail("trailing data after vertices");

    auto es = strip(ele_in);
    detail::TokenStream et(es, ele_path.string());
    const long long ne = et.next_int();
    const long long arity = et.next_int();
    if (ne <= 0) et.fail("element count must be positive");
    if (arity < 2 || arity > 4) et.fail("element arity must be 2, 3 or 4");
    std::vector<std::vector<int>> cells(ne, std::vector<int>(arity));
    for (long long k = 0; k < ne; ++k) {
        const int at = et.line();
        if (et.next_int() != k) throw ParseError(ele_path.string(), at, "expected element index " + std::to_string(k));
        for (auto& v : cells[k]) {
            const long long idx = et.next_int();
            if (idx < 0 || idx >= nv) throw ParseError(ele_path.string(), at, "vertex index out of range");
            v = int(idx);
        }
    }
    if (!et.done()) et.fail("trailing data after elements");
    return make_any_mesh(int(arity) - 1, int(d), pts, cells);
}

template <int M, int D>
void write_node_ele(const SimplicialMesh<M, D>& mesh, const std::filesystem::path& path) {
    if (mesh.empty()) throw InputError("refusing to write an empty mesh");
    const auto [node_path, ele_path] = detail::node_ele_paths(path);
    std::ofstream node(node_path), ele(ele_path);
    if (!node || !ele) throw InputError("cannot open '" + path.string() + "' for writing");
    node << mesh.num_vertices() << ' ' << D << '\n';
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
        node << i;
        for (int k = 0; k < D; ++k) node << ' ' << detail::format_double(mesh.vertex(i)[k]);
        node << '\n';
    }
    ele << mesh.num_elements() << ' ' << M + 1 << '\n';
    for (std::size_t k = 0; k < mesh.num_elements(); ++k) {
        ele << k;
        for (int v : mesh.element(k)) ele << ' ' << v;
        ele << '\n';
    }
}

inline AnyMesh read_mesh(const std::filesystem::path& path, MeshFormat format = MeshFormat::automatic) {
    if (format == MeshFormat::automatic) {
        const auto ext = path.extension().string();
        if (ext == ".vtk") format = MeshFormat::vtk;
        else if (ext == ".obj") format = MeshFormat::obj;
        else if (ext == ".node" || ext == ".ele" || ext.empty()) format = MeshFormat::node_ele;
        else throw InputError("cannot infer mesh format of '" + path.string() + "'");
    }
    if (format == MeshFormat::node_ele) return read_node_ele(path);
    std::ifstream in(path);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    return format == MeshFormat::vtk ? detail::read_vtk_stream(in, path.string())
                                     : detail::read_obj_stream(in, path.string());
}

} // namespace mmpde
