#include <algorithm>
#include <bit>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "svfd/error.hpp"
#include "svfd/geometry.hpp"

namespace svfd {

namespace {

static_assert(std::endian::native == std::endian::little, "binary PLY I/O assumes a little-endian host");

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw_io("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

[[noreturn]] void parse_error(const std::string& what, std::size_t line) {
    throw_validation("parse error at line " + std::to_string(line) + ": " + what);
}

void append_polygon(std::vector<std::array<int, 3>>& faces, const std::vector<int>& poly,
                    std::size_t line) {
    if (poly.size() < 3) parse_error("face with fewer than 3 vertices", line);
    for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
        faces.push_back({poly[0], poly[k], poly[k + 1]});
    }
}

// ---------------------------------------------------------------- PLY

enum class PlyType { I8, U8, I16, U16, I32, U32, F32, F64 };

PlyType ply_type(const std::string& name, std::size_t line) {
    static const std::map<std::string, PlyType> table = {
        {"char", PlyType::I8},    {"int8", PlyType::I8},     {"uchar", PlyType::U8},
        {"uint8", PlyType::U8},   {"short", PlyType::I16},   {"int16", PlyType::I16},
        {"ushort", PlyType::U16}, {"uint16", PlyType::U16},  {"int", PlyType::I32},
        {"int32", PlyType::I32},  {"uint", PlyType::U32},    {"uint32", PlyType::U32},
        {"float", PlyType::F32},  {"float32", PlyType::F32}, {"double", PlyType::F64},
        {"float64", PlyType::F64},
    };
    const auto it = table.find(name);
    if (it == table.end()) parse_error("unknown PLY property type '" + name + "'", line);
    return it->second;
}

std::size_t ply_size(PlyType t) {
    switch (t) {
        case PlyType::I8:
        case PlyType::U8: return 1;
        case PlyType::I16:
        case PlyType::U16: return 2;
        case PlyType::I32:
        case PlyType::U32:
        case PlyType::F32: return 4;
        case PlyType::F64: return 8;
    }
    return 0;
}

struct PlyProperty {
    std::string name;
    PlyType type = PlyType::F32;
    bool is_list = false;
    PlyType count_type = PlyType::U8;
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> props;
};

struct PlyData {
    // vertex element columns by property name
    std::map<std::string, std::vector<double>> vertex;
    std::size_t vertex_count = 0;
    std::vector<std::array<int, 3>> faces;
    bool has_face_element = false;
};

class BinaryReader {
public:
    BinaryReader(const std::string& data, std::size_t pos) : data_(data), pos_(pos) {}

    double read(PlyType t) {
        const std::size_t n = ply_size(t);
        if (pos_ + n > data_.size()) {
            throw_validation("parse error at byte offset " + std::to_string(pos_) +
                             ": unexpected end of binary PLY data");
        }
        const char* p = data_.data() + pos_;
        pos_ += n;
        switch (t) {
            case PlyType::I8: return static_cast<double>(load<std::int8_t>(p));
            case PlyType::U8: return static_cast<double>(load<std::uint8_t>(p));
            case PlyType::I16: return static_cast<double>(load<std::int16_t>(p));
            case PlyType::U16: return static_cast<double>(load<std::uint16_t>(p));
            case PlyType::I32: return static_cast<double>(load<std::int32_t>(p));
            case PlyType::U32: return static_cast<double>(load<std::uint32_t>(p));
            case PlyType::F32: return static_cast<double>(load<float>(p));
            case PlyType::F64: return load<double>(p);
        }
        return 0.0;
    }
    std::size_t offset() const { return pos_; }

private:
    template <typename T>
    static T load(const char* p) {
        T v;
        std::memcpy(&v, p, sizeof(T));
        return v;
    }
    const std::string& data_;
    std::size_t pos_;
};

class AsciiReader {
public:
    AsciiReader(const std::string& data, std::size_t pos, std::size_t line)
        : data_(data), pos_(pos), line_(line) {}

    double read() {
        while (pos_ < data_.size() && std::isspace(static_cast<unsigned char>(data_[pos_]))) {
            if (data_[pos_] == '\n') ++line_;
            ++pos_;
        }
        if (pos_ >= data_.size()) parse_error("unexpected end of PLY data", line_);
        const char* begin = data_.c_str() + pos_;
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin) parse_error("expected a number", line_);
        pos_ += static_cast<std::size_t>(end - begin);
        return v;
    }

private:
    const std::string& data_;
    std::size_t pos_;
    std::size_t line_;
};

PlyData parse_ply_data(const std::string& bytes) {
    std::size_t pos = 0;
    std::size_t line = 0;
    auto next_line = [&]() -> std::string {
        if (pos >= bytes.size()) parse_error("unterminated PLY header", line + 1);
        const std::size_t end = bytes.find('\n', pos);
        std::string l = bytes.substr(pos, end == std::string::npos ? std::string::npos : end - pos);
        pos = end == std::string::npos ? bytes.size() : end + 1;
        ++line;
        if (!l.empty() && l.back() == '\r') l.pop_back();
        return l;
    };

    if (next_line() != "ply") parse_error("missing 'ply' magic", 1);
    bool binary = false;
    std::vector<PlyElement> elements;
    for (;;) {
        const std::string l = next_line();
        std::istringstream ls(l);
        std::string kw;
        ls >> kw;
        if (kw.empty() || kw == "comment" || kw == "obj_info") continue;
        if (kw == "end_header") break;
        if (kw == "format") {
            std::string fmt;
            ls >> fmt;
            if (fmt == "ascii") {
                binary = false;
            } else if (fmt == "binary_little_endian") {
                binary = true;
            } else {
                parse_error("unsupported PLY format '" + fmt + "'", line);
            }
        } else if (kw == "element") {
            PlyElement e;
            long long count = -1;
            ls >> e.name >> count;
            if (count < 0) parse_error("bad element count", line);
            e.count = static_cast<std::size_t>(count);
            elements.push_back(e);
        } else if (kw == "property") {
            if (elements.empty()) parse_error("property before element", line);
            PlyProperty p;
            std::string t;
            ls >> t;
            if (t == "list") {
                std::string ct, it;
                ls >> ct >> it >> p.name;
                p.is_list = true;
                p.count_type = ply_type(ct, line);
                p.type = ply_type(it, line);
            } else {
                p.type = ply_type(t, line);
                ls >> p.name;
            }
            if (p.name.empty()) parse_error("property without a name", line);
            elements.back().props.push_back(p);
        } else {
            parse_error("unknown header keyword '" + kw + "'", line);
        }
    }

    PlyData out;
    BinaryReader bin(bytes, pos);
    AsciiReader asc(bytes, pos, line);
    auto read_value = [&](PlyType t) { return binary ? bin.read(t) : asc.read(); };

    for (const auto& e : elements) {
        const bool is_vertex = e.name == "vertex";
        const bool is_face = e.name == "face";
        if (is_vertex) {
            out.vertex_count = e.count;
            for (const auto& p : e.props) {
                if (!p.is_list) out.vertex[p.name].reserve(e.count);
            }
        }
        if (is_face) out.has_face_element = true;
        for (std::size_t r = 0; r < e.count; ++r) {
            for (const auto& p : e.props) {
                if (p.is_list) {
                    const double cnt = read_value(p.count_type);
                    if (cnt < 0) parse_error("negative list length", line);
                    std::vector<int> poly(static_cast<std::size_t>(cnt));
                    for (auto& v : poly) v = static_cast<int>(read_value(p.type));
                    if (is_face && (p.name == "vertex_indices" || p.name == "vertex_index")) {
                        append_polygon(out.faces, poly, line);
                    }
                } else {
                    const double v = read_value(p.type);
                    if (is_vertex) out.vertex[p.name].push_back(v);
                }
            }
        }
    }
    for (const char* axis : {"x", "y", "z"}) {
        if (out.vertex_count > 0 && !out.vertex.count(axis)) {
            parse_error(std::string("vertex element lacks property '") + axis + "'", line);
        }
    }
    return out;
}

PointMatrix columns_to_points(const PlyData& d, const char* a, const char* b, const char* c) {
    PointMatrix p(static_cast<Eigen::Index>(d.vertex_count), 3);
    const auto& xa = d.vertex.at(a);
    const auto& xb = d.vertex.at(b);
    const auto& xc = d.vertex.at(c);
    for (std::size_t i = 0; i < d.vertex_count; ++i) {
        p(static_cast<Eigen::Index>(i), 0) = xa[i];
        p(static_cast<Eigen::Index>(i), 1) = xb[i];
        p(static_cast<Eigen::Index>(i), 2) = xc[i];
    }
    return p;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw_io("cannot write '" + path + "'");
    out << content;
    if (!out) throw_io("write failed for '" + path + "'");
}

template <typename T>
void put(std::string& buf, T v) {
    char raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    buf.append(raw, sizeof(T));
}

}  // namespace

TriangleMesh parse_obj(const std::string& text) {
    std::vector<Vec3> verts;
    std::vector<std::array<int, 3>> faces;
    std::istringstream in(text);
    std::string l;
    std::size_t line = 0;
    while (std::getline(in, l)) {
        ++line;
        std::istringstream ls(l);
        std::string kw;
        ls >> kw;
        if (kw == "v") {
            Vec3 v;
            if (!(ls >> v.x() >> v.y() >> v.z())) parse_error("malformed vertex", line);
            verts.push_back(v);
        } else if (kw == "f") {
            std::vector<int> poly;
            std::string tok;
            while (ls >> tok) {
                const std::string head = tok.substr(0, tok.find('/'));
                char* end = nullptr;
                const long idx = std::strtol(head.c_str(), &end, 10);
                if (head.empty() || *end != '\0' || idx == 0) parse_error("malformed face index '" + tok + "'", line);
                // Negative indices are relative to the current vertex count.
                poly.push_back(idx > 0 ? static_cast<int>(idx - 1)
                                       : static_cast<int>(static_cast<long>(verts.size()) + idx));
            }
            append_polygon(faces, poly, line);
        }
    }
    TriangleMesh mesh;
    mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
    for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = verts[i];
    mesh.faces = std::move(faces);
    mesh.validate();
    return mesh;
}

TriangleMesh parse_ply(const std::string& bytes) {
    const PlyData d = parse_ply_data(bytes);
    TriangleMesh mesh;
    mesh.vertices = d.vertex_count > 0 ? columns_to_points(d, "x", "y", "z") : PointMatrix(0, 3);
    mesh.faces = d.faces;
    mesh.validate();
    return mesh;
}

TriangleMesh load_mesh(const std::string& path, MeshFormat format) {
    const std::string data = read_file(path);
    try {
        return format == MeshFormat::Obj ? parse_obj(data) : parse_ply(data);
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.what());
    }
}

TriangleMesh load_mesh(const std::string& path) {
    const std::string ext = lower(std::filesystem::path(path).extension().string());
    if (ext == ".obj") return load_mesh(path, MeshFormat::Obj);
    if (ext == ".ply") return load_mesh(path, MeshFormat::Ply);
    throw_validation("unsupported mesh extension '" + ext + "' (expected .obj or .ply)");
}

void save_mesh_ply(const TriangleMesh& mesh, const std::string& path, bool binary) {
    std::string buf;
    std::ostringstream h;
    h << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
      << "element vertex " << mesh.vertex_count() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "element face " << mesh.face_count() << "\n"
      << "property list uchar int vertex_indices\nend_header\n";
    buf = h.str();
    if (binary) {
        for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
            for (int a = 0; a < 3; ++a) put<double>(buf, mesh.vertices(i, a));
        }
        for (const auto& f : mesh.faces) {
            put<std::uint8_t>(buf, 3);
            for (int v : f) put<std::int32_t>(buf, v);
        }
    } else {
        std::ostringstream body;
        body.precision(17);
        for (Eigen::Index i = 0; i < mesh.vertices.rows(); ++i) {
            body << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2) << '\n';
        }
        for (const auto& f : mesh.faces) body << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
        buf += body.str();
    }
    write_file(path, buf);
}

void save_cloud_ply(const WeightedPointCloud& cloud, const std::string& path, bool binary) {
    const bool nrm = cloud.has_normals();
    std::ostringstream h;
    h << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n"
      << "element vertex " << cloud.size() << "\n"
      << "property double x\nproperty double y\nproperty double z\n"
      << "property float weight\n";
    if (nrm) h << "property float nx\nproperty float ny\nproperty float nz\n";
    h << "end_header\n";
    std::string buf = h.str();
    std::ostringstream body;
    body.precision(17);
    for (Eigen::Index i = 0; i < cloud.points.rows(); ++i) {
        if (binary) {
            for (int a = 0; a < 3; ++a) put<double>(buf, cloud.points(i, a));
            put<float>(buf, static_cast<float>(cloud.weights(i)));
            if (nrm) {
                for (int a = 0; a < 3; ++a) put<float>(buf, static_cast<float>((*cloud.normals)(i, a)));
            }
        } else {
            body << cloud.points(i, 0) << ' ' << cloud.points(i, 1) << ' ' << cloud.points(i, 2) << ' '
                 << static_cast<float>(cloud.weights(i));
            if (nrm) {
                for (int a = 0; a < 3; ++a) body << ' ' << static_cast<float>((*cloud.normals)(i, a));
            }
            body << '\n';
        }
    }
    if (!binary) buf += body.str();
    write_file(path, buf);
}

WeightedPointCloud load_cloud(const std::string& path) {
    const std::string ext = lower(std::filesystem::path(path).extension().string());
    if (ext == ".ply") {
        const std::string data = read_file(path);
        PlyData d;
        try {
            d = parse_ply_data(data);
        } catch (const Error& e) {
            throw Error(e.kind(), path + ": " + e.what());
        }
        if (!d.faces.empty()) {
            TriangleMesh mesh;
            mesh.vertices = columns_to_points(d, "x", "y", "z");
            mesh.faces = d.faces;
            return mesh_to_weighted_cloud(mesh);
        }
        if (d.vertex_count == 0) throw_validation(path + ": empty point cloud");
        WeightedPointCloud c;
        c.points = columns_to_points(d, "x", "y", "z");
        if (d.vertex.count("weight")) {
            const auto& w = d.vertex.at("weight");
            c.weights = Eigen::Map<const Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
            const double total = c.weights.sum();
            if (!(total > 0.0)) throw_validation(path + ": weights sum to zero");
            c.weights /= total;
        } else {
            c.weights = Eigen::VectorXd::Constant(c.points.rows(), 1.0 / static_cast<double>(c.points.rows()));
        }
        if (d.vertex.count("nx") && d.vertex.count("ny") && d.vertex.count("nz")) {
            PointMatrix n = columns_to_points(d, "nx", "ny", "nz");
            n.rowwise().normalize();
            c.normals = std::move(n);
        }
        c.validate();
        return c;
    }
    return mesh_to_weighted_cloud(load_mesh(path));
}

}  // namespace svfd
