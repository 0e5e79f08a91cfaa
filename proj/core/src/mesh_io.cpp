#include "polarmesh/mesh_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace polarmesh {

namespace {

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

PlyType parse_ply_type(const std::string& s, const std::string& path) {
    if (s == "char" || s == "int8") return PlyType::i8;
    if (s == "uchar" || s == "uint8") return PlyType::u8;
    if (s == "short" || s == "int16") return PlyType::i16;
    if (s == "ushort" || s == "uint16") return PlyType::u16;
    if (s == "int" || s == "int32") return PlyType::i32;
    if (s == "uint" || s == "uint32") return PlyType::u32;
    if (s == "float" || s == "float32") return PlyType::f32;
    if (s == "double" || s == "float64") return PlyType::f64;
    throw std::runtime_error(path + ": unsupported property type '" + s + "'");
}

bool is_float_type(PlyType t) { return t == PlyType::f32 || t == PlyType::f64; }

struct PlyProperty {
    bool is_list = false;
    PlyType count_type = PlyType::u8;
    PlyType value_type = PlyType::f32;
    std::string name;
};

struct PlyElement {
    std::string name;
    size_t count = 0;
    std::vector<PlyProperty> props;
};

double read_binary_scalar(std::istream& in, PlyType t, const std::string& path) {
    unsigned char buf[8];
    size_t n = 0;
    switch (t) {
        case PlyType::i8:
        case PlyType::u8: n = 1; break;
        case PlyType::i16:
        case PlyType::u16: n = 2; break;
        case PlyType::i32:
        case PlyType::u32:
        case PlyType::f32: n = 4; break;
        case PlyType::f64: n = 8; break;
    }
    if (!in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n)))
        throw std::runtime_error(path + ": unexpected end of binary data");
    uint64_t bits = 0;
    for (size_t i = 0; i < n; ++i) bits |= static_cast<uint64_t>(buf[i]) << (8 * i);
    switch (t) {
        case PlyType::i8: return static_cast<int8_t>(bits);
        case PlyType::u8: return static_cast<uint8_t>(bits);
        case PlyType::i16: return static_cast<int16_t>(bits);
        case PlyType::u16: return static_cast<uint16_t>(bits);
        case PlyType::i32: return static_cast<int32_t>(bits);
        case PlyType::u32: return static_cast<uint32_t>(bits);
        case PlyType::f32: {
            float f;
            uint32_t b32 = static_cast<uint32_t>(bits);
            std::memcpy(&f, &b32, sizeof f);
            return f;
        }
        case PlyType::f64: {
            double d;
            std::memcpy(&d, &bits, sizeof d);
            return d;
        }
    }
    return 0.0;
}

double read_ascii_scalar(std::istream& in, const std::string& path) {
    double v;
    if (!(in >> v)) throw std::runtime_error(path + ": unexpected end of ascii data");
    return v;
}

void write_le_bytes(std::ostream& out, uint64_t bits, size_t n) {
    char buf[8];
    for (size_t i = 0; i < n; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    out.write(buf, static_cast<std::streamsize>(n));
}

void write_le_double(std::ostream& out, double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    write_le_bytes(out, bits, 8);
}

void write_le_int32(std::ostream& out, int32_t v) {
    write_le_bytes(out, static_cast<uint32_t>(v), 4);
}

uint8_t to_byte(double v) {
    double scaled = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
    return static_cast<uint8_t>(scaled);
}

std::string lower_extension(const std::string& path) {
    size_t dot = path.find_last_of('.');
    if (dot == std::string::npos) return "";
    std::string ext = path.substr(dot + 1);
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

}  // namespace

Mesh load_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open mesh file: " + path);

    std::string line;
    auto next_line = [&]() {
        if (!std::getline(in, line)) throw std::runtime_error(path + ": truncated header");
        if (!line.empty() && line.back() == '\r') line.pop_back();
    };
    next_line();
    if (line != "ply") throw std::runtime_error(path + ": missing ply magic");

    bool binary = false;
    bool have_format = false;
    std::vector<PlyElement> elements;
    for (;;) {
        next_line();
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        if (word.empty() || word == "comment" || word == "obj_info") continue;
        if (word == "format") {
            std::string fmt, version;
            ss >> fmt >> version;
            if (fmt == "ascii") {
                binary = false;
            } else if (fmt == "binary_little_endian") {
                binary = true;
            } else {
                throw std::runtime_error(path + ": unsupported format '" + fmt + "'");
            }
            have_format = true;
        } else if (word == "element") {
            PlyElement el;
            ss >> el.name >> el.count;
            if (!ss) throw std::runtime_error(path + ": malformed element line");
            elements.push_back(el);
        } else if (word == "property") {
            if (elements.empty())
                throw std::runtime_error(path + ": property before any element");
            PlyProperty prop;
            std::string type;
            ss >> type;
            if (type == "list") {
                prop.is_list = true;
                std::string count_type, value_type;
                ss >> count_type >> value_type >> prop.name;
                prop.count_type = parse_ply_type(count_type, path);
                prop.value_type = parse_ply_type(value_type, path);
            } else {
                ss >> prop.name;
                prop.value_type = parse_ply_type(type, path);
            }
            if (!ss) throw std::runtime_error(path + ": malformed property line");
            elements.back().props.push_back(prop);
        } else if (word == "end_header") {
            break;
        } else {
            throw std::runtime_error(path + ": unrecognized header keyword '" + word + "'");
        }
    }
    if (!have_format) throw std::runtime_error(path + ": header has no format line");

    auto read_scalar = [&](PlyType t) {
        return binary ? read_binary_scalar(in, t, path) : read_ascii_scalar(in, path);
    };

    Mesh mesh;
    bool has_color = false;
    for (const PlyElement& el : elements) {
        if (el.name == "vertex") {
            int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
            for (size_t p = 0; p < el.props.size(); ++p) {
                const std::string& n = el.props[p].name;
                if (el.props[p].is_list) continue;
                if (n == "x") ix = static_cast<int>(p);
                else if (n == "y") iy = static_cast<int>(p);
                else if (n == "z") iz = static_cast<int>(p);
                else if (n == "red" || n == "r") ir = static_cast<int>(p);
                else if (n == "green" || n == "g") ig = static_cast<int>(p);
                else if (n == "blue" || n == "b") ib = static_cast<int>(p);
            }
            if (ix < 0 || iy < 0 || iz < 0)
                throw std::runtime_error(path + ": vertex element lacks x/y/z");
            has_color = ir >= 0 && ig >= 0 && ib >= 0;
            mesh.vertices.resize(el.count);
            if (has_color) mesh.albedo.resize(el.count);
            std::vector<double> row(el.props.size());
            for (size_t v = 0; v < el.count; ++v) {
                for (size_t p = 0; p < el.props.size(); ++p) {
                    if (el.props[p].is_list) {
                        size_t n = static_cast<size_t>(read_scalar(el.props[p].count_type));
                        for (size_t k = 0; k < n; ++k) read_scalar(el.props[p].value_type);
                        row[p] = 0;
                    } else {
                        row[p] = read_scalar(el.props[p].value_type);
                    }
                }
                mesh.vertices[v] = Eigen::Vector3d(row[ix], row[iy], row[iz]);
                if (has_color) {
                    double scale = is_float_type(el.props[ir].value_type) ? 1.0 : 1.0 / 255.0;
                    mesh.albedo[v] =
                        Eigen::Vector3d(row[ir] * scale, row[ig] * scale, row[ib] * scale);
                }
            }
        } else if (el.name == "face") {
            for (size_t f = 0; f < el.count; ++f) {
                for (const PlyProperty& prop : el.props) {
                    if (!prop.is_list) {
                        read_scalar(prop.value_type);
                        continue;
                    }
                    size_t n = static_cast<size_t>(read_scalar(prop.count_type));
                    std::vector<int> poly(n);
                    for (size_t k = 0; k < n; ++k)
                        poly[k] = static_cast<int>(read_scalar(prop.value_type));
                    if (prop.name != "vertex_indices" && prop.name != "vertex_index") continue;
                    if (n < 3)
                        throw std::runtime_error(path + ": face with fewer than 3 vertices");
                    for (size_t k = 1; k + 1 < n; ++k)
                        mesh.faces.push_back({poly[0], poly[k], poly[k + 1]});
                }
            }
        } else {
            // Skip unknown elements row by row.
            for (size_t r = 0; r < el.count; ++r) {
                for (const PlyProperty& prop : el.props) {
                    if (prop.is_list) {
                        size_t n = static_cast<size_t>(read_scalar(prop.count_type));
                        for (size_t k = 0; k < n; ++k) read_scalar(prop.value_type);
                    } else {
                        read_scalar(prop.value_type);
                    }
                }
            }
        }
    }
    return mesh;
}

Mesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open mesh file: " + path);
    Mesh mesh;
    size_t colored = 0;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ss(line);
        std::string tag;
        if (!(ss >> tag)) continue;
        if (tag == "v") {
            double x, y, z;
            if (!(ss >> x >> y >> z))
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": malformed vertex");
            mesh.vertices.emplace_back(x, y, z);
            double r, g, b;
            if (ss >> r >> g >> b) {
                mesh.albedo.resize(mesh.vertices.size(), Eigen::Vector3d::Zero());
                mesh.albedo.back() = Eigen::Vector3d(r, g, b);
                ++colored;
            }
        } else if (tag == "f") {
            std::vector<int> poly;
            std::string token;
            while (ss >> token) {
                std::istringstream ts(token.substr(0, token.find('/')));
                int idx;
                if (!(ts >> idx) || idx == 0)
                    throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                             ": malformed face index '" + token + "'");
                poly.push_back(idx > 0 ? idx - 1
                                       : static_cast<int>(mesh.vertices.size()) + idx);
            }
            if (poly.size() < 3)
                throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                         ": face with fewer than 3 vertices");
            for (size_t k = 1; k + 1 < poly.size(); ++k)
                mesh.faces.push_back({poly[0], poly[k], poly[k + 1]});
        }
        // All other record types (vn, vt, usemtl, ...) are irrelevant here.
    }
    // Albedo only counts when every vertex carried a color.
    if (colored != mesh.vertices.size()) mesh.albedo.clear();
    return mesh;
}

Mesh load_mesh(const std::string& path) {
    std::string ext = lower_extension(path);
    if (ext == "ply") return load_ply(path);
    if (ext == "obj") return load_obj(path);
    throw std::runtime_error("unsupported mesh format: " + path);
}

void save_ply(const Mesh& mesh, const std::string& path, bool binary) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write mesh file: " + path);
    const bool color = mesh.has_albedo();
    out << "ply\nformat " << (binary ? "binary_little_endian" : "ascii") << " 1.0\n";
    out << "element vertex " << mesh.vertices.size() << "\n";
    out << "property double x\nproperty double y\nproperty double z\n";
    if (color) out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    out << "element face " << mesh.faces.size() << "\n";
    out << "property list uchar int vertex_indices\nend_header\n";
    if (binary) {
        for (size_t v = 0; v < mesh.vertices.size(); ++v) {
            for (int k = 0; k < 3; ++k) write_le_double(out, mesh.vertices[v][k]);
            if (color) {
                for (int k = 0; k < 3; ++k) {
                    uint8_t byte = to_byte(mesh.albedo[v][k]);
                    out.write(reinterpret_cast<const char*>(&byte), 1);
                }
            }
        }
        for (const auto& f : mesh.faces) {
            uint8_t n = 3;
            out.write(reinterpret_cast<const char*>(&n), 1);
            for (int k = 0; k < 3; ++k) write_le_int32(out, f[k]);
        }
    } else {
        out << std::setprecision(17);
        for (size_t v = 0; v < mesh.vertices.size(); ++v) {
            out << mesh.vertices[v].x() << ' ' << mesh.vertices[v].y() << ' '
                << mesh.vertices[v].z();
            if (color)
                out << ' ' << int(to_byte(mesh.albedo[v][0])) << ' '
                    << int(to_byte(mesh.albedo[v][1])) << ' '
                    << int(to_byte(mesh.albedo[v][2]));
            out << '\n';
        }
        for (const auto& f : mesh.faces)
            out << "3 " << f[0] << ' ' << f[1] << ' ' << f[2] << '\n';
    }
    if (!out) throw std::runtime_error("failed writing mesh file: " + path);
}

}  // namespace polarmesh
