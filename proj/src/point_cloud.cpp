#include "llgs/point_cloud.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace llgs {

namespace {

struct PlyProperty {
  std::string name;
  std::string type;
  int size = 0;      // bytes in binary encoding
  bool is_list = false;
};

int type_size(const std::string& t) {
  if (t == "char" || t == "int8" || t == "uchar" || t == "uint8") return 1;
  if (t == "short" || t == "int16" || t == "ushort" || t == "uint16") return 2;
  if (t == "int" || t == "int32" || t == "uint" || t == "uint32" || t == "float" ||
      t == "float32")
    return 4;
  if (t == "double" || t == "float64") return 8;
  return 0;
}

bool is_float_type(const std::string& t) {
  return t == "float" || t == "float32" || t == "double" || t == "float64";
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Reads one header line ending in '\n'; strips trailing '\r'.
bool next_line(const std::string& buf, size_t& pos, std::string& line) {
  if (pos >= buf.size()) return false;
  size_t end = buf.find('\n', pos);
  if (end == std::string::npos) return false;
  line = buf.substr(pos, end - pos);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  pos = end + 1;
  return true;
}

double decode_scalar(const char* p, const std::string& type) {
  if (type == "float" || type == "float32") {
    float v;
    std::memcpy(&v, p, 4);
    return static_cast<double>(v);
  }
  if (type == "double" || type == "float64") {
    double v;
    std::memcpy(&v, p, 8);
    return v;
  }
  if (type == "uchar" || type == "uint8") {
    uint8_t v;
    std::memcpy(&v, p, 1);
    return v;
  }
  if (type == "char" || type == "int8") {
    int8_t v;
    std::memcpy(&v, p, 1);
    return v;
  }
  if (type == "ushort" || type == "uint16") {
    uint16_t v;
    std::memcpy(&v, p, 2);
    return v;
  }
  if (type == "short" || type == "int16") {
    int16_t v;
    std::memcpy(&v, p, 2);
    return v;
  }
  if (type == "uint" || type == "uint32") {
    uint32_t v;
    std::memcpy(&v, p, 4);
    return v;
  }
  int32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

}  // namespace

PointCloud load_ply(const std::string& path) {
  const std::string buf = read_file(path);
  size_t pos = 0;
  std::string line;

  if (!next_line(buf, pos, line) || line != "ply")
    throw PlyError("not a PLY file (missing 'ply' magic)", 0);

  bool binary = false;
  bool have_format = false;
  size_t vertex_count = 0;
  bool in_vertex_element = false;
  bool vertex_seen = false;
  bool vertex_is_first = true;
  int elements_seen = 0;
  std::vector<PlyProperty> props;

  while (true) {
    size_t line_off = pos;
    if (!next_line(buf, pos, line))
      throw PlyError("header truncated before end_header", buf.size());
    if (line == "end_header") break;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "comment" || tok == "obj_info" || tok.empty()) continue;
    if (tok == "format") {
      std::string fmt, ver;
      ls >> fmt >> ver;
      if (fmt == "ascii")
        binary = false;
      else if (fmt == "binary_little_endian")
        binary = true;
      else
        throw PlyError("unsupported PLY format '" + fmt + "'", line_off);
      have_format = true;
    } else if (tok == "element") {
      std::string name;
      size_t count = 0;
      ls >> name >> count;
      if (name == "vertex") {
        vertex_seen = true;
        vertex_is_first = (elements_seen == 0);
        vertex_count = count;
        in_vertex_element = true;
      } else {
        in_vertex_element = false;
      }
      ++elements_seen;
    } else if (tok == "property") {
      if (!in_vertex_element) continue;  // only vertex data is decoded
      PlyProperty p;
      ls >> p.type;
      if (p.type == "list") {
        throw PlyError("list property in vertex element is unsupported", line_off);
      }
      ls >> p.name;
      p.size = type_size(p.type);
      if (p.size == 0)
        throw PlyError("unsupported property type '" + p.type + "'", line_off);
      props.push_back(p);
    } else {
      throw PlyError("unrecognized header line '" + line + "'", line_off);
    }
  }
  if (!have_format) throw PlyError("missing format line", 0);
  if (!vertex_seen) throw PlyError("no vertex element", 0);
  if (!vertex_is_first)
    throw PlyError("vertex element must be the first element", 0);

  int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
  for (size_t i = 0; i < props.size(); ++i) {
    const auto& p = props[i];
    if (p.name == "x") ix = static_cast<int>(i);
    if (p.name == "y") iy = static_cast<int>(i);
    if (p.name == "z") iz = static_cast<int>(i);
    if (p.name == "red") ir = static_cast<int>(i);
    if (p.name == "green") ig = static_cast<int>(i);
    if (p.name == "blue") ib = static_cast<int>(i);
  }
  if (ix < 0 || iy < 0 || iz < 0) throw PlyError("missing x/y/z properties", 0);
  for (int idx : {ix, iy, iz})
    if (!is_float_type(props[idx].type))
      throw PlyError("x/y/z must be float or double", 0);
  bool has_colors = ir >= 0 && ig >= 0 && ib >= 0;
  if (has_colors) {
    for (int idx : {ir, ig, ib})
      if (type_size(props[idx].type) != 1) has_colors = false;  // only 8-bit colors
  }

  PointCloud cloud;
  cloud.points.reserve(vertex_count);
  if (has_colors) cloud.colors.emplace();

  if (binary) {
    size_t stride = 0;
    std::vector<size_t> offsets(props.size());
    for (size_t i = 0; i < props.size(); ++i) {
      offsets[i] = stride;
      stride += props[i].size;
    }
    for (size_t v = 0; v < vertex_count; ++v) {
      size_t rec = pos + v * stride;
      if (rec + stride > buf.size())
        throw PlyError("truncated payload at vertex " + std::to_string(v + 1), rec);
      auto get = [&](int pi) { return decode_scalar(buf.data() + rec + offsets[pi], props[pi].type); };
      Eigen::Vector3d p(get(ix), get(iy), get(iz));
      if (!p.allFinite()) throw PlyError("non-finite vertex " + std::to_string(v + 1), rec);
      cloud.points.push_back(p);
      if (has_colors)
        cloud.colors->push_back(Eigen::Vector3d(get(ir), get(ig), get(ib)) / 255.0);
    }
  } else {
    size_t cur = pos;
    auto next_token = [&](double* out) -> bool {
      while (cur < buf.size() && std::isspace(static_cast<unsigned char>(buf[cur]))) ++cur;
      if (cur >= buf.size()) return false;
      char* end = nullptr;
      double v = std::strtod(buf.c_str() + cur, &end);
      if (end == buf.c_str() + cur) return false;
      cur = static_cast<size_t>(end - buf.c_str());
      *out = v;
      return true;
    };
    std::vector<double> row(props.size());
    for (size_t v = 0; v < vertex_count; ++v) {
      for (size_t i = 0; i < props.size(); ++i) {
        if (!next_token(&row[i]))
          throw PlyError("truncated payload at vertex " + std::to_string(v + 1), cur);
      }
      Eigen::Vector3d p(row[ix], row[iy], row[iz]);
      if (!p.allFinite()) throw PlyError("non-finite vertex " + std::to_string(v + 1), cur);
      cloud.points.push_back(p);
      if (has_colors)
        cloud.colors->push_back(Eigen::Vector3d(row[ir], row[ig], row[ib]) / 255.0);
    }
  }
  return cloud;
}

void save_ply(const std::string& path, const PointCloud& cloud, bool binary) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write file: " + path);
  const bool has_colors = cloud.colors.has_value();
  out << "ply\n";
  out << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n");
  out << "element vertex " << cloud.points.size() << "\n";
  out << "property double x\nproperty double y\nproperty double z\n";
  if (has_colors)
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out << "end_header\n";

  auto to_u8 = [](double v) {
    double s = std::round(v * 255.0);
    return static_cast<uint8_t>(s < 0 ? 0 : (s > 255 ? 255 : s));
  };

  if (binary) {
    for (size_t i = 0; i < cloud.points.size(); ++i) {
      double xyz[3] = {cloud.points[i].x(), cloud.points[i].y(), cloud.points[i].z()};
      out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
      if (has_colors) {
        uint8_t rgb[3] = {to_u8((*cloud.colors)[i].x()), to_u8((*cloud.colors)[i].y()),
                          to_u8((*cloud.colors)[i].z())};
        out.write(reinterpret_cast<const char*>(rgb), 3);
      }
    }
  } else {
    char buf[128];
    for (size_t i = 0; i < cloud.points.size(); ++i) {
      std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g", cloud.points[i].x(),
                    cloud.points[i].y(), cloud.points[i].z());
      out << buf;
      if (has_colors)
        out << " " << int(to_u8((*cloud.colors)[i].x())) << " "
            << int(to_u8((*cloud.colors)[i].y())) << " "
            << int(to_u8((*cloud.colors)[i].z()));
      out << "\n";
    }
  }
  if (!out) throw DataError("write failed: " + path);
}

}  // namespace llgs
