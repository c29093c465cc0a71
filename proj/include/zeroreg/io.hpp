#pragma once

#include "zeroreg/error.hpp"
#include "zeroreg/types.hpp"

#include <bit>
#include <cctype>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace zeroreg {

static_assert(std::endian::native == std::endian::little, "binary readers assume a little-endian host");

enum class CloudFormat { kAuto, kPlyAscii, kPlyBinary, kKittiBin };

namespace detail {

enum class PlyType { kChar, kUChar, kShort, kUShort, kInt, kUInt, kFloat, kDouble };

inline bool parse_ply_type(const std::string& s, PlyType& out) {
  if (s == "char" || s == "int8") out = PlyType::kChar;
  else if (s == "uchar" || s == "uint8") out = PlyType::kUChar;
  else if (s == "short" || s == "int16") out = PlyType::kShort;
  else if (s == "ushort" || s == "uint16") out = PlyType::kUShort;
  else if (s == "int" || s == "int32") out = PlyType::kInt;
  else if (s == "uint" || s == "uint32") out = PlyType::kUInt;
  else if (s == "float" || s == "float32") out = PlyType::kFloat;
  else if (s == "double" || s == "float64") out = PlyType::kDouble;
  else return false;
  return true;
}

inline std::size_t ply_type_size(PlyType t) {
  switch (t) {
    case PlyType::kChar: case PlyType::kUChar: return 1;
    case PlyType::kShort: case PlyType::kUShort: return 2;
    case PlyType::kInt: case PlyType::kUInt: case PlyType::kFloat: return 4;
    case PlyType::kDouble: return 8;
  }
  return 0;
}

inline double read_ply_scalar(const char* p, PlyType t) {
  switch (t) {
    case PlyType::kChar: { std::int8_t v; std::memcpy(&v, p, 1); return v; }
    case PlyType::kUChar: { std::uint8_t v; std::memcpy(&v, p, 1); return v; }
    case PlyType::kShort: { std::int16_t v; std::memcpy(&v, p, 2); return v; }
    case PlyType::kUShort: { std::uint16_t v; std::memcpy(&v, p, 2); return v; }
    case PlyType::kInt: { std::int32_t v; std::memcpy(&v, p, 4); return v; }
    case PlyType::kUInt: { std::uint32_t v; std::memcpy(&v, p, 4); return v; }
    case PlyType::kFloat: { float v; std::memcpy(&v, p, 4); return v; }
    case PlyType::kDouble: { double v; std::memcpy(&v, p, 8); return v; }
  }
  return 0.0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::kFloat;
  bool is_list = false;
  PlyType count_type = PlyType::kUChar;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

inline Error parse_error(const std::string& path, std::size_t offset, const std::string& what) {
  return Error(ErrorKind::kParse, path + " at byte " + std::to_string(offset) + ": " + what);
}

inline std::vector<char> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::kIo, "cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline PointCloud parse_ply(const std::vector<char>& buf, const std::string& path, std::size_t& dropped) {
  std::size_t pos = 0;
  auto next_line = [&](std::size_t& line_start) -> std::string {
    line_start = pos;
    if (pos >= buf.size()) throw parse_error(path, pos, "unexpected end of file");
    while (pos < buf.size() && buf[pos] != '\n') ++pos;
    std::string line(buf.data() + line_start, pos - line_start);
    if (pos < buf.size()) ++pos;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  std::size_t line_start = 0;
  if (next_line(line_start) != "ply") throw parse_error(path, 0, "missing 'ply' magic");

  bool binary = false;
  bool have_format = false;
  std::vector<PlyElement> elements;
  while (true) {
    const std::string line = next_line(line_start);
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (word.empty() || word == "comment" || word == "obj_info") continue;
    if (word == "end_header") break;
    if (word == "format") {
      std::string fmt, version;
      ss >> fmt >> version;
      if (fmt == "ascii") binary = false;
      else if (fmt == "binary_little_endian") binary = true;
      else throw parse_error(path, line_start, "unsupported format '" + fmt + "'");
      have_format = true;
    } else if (word == "element") {
      PlyElement e;
      long long count = -1;
      ss >> e.name >> count;
      if (e.name.empty() || count < 0) throw parse_error(path, line_start, "malformed element line");
      e.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(e));
    } else if (word == "property") {
      if (elements.empty()) throw parse_error(path, line_start, "property before any element");
      PlyProperty prop;
      std::string type;
      ss >> type;
      if (type == "list") {
        std::string count_type, item_type;
        ss >> count_type >> item_type >> prop.name;
        prop.is_list = true;
        if (!parse_ply_type(count_type, prop.count_type) || !parse_ply_type(item_type, prop.type)) {
          throw parse_error(path, line_start, "unknown list property type");
        }
      } else {
        ss >> prop.name;
        if (!parse_ply_type(type, prop.type)) throw parse_error(path, line_start, "unknown property type '" + type + "'");
      }
      if (prop.name.empty()) throw parse_error(path, line_start, "property without a name");
      elements.back().properties.push_back(prop);
    } else {
      throw parse_error(path, line_start, "unexpected header keyword '" + word + "'");
    }
  }
  if (!have_format) throw parse_error(path, pos, "header has no format line");

  PointCloud cloud;
  cloud.source = path;
  dropped = 0;
  bool found_vertex = false;

  if (binary) {
    for (const auto& e : elements) {
      const bool is_vertex = e.name == "vertex";
      int ix = -1, iy = -1, iz = -1;
      std::vector<std::size_t> offsets;
      std::size_t stride = 0;
      bool fixed = true;
      for (std::size_t k = 0; k < e.properties.size(); ++k) {
        const auto& p = e.properties[k];
        if (p.is_list) fixed = false;
        offsets.push_back(stride);
        stride += ply_type_size(p.type);
        if (p.name == "x") ix = static_cast<int>(k);
        if (p.name == "y") iy = static_cast<int>(k);
        if (p.name == "z") iz = static_cast<int>(k);
      }
      if (is_vertex) {
        found_vertex = true;
        if (ix < 0 || iy < 0 || iz < 0) throw parse_error(path, pos, "vertex element lacks x/y/z");
        if (!fixed) throw parse_error(path, pos, "list properties on vertex are not supported");
        if (pos + stride * e.count > buf.size()) throw parse_error(path, buf.size(), "truncated vertex data");
        cloud.points.reserve(e.count);
        for (std::size_t i = 0; i < e.count; ++i, pos += stride) {
          const char* rec = buf.data() + pos;
          Point3 p(read_ply_scalar(rec + offsets[ix], e.properties[ix].type),
                   read_ply_scalar(rec + offsets[iy], e.properties[iy].type),
                   read_ply_scalar(rec + offsets[iz], e.properties[iz].type));
          if (is_finite(p)) cloud.points.push_back(p);
          else ++dropped;
        }
        break;
      }
      // Skip an element that precedes the vertices.
      for (std::size_t i = 0; i < e.count; ++i) {
        for (const auto& p : e.properties) {
          if (p.is_list) {
            const std::size_t cs = ply_type_size(p.count_type);
            if (pos + cs > buf.size()) throw parse_error(path, pos, "truncated list count");
            const auto n = static_cast<std::size_t>(read_ply_scalar(buf.data() + pos, p.count_type));
            pos += cs + n * ply_type_size(p.type);
          } else {
            pos += ply_type_size(p.type);
          }
          if (pos > buf.size()) throw parse_error(path, buf.size(), "truncated element '" + e.name + "'");
        }
      }
    }
  } else {
    for (const auto& e : elements) {
      const bool is_vertex = e.name == "vertex";
      int ix = -1, iy = -1, iz = -1;
      for (std::size_t k = 0; k < e.properties.size(); ++k) {
        if (e.properties[k].name == "x") ix = static_cast<int>(k);
        if (e.properties[k].name == "y") iy = static_cast<int>(k);
        if (e.properties[k].name == "z") iz = static_cast<int>(k);
      }
      if (is_vertex && (ix < 0 || iy < 0 || iz < 0)) throw parse_error(path, pos, "vertex element lacks x/y/z");
      for (std::size_t i = 0; i < e.count; ++i) {
        std::size_t start = 0;
        if (pos >= buf.size()) throw parse_error(path, pos, "unexpected end of data in element '" + e.name + "'");
        const std::string line = next_line(start);
        if (!is_vertex) continue;
        std::istringstream ss(line);
        std::vector<double> values;
        for (const auto& p : e.properties) {
          double v = 0.0;
          if (p.is_list) throw parse_error(path, start, "list properties on vertex are not supported");
          std::string tok;
          if (!(ss >> tok)) throw parse_error(path, start, "too few values in vertex line");
          try {
            v = std::stod(tok);
          } catch (const std::exception&) {
            // nan/inf spellings are accepted by stod; anything else is malformed.
            throw parse_error(path, start, "bad number '" + tok + "'");
          }
          values.push_back(v);
        }
        Point3 p(values[ix], values[iy], values[iz]);
        if (is_finite(p)) cloud.points.push_back(p);
        else ++dropped;
      }
      if (is_vertex) {
        found_vertex = true;
        break;
      }
    }
  }
  if (!found_vertex) throw parse_error(path, pos, "no vertex element");
  return cloud;
}

inline PointCloud parse_kitti(const std::vector<char>& buf, const std::string& path, std::size_t& dropped) {
  constexpr std::size_t kStride = 4 * sizeof(float);
  if (buf.size() % kStride != 0) {
    throw parse_error(path, buf.size() - buf.size() % kStride,
                      "size " + std::to_string(buf.size()) + " is not a multiple of 16");
  }
  PointCloud cloud;
  cloud.source = path;
  dropped = 0;
  const std::size_t n = buf.size() / kStride;
  cloud.points.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    float xyzi[4];
    std::memcpy(xyzi, buf.data() + i * kStride, kStride);
    Point3 p(xyzi[0], xyzi[1], xyzi[2]);
    if (is_finite(p)) cloud.points.push_back(p);
    else ++dropped;
  }
  return cloud;
}

inline std::string lower_extension(const std::string& path) {
  auto ext = std::filesystem::path(path).extension().string();
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext;
}

}  // namespace detail

/// Reads a PLY (ascii or binary little-endian) or KITTI velodyne .bin file.
/// Non-finite points are dropped; their number is written to `dropped` when given.
inline PointCloud load_cloud(const std::string& path, CloudFormat format = CloudFormat::kAuto,
                             std::size_t* dropped = nullptr) {
  const auto buf = detail::read_file(path);
  if (buf.empty()) throw detail::parse_error(path, 0, "empty file");
  std::size_t n_dropped = 0;
  PointCloud cloud;
  const bool ply_magic = buf.size() >= 3 && std::memcmp(buf.data(), "ply", 3) == 0;
  if (format == CloudFormat::kAuto) {
    if (ply_magic) format = CloudFormat::kPlyBinary;
    else if (detail::lower_extension(path) == ".bin") format = CloudFormat::kKittiBin;
    else throw detail::parse_error(path, 0, "unknown magic; expected PLY or a .bin KITTI scan");
  }
  if (format == CloudFormat::kKittiBin) cloud = detail::parse_kitti(buf, path, n_dropped);
  else cloud = detail::parse_ply(buf, path, n_dropped);
  if (dropped) *dropped = n_dropped;
  return cloud;
}

/// Writes `cloud`. PLY ascii stores doubles at round-trip precision; PLY binary
/// and KITTI store float32.
inline void save_cloud(const PointCloud& cloud, const std::string& path, CloudFormat format = CloudFormat::kPlyBinary) {
  if (format == CloudFormat::kAuto) {
    format = detail::lower_extension(path) == ".bin" ? CloudFormat::kKittiBin : CloudFormat::kPlyBinary;
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::kIo, "cannot open '" + path + "' for writing");

  if (format == CloudFormat::kKittiBin) {
    for (const auto& p : cloud.points) {
      const float rec[4] = {static_cast<float>(p.x()), static_cast<float>(p.y()), static_cast<float>(p.z()), 0.0f};
      out.write(reinterpret_cast<const char*>(rec), sizeof(rec));
    }
  } else if (format == CloudFormat::kPlyAscii) {
    out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
        << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
    out << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (const auto& p : cloud.points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
  } else {
    out << "ply\nformat binary_little_endian 1.0\nelement vertex " << cloud.size()
        << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
    for (const auto& p : cloud.points) {
      const float rec[3] = {static_cast<float>(p.x()), static_cast<float>(p.y()), static_cast<float>(p.z())};
      out.write(reinterpret_cast<const char*>(rec), sizeof(rec));
    }
  }
  out.flush();
  if (!out) throw Error(ErrorKind::kIo, "write failed for '" + path + "'");
}

}  // namespace zeroreg
