#include "reconeval/core/io.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "reconeval/error.hpp"

namespace reconeval {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoFailure("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoFailure("read error on " + path.string());
  return ss.str();
}

bool parse_double(std::string_view tok, double& out) {
  if (tok.empty()) return false;
  // from_chars rejects a leading '+', which some writers emit.
  if (tok.front() == '+') tok.remove_prefix(1);
  const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

/// Splits on ASCII whitespace without allocating per token.
class Tokenizer {
 public:
  Tokenizer(std::string_view text, std::size_t pos) : text_(text), pos_(pos) {}
  std::optional<std::string_view> next() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
    if (pos_ >= text_.size()) return std::nullopt;
    const std::size_t start = pos_;
    while (pos_ < text_.size() && !is_space(text_[pos_])) ++pos_;
    return text_.substr(start, pos_ - start);
  }

 private:
  static bool is_space(char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
  }
  std::string_view text_;
  std::size_t pos_;
};

// ---------------------------------------------------------------------------
// PLY

enum class PlyType { i8, u8, i16, u16, i32, u32, f32, f64 };

std::optional<PlyType> ply_type(std::string_view name) {
  if (name == "char" || name == "int8") return PlyType::i8;
  if (name == "uchar" || name == "uint8") return PlyType::u8;
  if (name == "short" || name == "int16") return PlyType::i16;
  if (name == "ushort" || name == "uint16") return PlyType::u16;
  if (name == "int" || name == "int32") return PlyType::i32;
  if (name == "uint" || name == "uint32") return PlyType::u32;
  if (name == "float" || name == "float32") return PlyType::f32;
  if (name == "double" || name == "float64") return PlyType::f64;
  return std::nullopt;
}

std::size_t ply_size(PlyType t) {
  switch (t) {
    case PlyType::i8:
    case PlyType::u8: return 1;
    case PlyType::i16:
    case PlyType::u16: return 2;
    case PlyType::i32:
    case PlyType::u32:
    case PlyType::f32: return 4;
    case PlyType::f64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type = PlyType::f32;
  bool is_list = false;
  PlyType count_type = PlyType::u8;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::vector<PlyProperty> properties;
};

template <typename T>
T load_le(const char* p) {
  T v;
  std::memcpy(&v, p, sizeof(T));
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    auto* b = reinterpret_cast<unsigned char*>(&v);
    std::reverse(b, b + sizeof(T));
  }
  return v;
}

double decode_binary(PlyType t, const char* p) {
  switch (t) {
    case PlyType::i8: return load_le<std::int8_t>(p);
    case PlyType::u8: return load_le<std::uint8_t>(p);
    case PlyType::i16: return load_le<std::int16_t>(p);
    case PlyType::u16: return load_le<std::uint16_t>(p);
    case PlyType::i32: return load_le<std::int32_t>(p);
    case PlyType::u32: return load_le<std::uint32_t>(p);
    case PlyType::f32: return load_le<float>(p);
    case PlyType::f64: return load_le<double>(p);
  }
  return 0.0;
}

double normalize_intensity(PlyType t, double v) {
  switch (t) {
    case PlyType::u8: return v / 255.0;
    case PlyType::u16: return v / 65535.0;
    case PlyType::i8: return std::max(0.0, v) / 127.0;
    case PlyType::i16: return std::max(0.0, v) / 32767.0;
    default: break;
  }
  return std::clamp(v, 0.0, 1.0);
}

bool is_intensity_name(std::string_view n) {
  return n == "gray" || n == "grey" || n == "intensity" || n == "scalar_intensity";
}

PointCloud parse_ply(const std::string& text, const fs::path& path) {
  const std::string where = " in " + path.string();
  // Header: line-oriented up to "end_header".
  std::size_t pos = 0;
  auto next_line = [&]() -> std::optional<std::string> {
    if (pos >= text.size()) return std::nullopt;
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line = text.substr(pos, nl - pos);
    pos = std::min(nl + 1, text.size() + 1);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
  };

  auto magic = next_line();
  if (!magic || *magic != "ply") throw MalformedFile("missing 'ply' magic" + where);

  bool binary = false;
  bool saw_format = false;
  bool saw_end = false;
  std::vector<PlyElement> elements;
  while (auto line = next_line()) {
    std::istringstream ls(*line);
    std::string kw;
    ls >> kw;
    if (kw.empty() || kw == "comment" || kw == "obj_info") continue;
    if (kw == "end_header") {
      saw_end = true;
      break;
    }
    if (kw == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii") {
        binary = false;
      } else if (fmt == "binary_little_endian") {
        binary = true;
      } else {
        throw MalformedFile("unsupported PLY format '" + fmt + "'" + where);
      }
      saw_format = true;
    } else if (kw == "element") {
      PlyElement e;
      long long count = -1;
      ls >> e.name >> count;
      if (!ls || count < 0) throw MalformedFile("bad element line '" + *line + "'" + where);
      e.count = static_cast<std::size_t>(count);
      elements.push_back(std::move(e));
    } else if (kw == "property") {
      if (elements.empty()) throw MalformedFile("property before element" + where);
      PlyProperty p;
      std::string t;
      ls >> t;
      if (t == "list") {
        std::string ct, it;
        ls >> ct >> it >> p.name;
        auto c = ply_type(ct);
        auto i = ply_type(it);
        if (!c || !i || p.name.empty()) throw MalformedFile("bad list property '" + *line + "'" + where);
        p.is_list = true;
        p.count_type = *c;
        p.type = *i;
      } else {
        auto ty = ply_type(t);
        ls >> p.name;
        if (!ty || p.name.empty()) throw MalformedFile("bad property '" + *line + "'" + where);
        p.type = *ty;
      }
      elements.back().properties.push_back(std::move(p));
    } else {
      throw MalformedFile("unknown header keyword '" + kw + "'" + where);
    }
  }
  if (!saw_end) throw MalformedFile("truncated PLY header" + where);
  if (!saw_format) throw MalformedFile("PLY header lacks format line" + where);

  auto vertex_it = std::find_if(elements.begin(), elements.end(),
                                [](const PlyElement& e) { return e.name == "vertex"; });
  if (vertex_it == elements.end()) throw MalformedFile("PLY has no vertex element" + where);
  const PlyElement& vertex = *vertex_it;

  int ix = -1, iy = -1, iz = -1, ii = -1;
  bool has_rgb = false;
  for (std::size_t k = 0; k < vertex.properties.size(); ++k) {
    const auto& p = vertex.properties[k];
    if (p.is_list) continue;
    const int kk = static_cast<int>(k);
    if (p.name == "x") ix = kk;
    else if (p.name == "y") iy = kk;
    else if (p.name == "z") iz = kk;
    else if (ii < 0 && is_intensity_name(p.name)) ii = kk;
    else if (p.name == "red" || p.name == "green" || p.name == "blue") has_rgb = true;
  }
  if (ix < 0 || iy < 0 || iz < 0) throw MalformedFile("vertex element lacks x/y/z" + where);
  if (has_rgb) std::cerr << "warning: ignoring RGB channels in " << path.string() << "\n";
  if (vertex.count == 0) throw EmptyCloud("PLY has zero vertices" + where);

  PointCloud cloud;
  cloud.points.reserve(vertex.count);
  std::vector<double> inten;
  if (ii >= 0) inten.reserve(vertex.count);
  std::vector<double> row;

  auto store_vertex = [&](const std::vector<double>& r) {
    Point3 p(r[ix], r[iy], r[iz]);
    if (!p.allFinite()) throw MalformedFile("non-finite vertex coordinate" + where);
    cloud.points.push_back(p);
    if (ii >= 0) inten.push_back(normalize_intensity(vertex.properties[ii].type, r[ii]));
  };

  if (!binary) {
    Tokenizer tok(text, pos);
    auto number = [&]() {
      auto t = tok.next();
      if (!t) throw MalformedFile("unexpected end of PLY data" + where);
      double v = 0.0;
      if (!parse_double(*t, v)) throw MalformedFile("non-numeric token '" + std::string(*t) + "'" + where);
      return v;
    };
    for (const auto& e : elements) {
      const bool is_vertex = &e == &vertex;
      for (std::size_t n = 0; n < e.count; ++n) {
        row.assign(e.properties.size(), 0.0);
        for (std::size_t k = 0; k < e.properties.size(); ++k) {
          if (e.properties[k].is_list) {
            const double c = number();
            if (c < 0 || c != std::floor(c)) throw MalformedFile("bad list count" + where);
            for (long long j = 0; j < static_cast<long long>(c); ++j) number();
          } else {
            row[k] = number();
          }
        }
        if (is_vertex) store_vertex(row);
      }
      if (is_vertex) break;
    }
  } else {
    const char* data = text.data();
    const std::size_t size = text.size();
    auto need = [&](std::size_t bytes) {
      if (pos + bytes > size) throw MalformedFile("truncated binary PLY data" + where);
    };
    for (const auto& e : elements) {
      const bool is_vertex = &e == &vertex;
      for (std::size_t n = 0; n < e.count; ++n) {
        row.assign(e.properties.size(), 0.0);
        for (std::size_t k = 0; k < e.properties.size(); ++k) {
          const auto& p = e.properties[k];
          if (p.is_list) {
            need(ply_size(p.count_type));
            const double c = decode_binary(p.count_type, data + pos);
            pos += ply_size(p.count_type);
            if (c < 0) throw MalformedFile("negative list count" + where);
            const std::size_t bytes = static_cast<std::size_t>(c) * ply_size(p.type);
            need(bytes);
            pos += bytes;
          } else {
            need(ply_size(p.type));
            row[k] = decode_binary(p.type, data + pos);
            pos += ply_size(p.type);
          }
        }
        if (is_vertex) store_vertex(row);
      }
      if (is_vertex) break;
    }
  }
  if (ii >= 0) cloud.intensity = std::move(inten);
  return cloud;
}

PointCloud parse_xyz(const std::string& text, const fs::path& path) {
  PointCloud cloud;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string_view line(text.data() + pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    Tokenizer tok(line, 0);
    auto first = tok.next();
    if (!first) continue;
    std::array<double, 3> v{};
    std::optional<std::string_view> t = first;
    for (int k = 0; k < 3; ++k) {
      if (k > 0) t = tok.next();
      if (!t || !parse_double(*t, v[k])) {
        throw MalformedFile("bad XYZ line " + std::to_string(line_no) + " in " + path.string());
      }
    }
    Point3 p(v[0], v[1], v[2]);
    if (!p.allFinite()) throw MalformedFile("non-finite coordinate on line " + std::to_string(line_no));
    cloud.points.push_back(p);
  }
  if (cloud.points.empty()) throw EmptyCloud("no points in " + path.string());
  return cloud;
}

std::string format_number(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

void write_all(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw IoFailure("write failed for " + path.string());
}

template <typename T>
void append_le(std::string& buf, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big && sizeof(T) > 1) {
    std::reverse(b, b + sizeof(T));
  }
  buf.append(b, sizeof(T));
}

// ---------------------------------------------------------------------------
// Images

bool has_extension(const fs::path& path, std::string_view ext) {
  std::string e = path.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ext;
}

GrayImage parse_pgm(const std::string& text, const fs::path& path) {
  const std::string where = " in " + path.string();
  std::size_t pos = 2;
  auto header_int = [&]() {
    for (;;) {
      while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
      if (pos < text.size() && text[pos] == '#') {
        while (pos < text.size() && text[pos] != '\n') ++pos;
        continue;
      }
      break;
    }
    const std::size_t start = pos;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
    if (start == pos) throw MalformedFile("bad PGM header" + where);
    return std::stol(text.substr(start, pos - start));
  };
  const bool ascii = text[1] == '2';
  const long w = header_int();
  const long h = header_int();
  const long maxval = header_int();
  if (w < 1 || h < 1) throw MalformedFile("bad PGM dimensions" + where);
  if (maxval < 1) throw MalformedFile("bad PGM maxval" + where);
  if (maxval > 255) throw UnsupportedBitDepth("PGM maxval " + std::to_string(maxval) + " exceeds 8 bits" + where);
  const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  std::vector<std::uint8_t> px(n);
  auto rescale = [&](long v) -> std::uint8_t {
    if (v < 0 || v > maxval) throw MalformedFile("PGM sample out of range" + where);
    if (maxval == 255) return static_cast<std::uint8_t>(v);
    return static_cast<std::uint8_t>(std::lround(255.0 * static_cast<double>(v) / static_cast<double>(maxval)));
  };
  if (ascii) {
    Tokenizer tok(text, pos);
    for (std::size_t i = 0; i < n; ++i) {
      auto t = tok.next();
      if (!t) throw MalformedFile("truncated PGM data" + where);
      long v = 0;
      auto res = std::from_chars(t->data(), t->data() + t->size(), v);
      if (res.ec != std::errc() || res.ptr != t->data() + t->size()) {
        throw MalformedFile("non-numeric PGM sample" + where);
      }
      px[i] = rescale(v);
    }
  } else {
    // Exactly one whitespace byte separates maxval from the raster.
    ++pos;
    if (pos + n > text.size()) throw MalformedFile("truncated PGM data" + where);
    for (std::size_t i = 0; i < n; ++i) px[i] = rescale(static_cast<unsigned char>(text[pos + i]));
  }
  return GrayImage(static_cast<int>(w), static_cast<int>(h), std::move(px));
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

GrayImage read_png(const fs::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "rb"));
  if (!file) throw IoFailure("cannot open " + path.string());

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoFailure("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw IoFailure("libpng init failed");
  }

  // Everything libpng touches after setjmp lives outside its scope so a
  // longjmp never skips a destructor.
  std::vector<std::uint8_t> pixels;
  std::vector<png_bytep> rows;
  png_uint_32 width = 0, height = 0;
  int bit_depth = 0, color_type = 0, interlace = 0;
  enum class Fail { none, malformed, depth, color };
  volatile Fail fail = Fail::none;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw MalformedFile("corrupt PNG " + path.string());
  }
  png_init_io(png, file.get());
  png_read_info(png, info);
  png_get_IHDR(png, info, &width, &height, &bit_depth, &color_type, &interlace, nullptr, nullptr);
  if (bit_depth > 8) {
    fail = Fail::depth;
  } else if (color_type != PNG_COLOR_TYPE_GRAY) {
    fail = Fail::color;
  } else if (width == 0 || height == 0) {
    fail = Fail::malformed;
  }
  if (fail == Fail::none) {
    if (bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (interlace != PNG_INTERLACE_NONE) png_set_interlace_handling(png);
    png_read_update_info(png, info);
    pixels.resize(static_cast<std::size_t>(width) * height);
    rows.resize(height);
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = pixels.data() + static_cast<std::size_t>(y) * width;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
  }
  png_destroy_read_struct(&png, &info, nullptr);

  switch (fail) {
    case Fail::depth:
      throw UnsupportedBitDepth(std::to_string(bit_depth) + "-bit PNG " + path.string());
    case Fail::color:
      throw MalformedFile("PNG is not single-channel grayscale: " + path.string());
    case Fail::malformed:
      throw MalformedFile("PNG has zero size: " + path.string());
    case Fail::none:
      break;
  }
  return GrayImage(static_cast<int>(width), static_cast<int>(height), std::move(pixels));
}

void write_png(const GrayImage& image, const fs::path& path) {
  FilePtr file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw IoFailure("cannot open " + path.string() + " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw IoFailure("libpng init failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw IoFailure("libpng init failed");
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw IoFailure("PNG encode failed for " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width), static_cast<png_uint_32>(image.height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  for (int y = 0; y < image.height; ++y) {
    rows[static_cast<std::size_t>(y)] =
        const_cast<png_bytep>(image.data.data() + static_cast<std::size_t>(y) * image.width);
  }
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  if (std::fflush(file.get()) != 0) throw IoFailure("write failed for " + path.string());
}

}  // namespace

PointCloud load_pointcloud(const fs::path& path) {
  const std::string text = read_file(path);
  PointCloud cloud = text.rfind("ply", 0) == 0 && text.size() > 3 &&
                             (text[3] == '\n' || text[3] == '\r')
                         ? parse_ply(text, path)
                         : parse_xyz(text, path);
  cloud.validate();
  return cloud;
}

void save_pointcloud(const PointCloud& cloud, const fs::path& path) {
  CloudWriteOptions opts;
  if (has_extension(path, ".xyz") || has_extension(path, ".txt")) opts.format = CloudFormat::xyz;
  save_pointcloud(cloud, path, opts);
}

void save_pointcloud(const PointCloud& cloud, const fs::path& path, const CloudWriteOptions& options) {
  cloud.validate();
  const int digits = std::clamp(options.ascii_digits, 1, 17);
  std::string buf;
  if (options.format == CloudFormat::xyz) {
    for (const auto& p : cloud.points) {
      buf += format_number(p.x(), digits) + ' ' + format_number(p.y(), digits) + ' ' +
             format_number(p.z(), digits) + '\n';
    }
    write_all(path, buf);
    return;
  }
  const bool binary = options.format == CloudFormat::ply_binary;
  buf += "ply\n";
  buf += binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n";
  buf += "comment written by reconeval\n";
  buf += "element vertex " + std::to_string(cloud.size()) + "\n";
  buf += "property double x\nproperty double y\nproperty double z\n";
  if (cloud.intensity) buf += "property double intensity\n";
  buf += "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    if (binary) {
      append_le(buf, p.x());
      append_le(buf, p.y());
      append_le(buf, p.z());
      if (cloud.intensity) append_le(buf, (*cloud.intensity)[i]);
    } else {
      buf += format_number(p.x(), digits) + ' ' + format_number(p.y(), digits) + ' ' +
             format_number(p.z(), digits);
      if (cloud.intensity) buf += ' ' + format_number((*cloud.intensity)[i], digits);
      buf += '\n';
    }
  }
  write_all(path, buf);
}

GrayImage load_image(const fs::path& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoFailure("cannot open " + path.string());
  char magic[8] = {};
  probe.read(magic, sizeof magic);
  const auto got = probe.gcount();
  probe.close();
  static constexpr unsigned char kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (got == 8 && std::memcmp(magic, kPngSig, 8) == 0) return read_png(path);
  if (got >= 2 && magic[0] == 'P' && (magic[1] == '2' || magic[1] == '5')) {
    return parse_pgm(read_file(path), path);
  }
  throw MalformedFile("not a PGM (P2/P5) or PNG file: " + path.string());
}

void save_image(const GrayImage& image, const fs::path& path) {
  if (image.width < 1 || image.height < 1 ||
      image.data.size() != static_cast<std::size_t>(image.width) * image.height) {
    throw InvalidArgument("cannot save an image with inconsistent dimensions");
  }
  if (has_extension(path, ".png")) {
    write_png(image, path);
    return;
  }
  std::string buf = "P5\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  buf.append(reinterpret_cast<const char*>(image.data.data()), image.data.size());
  write_all(path, buf);
}

}  // namespace reconeval
