#include "cmc/image_io.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <vector>

#include <png.h>
#include <zlib.h>

#include "cmc/error.hpp"

namespace cmc {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

json vec_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

template <int N>
Eigen::Matrix<double, N, 1> vec_from_json(const json& j) {
  if (!j.is_array() || j.size() != N) throw FormatError("expected a " + std::to_string(N) + "-vector");
  Eigen::Matrix<double, N, 1> v;
  for (int i = 0; i < N; ++i) v[i] = j.at(static_cast<std::size_t>(i)).get<double>();
  return v;
}

void write_raw(const fs::path& file, std::span<const float> data) {
  std::ofstream os(file, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + file.string());
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(data.data()),
             static_cast<std::streamsize>(data.size() * sizeof(float)));
  } else {
    for (float f : data) {
      auto u = std::bit_cast<std::uint32_t>(f);
      const char b[4] = {char(u & 0xff), char((u >> 8) & 0xff), char((u >> 16) & 0xff), char(u >> 24)};
      os.write(b, 4);
    }
  }
  if (!os) throw IoError("short write to " + file.string());
}

void read_raw(const fs::path& file, std::span<float> out) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw IoError("cannot read " + file.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() != out.size() * sizeof(float))
    throw FormatError(file.string() + ": size does not match header dims");
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t u = 0;
    for (int b = 0; b < 4; ++b) u |= std::uint32_t(static_cast<unsigned char>(bytes[4 * i + b])) << (8 * b);
    out[i] = std::bit_cast<float>(u);
  }
}

void write_header(const fs::path& dir, const json& header) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text_file(dir / "header.json", header.dump(2) + "\n");
}

}  // namespace

json pose_to_json(const PlanePose& pose) {
  return json{{"origin", vec_to_json(pose.origin)},
              {"row_dir", vec_to_json(pose.row_dir)},
              {"col_dir", vec_to_json(pose.col_dir)},
              {"inplane_offset", vec_to_json(pose.inplane_offset)}};
}

PlanePose pose_from_json(const json& j) {
  PlanePose p;
  p.origin = vec_from_json<3>(j.at("origin"));
  p.row_dir = vec_from_json<3>(j.at("row_dir"));
  p.col_dir = vec_from_json<3>(j.at("col_dir"));
  p.inplane_offset = vec_from_json<2>(j.at("inplane_offset"));
  return p;
}

json read_header(const fs::path& dir) {
  json h;
  try {
    h = json::parse(read_text_file(dir / "header.json"));
  } catch (const json::exception& e) {
    throw FormatError(dir.string() + "/header.json: " + e.what());
  }
  if (h.value("dtype", "") != "f32le") throw FormatError(dir.string() + ": unsupported dtype");
  if (h.value("version", 0) != kFormatVersion) throw FormatError(dir.string() + ": unsupported version");
  return h;
}

void write_stack(const fs::path& dir, const SliceStack& stack, const json& extra) {
  if (stack.empty()) throw InvalidInput("cannot write an empty stack");
  const PlanarImage& s0 = stack[0];
  json h{{"version", kFormatVersion},
         {"kind", "stack"},
         {"dtype", "f32le"},
         {"role", role_name(s0.role())},
         {"dims", {s0.width(), s0.height(), stack.size()}},
         {"spacing", vec_to_json(s0.spacing())},
         {"slice_gap", stack.slice_gap},
         {"meta", extra}};
  json poses = json::array();
  std::vector<float> data;
  data.reserve(s0.size() * stack.size());
  for (const PlanarImage& s : stack.slices) {
    if (s.width() != s0.width() || s.height() != s0.height())
      throw InvalidInput("stack slices differ in size");
    poses.push_back(pose_to_json(s.pose()));
    data.insert(data.end(), s.samples().begin(), s.samples().end());
  }
  h["slices"] = poses;
  write_header(dir, h);
  write_raw(dir / "data.raw", data);
}

SliceStack read_stack(const fs::path& dir) {
  const json h = read_header(dir);
  try {
    if (h.at("kind") != "stack") throw FormatError(dir.string() + ": not a stack");
    const int w = h.at("dims").at(0).get<int>();
    const int ht = h.at("dims").at(1).get<int>();
    const int n = h.at("dims").at(2).get<int>();
    const Role role = role_from_name(h.at("role").get<std::string>());
    const Vec2 spacing = vec_from_json<2>(h.at("spacing"));
    if (static_cast<int>(h.at("slices").size()) != n) throw FormatError(dir.string() + ": pose count mismatch");
    SliceStack stack;
    stack.slice_gap = h.at("slice_gap").get<double>();
    std::vector<float> data(static_cast<std::size_t>(w) * ht * n);
    read_raw(dir / "data.raw", data);
    for (int k = 0; k < n; ++k) {
      PlanarImage img(w, ht, spacing, pose_from_json(h.at("slices").at(static_cast<std::size_t>(k))), role);
      std::copy_n(data.begin() + static_cast<std::ptrdiff_t>(img.size() * k), img.size(), img.samples().begin());
      stack.slices.push_back(std::move(img));
    }
    return stack;
  } catch (const json::exception& e) {
    throw FormatError(dir.string() + "/header.json: " + e.what());
  }
}

void write_volume(const fs::path& dir, const Volume& vol, const json& extra) {
  json axes = json::array();
  for (int a = 0; a < 3; ++a) axes.push_back(vec_to_json(vol.axes().col(a)));
  json h{{"version", kFormatVersion}, {"kind", "volume"},
         {"dtype", "f32le"},          {"role", role_name(vol.role())},
         {"dims", vol.dims()},        {"spacing", vec_to_json(vol.spacing())},
         {"origin", vec_to_json(vol.origin())},
         {"axes", axes},              {"meta", extra}};
  write_header(dir, h);
  write_raw(dir / "data.raw", vol.samples());
}

Volume read_volume(const fs::path& dir) {
  const json h = read_header(dir);
  try {
    if (h.at("kind") != "volume") throw FormatError(dir.string() + ": not a volume");
    Mat3 axes;
    for (int a = 0; a < 3; ++a) axes.col(a) = vec_from_json<3>(h.at("axes").at(static_cast<std::size_t>(a)));
    Volume vol(h.at("dims").get<std::array<int, 3>>(), vec_from_json<3>(h.at("spacing")),
               vec_from_json<3>(h.at("origin")), axes, role_from_name(h.at("role").get<std::string>()));
    read_raw(dir / "data.raw", vol.samples());
    return vol;
  } catch (const json::exception& e) {
    throw FormatError(dir.string() + "/header.json: " + e.what());
  }
}

void write_image(const fs::path& dir, const PlanarImage& img, const json& extra) {
  SliceStack s;
  s.slices.push_back(img);
  write_stack(dir, s, extra);
}

PlanarImage read_image(const fs::path& dir) {
  SliceStack s = read_stack(dir);
  if (s.size() != 1) throw FormatError(dir.string() + ": expected a single-slice image");
  return std::move(s.slices.front());
}

void export_pgm(const fs::path& path, const PlanarImage& img) {
  const auto [mn, mx] = std::minmax_element(img.samples().begin(), img.samples().end());
  const double lo = *mn;
  const double range = std::max(1e-12, static_cast<double>(*mx) - lo);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << "P5\n" << img.width() << " " << img.height() << "\n255\n";
  for (float v : img.samples()) {
    const auto b = static_cast<unsigned char>(std::lround(255.0 * (v - lo) / range));
    os.put(static_cast<char>(b));
  }
}

void export_overlay_png(const fs::path& path, const PlanarImage& intensity, const PlanarImage& psm) {
  if (intensity.width() != psm.width() || intensity.height() != psm.height())
    throw InvalidInput("overlay needs matching grids");
  const int w = intensity.width();
  const int h = intensity.height();
  const auto [mn, mx] = std::minmax_element(intensity.samples().begin(), intensity.samples().end());
  const double range = std::max(1e-12, static_cast<double>(*mx) - *mn);
  std::vector<png_byte> rgb(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto g = static_cast<png_byte>(std::lround(255.0 * (intensity.at(x, y) - *mn) / range));
      png_byte* px = &rgb[(static_cast<std::size_t>(y) * w + x) * 3];
      px[0] = px[1] = px[2] = g;
      const bool in = psm.at(x, y) >= 0.5f;
      bool edge = false;
      for (auto [dx, dy] : {std::pair{1, 0}, {-1, 0}, {0, 1}, {0, -1}}) {
        const int nx = x + dx;
        const int ny = y + dy;
        if (psm.contains(nx, ny) && (psm.at(nx, ny) >= 0.5f) != in) edge = true;
      }
      if (in && edge) {
        px[0] = 255;
        px[1] = 0;
        px[2] = 0;
      }
    }
  }
  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw IoError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info || setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    throw IoError("libpng failed writing " + path.string());
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < h; ++y) png_write_row(png, &rgb[static_cast<std::size_t>(y) * w * 3]);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
}

std::uint32_t crc32_bytes(std::span<const std::uint8_t> bytes) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in chunks.
  std::size_t pos = 0;
  while (pos < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
    crc = ::crc32(crc, bytes.data() + pos, chunk);
    pos += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::uint32_t file_crc32(const fs::path& path) {
  const std::string s = read_text_file(path);
  return crc32_bytes({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

std::string read_text_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot write " + path.string());
  os << text;
  if (!os) throw IoError("short write to " + path.string());
}

}  // namespace cmc
