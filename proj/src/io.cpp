// Copyright Contributors to the warpinit project
// SPDX-License-Identifier: Apache-2.0

#include "warpinit/io.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "warpinit/errors.hpp"
#include "warpinit/log.hpp"

namespace warpinit {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Raw file access -----------------------------------------------------------

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw_io("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) throw_io("read failed for " + path.string());
  return buffer.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw_io("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out.good()) throw_io("write failed for " + path.string());
}

// Little-endian scalar packing; byte-explicit so host endianness never leaks
// into the formats.

void put_u32_le(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_u64_le(std::string& out, std::uint64_t v) {
  put_u32_le(out, static_cast<std::uint32_t>(v & 0xffffffffu));
  put_u32_le(out, static_cast<std::uint32_t>(v >> 32));
}

void put_f32_le(std::string& out, float v) { put_u32_le(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64_le(std::string& out, double v) { put_u64_le(out, std::bit_cast<std::uint64_t>(v)); }

struct Cursor {
  const std::string& bytes;
  const fs::path& path;
  std::size_t off = 0;

  std::size_t remaining() const { return bytes.size() - off; }
  const unsigned char* take(std::size_t n) {
    if (off + n > bytes.size()) throw_format("unexpected end of " + path.string());
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + off;
    off += n;
    return p;
  }
  std::uint32_t u32_le() {
    const unsigned char* p = take(4);
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  }
  std::uint64_t u64_le() {
    const std::uint64_t lo = u32_le();
    const std::uint64_t hi = u32_le();
    return lo | (hi << 32);
  }
  float f32_le() { return std::bit_cast<float>(u32_le()); }
  float f32_be() {
    const unsigned char* p = take(4);
    const std::uint32_t v = static_cast<std::uint32_t>(p[3]) | (static_cast<std::uint32_t>(p[2]) << 8) |
                            (static_cast<std::uint32_t>(p[1]) << 16) |
                            (static_cast<std::uint32_t>(p[0]) << 24);
    return std::bit_cast<float>(v);
  }
  double f64_le() { return std::bit_cast<double>(u64_le()); }
};

// Text parsing ----------------------------------------------------------------

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    std::string line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
    start = end + 1;
  }
  return lines;
}

std::vector<std::string> tokens_of(const std::string& line) {
  std::vector<std::string> tokens;
  std::istringstream stream(line);
  std::string token;
  while (stream >> token) tokens.push_back(token);
  return tokens;
}

bool is_blank_or_comment(const std::string& line) {
  for (char c : line) {
    if (std::isspace(static_cast<unsigned char>(c))) continue;
    return c == '#';
  }
  return true;
}

[[noreturn]] void fail_at(const fs::path& path, std::size_t line_no, const std::string& message) {
  throw_format(path.string() + ":" + std::to_string(line_no) + ": " + message);
}

double parse_double_tok(const std::string& token, const fs::path& path, std::size_t line_no) {
  double value = 0.0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc() || result.ptr != end)
    fail_at(path, line_no, "expected a number, got '" + token + "'");
  return value;
}

long parse_int_tok(const std::string& token, const fs::path& path, std::size_t line_no) {
  long value = 0;
  const char* begin = token.data();
  const char* end = begin + token.size();
  const auto result = std::from_chars(begin, end, value);
  if (result.ec != std::errc() || result.ptr != end)
    fail_at(path, line_no, "expected an integer, got '" + token + "'");
  return value;
}

std::string format_double(double v) {
  char buffer[64];
  std::snprintf(buffer, sizeof(buffer), "%.17g", v);
  return buffer;
}

// JSON helpers ----------------------------------------------------------------

json parse_json_file(const fs::path& path) {
  const std::string text = read_file(path);
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) throw_format("invalid JSON in " + path.string());
  return j;
}

ViewId parse_view_key(const std::string& key, const fs::path& path) {
  long value = 0;
  const auto result = std::from_chars(key.data(), key.data() + key.size(), value);
  if (result.ec != std::errc() || result.ptr != key.data() + key.size())
    throw_format(path.string() + ": view key '" + key + "' is not an integer");
  return static_cast<ViewId>(value);
}

}  // namespace

// Cameras ----------------------------------------------------------------

std::vector<Camera> read_colmap_cameras(const fs::path& cameras_text, const fs::path& images_text) {
  struct Intrinsics {
    Mat3 k;
    int width = 0;
    int height = 0;
  };
  std::map<long, Intrinsics> intrinsics;

  const auto camera_lines = split_lines(read_file(cameras_text));
  for (std::size_t li = 0; li < camera_lines.size(); ++li) {
    if (is_blank_or_comment(camera_lines[li])) continue;
    const auto toks = tokens_of(camera_lines[li]);
    const std::size_t line_no = li + 1;
    if (toks.size() < 4) fail_at(cameras_text, line_no, "camera line needs id, model, width, height");
    const long cam_id = parse_int_tok(toks[0], cameras_text, line_no);
    const std::string& model = toks[1];
    Intrinsics intr;
    intr.width = static_cast<int>(parse_int_tok(toks[2], cameras_text, line_no));
    intr.height = static_cast<int>(parse_int_tok(toks[3], cameras_text, line_no));
    double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
    if (model == "SIMPLE_PINHOLE") {
      if (toks.size() != 7) fail_at(cameras_text, line_no, "SIMPLE_PINHOLE needs 3 parameters");
      fx = fy = parse_double_tok(toks[4], cameras_text, line_no);
      cx = parse_double_tok(toks[5], cameras_text, line_no);
      cy = parse_double_tok(toks[6], cameras_text, line_no);
    } else if (model == "PINHOLE") {
      if (toks.size() != 8) fail_at(cameras_text, line_no, "PINHOLE needs 4 parameters");
      fx = parse_double_tok(toks[4], cameras_text, line_no);
      fy = parse_double_tok(toks[5], cameras_text, line_no);
      cx = parse_double_tok(toks[6], cameras_text, line_no);
      cy = parse_double_tok(toks[7], cameras_text, line_no);
    } else {
      fail_at(cameras_text, line_no, "unsupported camera model '" + model + "'");
    }
    // COLMAP centers pixels at half-integers; this library at integers.
    intr.k << fx, 0.0, cx - 0.5, 0.0, fy, cy - 0.5, 0.0, 0.0, 1.0;
    if (intrinsics.count(cam_id) != 0) fail_at(cameras_text, line_no, "duplicate camera id");
    intrinsics[cam_id] = intr;
  }

  std::vector<Camera> cameras;
  std::set<ViewId> seen;
  const auto image_lines = split_lines(read_file(images_text));
  for (std::size_t li = 0; li < image_lines.size(); ++li) {
    if (is_blank_or_comment(image_lines[li])) continue;
    const auto toks = tokens_of(image_lines[li]);
    const std::size_t line_no = li + 1;
    if (toks.size() < 10) fail_at(images_text, line_no, "image line needs 10 fields");
    const long image_id = parse_int_tok(toks[0], images_text, line_no);
    Eigen::Quaterniond q(parse_double_tok(toks[1], images_text, line_no),
                         parse_double_tok(toks[2], images_text, line_no),
                         parse_double_tok(toks[3], images_text, line_no),
                         parse_double_tok(toks[4], images_text, line_no));
    if (q.norm() <= 0.0) fail_at(images_text, line_no, "zero quaternion");
    q.normalize();
    Vec3 t(parse_double_tok(toks[5], images_text, line_no),
           parse_double_tok(toks[6], images_text, line_no),
           parse_double_tok(toks[7], images_text, line_no));
    const long cam_id = parse_int_tok(toks[8], images_text, line_no);
    const auto intr = intrinsics.find(cam_id);
    if (intr == intrinsics.end())
      fail_at(images_text, line_no, "unknown camera id " + std::to_string(cam_id));

    Camera camera;
    camera.id = static_cast<ViewId>(image_id);
    camera.K = intr->second.k;
    camera.R = q.toRotationMatrix();
    camera.t = t;
    camera.width = intr->second.width;
    camera.height = intr->second.height;
    camera.validate();
    if (!seen.insert(camera.id).second) fail_at(images_text, line_no, "duplicate image id");
    cameras.push_back(camera);

    // The next physical line lists this image's 2D points; it may be empty.
    if (li + 1 >= image_lines.size())
      fail_at(images_text, li + 2, "truncated file: missing points line");
    ++li;
  }

  std::sort(cameras.begin(), cameras.end(),
            [](const Camera& a, const Camera& b) { return a.id < b.id; });
  return cameras;
}

std::vector<Camera> read_cameras_json(const fs::path& path) {
  const json j = parse_json_file(path);
  if (!j.is_object() || !j.contains("cameras") || !j["cameras"].is_array())
    throw_format(path.string() + ": expected object with a 'cameras' array");
  std::vector<Camera> cameras;
  std::set<ViewId> seen;
  for (const auto& entry : j["cameras"]) {
    try {
      Camera camera;
      camera.id = entry.at("id").get<ViewId>();
      camera.width = entry.at("width").get<int>();
      camera.height = entry.at("height").get<int>();
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) {
          camera.K(r, c) = entry.at("K").at(r).at(c).get<double>();
          camera.R(r, c) = entry.at("R").at(r).at(c).get<double>();
        }
      for (int r = 0; r < 3; ++r) camera.t(r) = entry.at("t").at(r).get<double>();
      camera.validate();
      if (!seen.insert(camera.id).second)
        throw_format(path.string() + ": duplicate camera id " + std::to_string(camera.id));
      cameras.push_back(camera);
    } catch (const json::exception& e) {
      throw_format(path.string() + ": malformed camera entry: " + e.what());
    }
  }
  if (cameras.empty()) throw_format(path.string() + ": no cameras");
  std::sort(cameras.begin(), cameras.end(),
            [](const Camera& a, const Camera& b) { return a.id < b.id; });
  return cameras;
}

void write_cameras_json(const std::vector<Camera>& cameras, const fs::path& path) {
  json entries = json::array();
  for (const auto& camera : cameras) {
    json k = json::array();
    json r = json::array();
    json t = json::array();
    for (int row = 0; row < 3; ++row) {
      json krow = json::array();
      json rrow = json::array();
      for (int col = 0; col < 3; ++col) {
        krow.push_back(camera.K(row, col));
        rrow.push_back(camera.R(row, col));
      }
      k.push_back(krow);
      r.push_back(rrow);
      t.push_back(camera.t(row));
    }
    entries.push_back({{"id", camera.id},
                       {"width", camera.width},
                       {"height", camera.height},
                       {"K", k},
                       {"R", r},
                       {"t", t}});
  }
  write_file(path, json{{"cameras", entries}}.dump(2) + "\n");
}

// Depth maps --------------------------------------------------------------

DepthMap read_depth_pfm(const fs::path& path) {
  const std::string bytes = read_file(path);
  // Header: three whitespace-terminated fields (magic, "w h", scale).
  std::size_t off = 0;
  auto next_token = [&]() -> std::string {
    while (off < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[off]))) ++off;
    const std::size_t start = off;
    while (off < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[off]))) ++off;
    if (start == off) throw_format(path.string() + ": truncated PFM header");
    return bytes.substr(start, off - start);
  };
  const std::string magic = next_token();
  if (magic == "PF") throw_format(path.string() + ": color PFM is unsupported, expected 'Pf'");
  if (magic != "Pf") throw_format(path.string() + ": bad PFM magic '" + magic + "'");
  const long width = parse_int_tok(next_token(), path, 1);
  const long height = parse_int_tok(next_token(), path, 1);
  const double scale = parse_double_tok(next_token(), path, 1);
  if (width < 1 || height < 1) throw_format(path.string() + ": bad PFM dimensions");
  if (scale == 0.0 || !std::isfinite(scale)) throw_format(path.string() + ": bad PFM scale");
  if (off >= bytes.size()) throw_format(path.string() + ": truncated PFM header");
  ++off;  // single whitespace byte after the scale

  const std::size_t expected = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 4;
  if (bytes.size() - off != expected) throw_format(path.string() + ": PFM payload size mismatch");

  DepthMap depth;
  depth.width = static_cast<int>(width);
  depth.height = static_cast<int>(height);
  depth.values.assign(static_cast<std::size_t>(width * height), 0.0);
  Cursor cursor{bytes, path, off};
  const bool little = scale < 0.0;
  for (long row = 0; row < height; ++row) {
    const long j = height - 1 - row;  // PFM stores bottom row first
    for (long i = 0; i < width; ++i) {
      const float v = little ? cursor.f32_le() : cursor.f32_be();
      depth.values[static_cast<std::size_t>(j * width + i)] = static_cast<double>(v);
    }
  }
  return depth;
}

void write_depth_pfm(const DepthMap& depth, const fs::path& path) {
  if (depth.width < 1 || depth.height < 1) throw_invalid("empty depth map");
  std::string out = "Pf\n" + std::to_string(depth.width) + " " + std::to_string(depth.height) +
                    "\n-1\n";
  out.reserve(out.size() + depth.values.size() * 4);
  for (int row = depth.height - 1; row >= 0; --row)
    for (int i = 0; i < depth.width; ++i)
      put_f32_le(out, static_cast<float>(depth.at(i, row)));
  write_file(path, out);
}

DepthMap read_depth_raw(const fs::path& path) {
  const std::string bytes = read_file(path);
  Cursor cursor{bytes, path};
  const unsigned char* magic = cursor.take(4);
  if (std::memcmp(magic, "DMAP", 4) != 0) throw_format(path.string() + ": bad depth magic");
  const std::uint32_t width = cursor.u32_le();
  const std::uint32_t height = cursor.u32_le();
  if (width < 1 || height < 1 || width > (1u << 20) || height > (1u << 20))
    throw_format(path.string() + ": bad depth dimensions");
  const std::size_t count = static_cast<std::size_t>(width) * height;
  if (cursor.remaining() != count * 4) throw_format(path.string() + ": depth payload size mismatch");

  DepthMap depth;
  depth.width = static_cast<int>(width);
  depth.height = static_cast<int>(height);
  depth.values.resize(count);
  for (std::size_t idx = 0; idx < count; ++idx)
    depth.values[idx] = static_cast<double>(cursor.f32_le());
  return depth;
}

void write_depth_raw(const DepthMap& depth, const fs::path& path) {
  if (depth.width < 1 || depth.height < 1) throw_invalid("empty depth map");
  std::string out = "DMAP";
  put_u32_le(out, static_cast<std::uint32_t>(depth.width));
  put_u32_le(out, static_cast<std::uint32_t>(depth.height));
  for (double v : depth.values) put_f32_le(out, static_cast<float>(v));
  write_file(path, out);
}

DepthMap read_depth_any(const fs::path& path) {
  const std::string head = read_file(path).substr(0, 4);
  if (head.size() >= 4 && head.compare(0, 4, "DMAP") == 0) return read_depth_raw(path);
  if (head.size() >= 2 && head[0] == 'P' && (head[1] == 'f' || head[1] == 'F'))
    return read_depth_pfm(path);
  throw_format(path.string() + ": unrecognized depth format");
}

// Matches -----------------------------------------------------------------

MatchReadResult read_matches(const fs::path& path, const CameraLookup& cameras) {
  MatchReadResult result;
  const auto lines = split_lines(read_file(path));
  for (std::size_t li = 0; li < lines.size(); ++li) {
    if (is_blank_or_comment(lines[li])) continue;
    const auto toks = tokens_of(lines[li]);
    const std::size_t line_no = li + 1;
    if (toks.size() != 6 && toks.size() != 7)
      fail_at(path, line_no, "expected 'view_a view_b xa ya xb yb [conf]'");

    PairwiseMatch match;
    match.view_a = static_cast<ViewId>(parse_int_tok(toks[0], path, line_no));
    match.view_b = static_cast<ViewId>(parse_int_tok(toks[1], path, line_no));
    match.pixel_a = Vec2(parse_double_tok(toks[2], path, line_no),
                         parse_double_tok(toks[3], path, line_no));
    match.pixel_b = Vec2(parse_double_tok(toks[4], path, line_no),
                         parse_double_tok(toks[5], path, line_no));
    match.confidence = toks.size() == 7 ? parse_double_tok(toks[6], path, line_no) : 1.0;

    const auto cam_a = cameras.find(match.view_a);
    const auto cam_b = cameras.find(match.view_b);
    if (cam_a == cameras.end())
      fail_at(path, line_no, "unknown view id " + std::to_string(match.view_a));
    if (cam_b == cameras.end())
      fail_at(path, line_no, "unknown view id " + std::to_string(match.view_b));
    if (match.view_a == match.view_b) fail_at(path, line_no, "match within a single view");
    if (!std::isfinite(match.confidence) || match.confidence < 0.0)
      fail_at(path, line_no, "bad confidence");

    auto in_bounds = [](const Vec2& p, const Camera& cam) {
      return p.allFinite() && p.x() >= 0.0 && p.y() >= 0.0 && p.x() <= cam.width - 1 &&
             p.y() <= cam.height - 1;
    };
    if (!in_bounds(match.pixel_a, cam_a->second) || !in_bounds(match.pixel_b, cam_b->second)) {
      ++result.rejected_out_of_bounds;
      continue;
    }
    result.matches.push_back(match);
  }
  if (result.rejected_out_of_bounds > 0)
    log::warn("matches: rejected " + std::to_string(result.rejected_out_of_bounds) +
              " out-of-bounds entries in " + path.string());
  return result;
}

void write_matches(const std::vector<PairwiseMatch>& matches, const fs::path& path) {
  std::string out = "# view_a view_b xa ya xb yb confidence\n";
  for (const auto& m : matches) {
    out += std::to_string(m.view_a) + " " + std::to_string(m.view_b) + " " +
           format_double(m.pixel_a.x()) + " " + format_double(m.pixel_a.y()) + " " +
           format_double(m.pixel_b.x()) + " " + format_double(m.pixel_b.y()) + " " +
           format_double(m.confidence) + "\n";
  }
  write_file(path, out);
}

// Images ------------------------------------------------------------------

Image read_image_ppm(const fs::path& path) {
  const std::string bytes = read_file(path);
  std::size_t off = 0;
  auto next_token = [&]() -> std::string {
    while (off < bytes.size()) {
      if (std::isspace(static_cast<unsigned char>(bytes[off]))) {
        ++off;
      } else if (bytes[off] == '#') {
        while (off < bytes.size() && bytes[off] != '\n') ++off;
      } else {
        break;
      }
    }
    const std::size_t start = off;
    while (off < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[off]))) ++off;
    if (start == off) throw_format(path.string() + ": truncated PPM header");
    return bytes.substr(start, off - start);
  };
  if (next_token() != "P6") throw_format(path.string() + ": expected binary PPM (P6)");
  const long width = parse_int_tok(next_token(), path, 1);
  const long height = parse_int_tok(next_token(), path, 1);
  const long maxval = parse_int_tok(next_token(), path, 1);
  if (width < 1 || height < 1) throw_format(path.string() + ": bad PPM dimensions");
  if (maxval != 255) throw_format(path.string() + ": only maxval 255 is supported");
  if (off >= bytes.size()) throw_format(path.string() + ": truncated PPM header");
  ++off;  // single whitespace byte before payload

  const std::size_t expected = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3;
  if (bytes.size() - off != expected) throw_format(path.string() + ": PPM payload size mismatch");

  Image image;
  image.width = static_cast<int>(width);
  image.height = static_cast<int>(height);
  image.pixels.resize(static_cast<std::size_t>(width * height));
  for (auto& px : image.pixels) {
    px[0] = static_cast<std::uint8_t>(bytes[off]);
    px[1] = static_cast<std::uint8_t>(bytes[off + 1]);
    px[2] = static_cast<std::uint8_t>(bytes[off + 2]);
    off += 3;
  }
  return image;
}

void write_image_ppm(const Image& image, const fs::path& path) {
  if (image.width < 1 || image.height < 1) throw_invalid("empty image");
  std::string out = "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) +
                    "\n255\n";
  out.reserve(out.size() + image.pixels.size() * 3);
  for (const auto& px : image.pixels) {
    out.push_back(static_cast<char>(px[0]));
    out.push_back(static_cast<char>(px[1]));
    out.push_back(static_cast<char>(px[2]));
  }
  write_file(path, out);
}

// Point clouds ------------------------------------------------------------

std::string ply_header(std::size_t vertex_count) {
  return "ply\nformat binary_little_endian 1.0\ncomment warpinit point cloud\nelement vertex " +
         std::to_string(vertex_count) +
         "\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty "
         "uchar green\nproperty uchar blue\nend_header\n";
}

void write_ply(const PointCloud& cloud, const fs::path& path) {
  cloud.validate();
  std::string out = ply_header(cloud.size());
  out.reserve(out.size() + cloud.size() * 15);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    put_f32_le(out, static_cast<float>(cloud.positions[i].x()));
    put_f32_le(out, static_cast<float>(cloud.positions[i].y()));
    put_f32_le(out, static_cast<float>(cloud.positions[i].z()));
    out.push_back(static_cast<char>(cloud.colors[i][0]));
    out.push_back(static_cast<char>(cloud.colors[i][1]));
    out.push_back(static_cast<char>(cloud.colors[i][2]));
  }
  write_file(path, out);
}

PointCloud read_ply(const fs::path& path) {
  const std::string bytes = read_file(path);
  std::size_t off = 0;
  auto next_line = [&]() -> std::string {
    if (off >= bytes.size()) throw_format(path.string() + ": truncated PLY header");
    std::size_t end = bytes.find('\n', off);
    if (end == std::string::npos) throw_format(path.string() + ": truncated PLY header");
    std::string line = bytes.substr(off, end - off);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    off = end + 1;
    return line;
  };

  if (next_line() != "ply") throw_format(path.string() + ": missing 'ply' magic");
  bool format_seen = false;

  struct Property {
    std::string name;
    std::size_t size = 0;
    bool is_float = false;
    bool is_double = false;
    bool is_uchar = false;
  };
  std::vector<Property> vertex_props;
  std::size_t vertex_count = 0;
  bool in_vertex_element = false;
  bool vertex_seen = false;

  auto scalar_size = [&](const std::string& type) -> std::size_t {
    if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
    if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
    if (type == "int" || type == "uint" || type == "int32" || type == "uint32" || type == "float" ||
        type == "float32")
      return 4;
    if (type == "double" || type == "float64") return 8;
    return 0;
  };

  for (;;) {
    const std::string line = next_line();
    if (line == "end_header") break;
    const auto toks = tokens_of(line);
    if (toks.empty() || toks[0] == "comment" || toks[0] == "obj_info") continue;
    if (toks[0] == "format") {
      if (toks.size() != 3 || toks[1] != "binary_little_endian" || toks[2] != "1.0")
        throw_format(path.string() + ": only 'format binary_little_endian 1.0' is supported");
      format_seen = true;
    } else if (toks[0] == "element") {
      if (toks.size() != 3) throw_format(path.string() + ": malformed element line");
      const long count = parse_int_tok(toks[2], path, 1);
      if (toks[1] == "vertex") {
        if (vertex_seen) throw_format(path.string() + ": duplicate vertex element");
        vertex_seen = true;
        in_vertex_element = true;
        vertex_count = static_cast<std::size_t>(count);
      } else {
        if (count != 0)
          throw_format(path.string() + ": unsupported element '" + toks[1] + "' with data");
        in_vertex_element = false;
      }
    } else if (toks[0] == "property") {
      if (!in_vertex_element) continue;  // properties of an empty element
      if (toks.size() == 3) {
        Property prop;
        prop.name = toks[2];
        prop.size = scalar_size(toks[1]);
        if (prop.size == 0)
          throw_format(path.string() + ": unsupported property type '" + toks[1] + "'");
        prop.is_float = toks[1] == "float" || toks[1] == "float32";
        prop.is_double = toks[1] == "double" || toks[1] == "float64";
        prop.is_uchar = toks[1] == "uchar" || toks[1] == "uint8";
        vertex_props.push_back(prop);
      } else {
        throw_format(path.string() + ": list properties are unsupported");
      }
    } else {
      throw_format(path.string() + ": unexpected header line '" + line + "'");
    }
  }
  if (!format_seen) throw_format(path.string() + ": missing format line");
  if (!vertex_seen) throw_format(path.string() + ": missing vertex element");

  std::size_t stride = 0;
  long x_off = -1, y_off = -1, z_off = -1, r_off = -1, g_off = -1, b_off = -1;
  bool x_double = false, y_double = false, z_double = false;
  for (const auto& prop : vertex_props) {
    auto bind = [&](long& slot, bool& dbl) {
      if (!prop.is_float && !prop.is_double)
        throw_format(path.string() + ": coordinate property must be float or double");
      slot = static_cast<long>(stride);
      dbl = prop.is_double;
    };
    auto bind_color = [&](long& slot) {
      if (!prop.is_uchar) throw_format(path.string() + ": color property must be uchar");
      slot = static_cast<long>(stride);
    };
    if (prop.name == "x") bind(x_off, x_double);
    else if (prop.name == "y") bind(y_off, y_double);
    else if (prop.name == "z") bind(z_off, z_double);
    else if (prop.name == "red") bind_color(r_off);
    else if (prop.name == "green") bind_color(g_off);
    else if (prop.name == "blue") bind_color(b_off);
    stride += prop.size;
  }
  if (x_off < 0 || y_off < 0 || z_off < 0)
    throw_format(path.string() + ": vertex element lacks x, y, z");
  const bool has_colors = r_off >= 0 && g_off >= 0 && b_off >= 0;
  if ((r_off >= 0 || g_off >= 0 || b_off >= 0) && !has_colors)
    throw_format(path.string() + ": partial color properties");

  if (bytes.size() - off != vertex_count * stride)
    throw_format(path.string() + ": PLY payload size mismatch");

  auto read_coord = [&](std::size_t base, long prop_off, bool dbl) -> double {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + base +
                    static_cast<std::size_t>(prop_off);
    if (dbl) {
      std::uint64_t v = 0;
      for (int k = 7; k >= 0; --k) v = (v << 8) | p[k];
      return std::bit_cast<double>(v);
    }
    std::uint32_t v = 0;
    for (int k = 3; k >= 0; --k) v = (v << 8) | p[k];
    return static_cast<double>(std::bit_cast<float>(v));
  };

  PointCloud cloud;
  for (std::size_t i = 0; i < vertex_count; ++i) {
    const std::size_t base = off + i * stride;
    const Vec3 position(read_coord(base, x_off, x_double), read_coord(base, y_off, y_double),
                        read_coord(base, z_off, z_double));
    Rgb color = kWhite;
    if (has_colors) {
      const auto* p = reinterpret_cast<const unsigned char*>(bytes.data()) + base;
      color = {p[r_off], p[g_off], p[b_off]};
    }
    cloud.push_back(position, color, PointSource::sfm);
  }
  return cloud;
}

// Stage artifacts ----------------------------------------------------------

void write_tracks_json(const std::vector<Track>& tracks, const fs::path& path) {
  json entries = json::array();
  for (const auto& track : tracks) {
    json observations = json::array();
    for (const auto& [view, pixel] : track.observations)
      observations.push_back({view, pixel.x(), pixel.y()});
    entries.push_back({{"anchor_view", track.anchor_view}, {"observations", observations}});
  }
  write_file(path, json{{"tracks", entries}}.dump() + "\n");
}

std::vector<Track> read_tracks_json(const fs::path& path) {
  const json j = parse_json_file(path);
  if (!j.is_object() || !j.contains("tracks") || !j["tracks"].is_array())
    throw_format(path.string() + ": expected object with a 'tracks' array");
  std::vector<Track> tracks;
  for (const auto& entry : j["tracks"]) {
    try {
      Track track;
      track.anchor_view = entry.at("anchor_view").get<ViewId>();
      for (const auto& obs : entry.at("observations")) {
        const auto view = obs.at(0).get<ViewId>();
        const Vec2 pixel(obs.at(1).get<double>(), obs.at(2).get<double>());
        if (!track.observations.emplace(view, pixel).second)
          throw_format(path.string() + ": duplicate observation view");
      }
      const auto anchor = track.observations.find(track.anchor_view);
      if (anchor == track.observations.end())
        throw_format(path.string() + ": anchor view missing from observations");
      track.anchor_pixel = anchor->second;
      if (track.size() < 2) throw_format(path.string() + ": track with fewer than 2 views");
      tracks.push_back(std::move(track));
    } catch (const json::exception& e) {
      throw_format(path.string() + ": malformed track entry: " + e.what());
    }
  }
  return tracks;
}

void write_controls_json(const TriangulationResult& result, const fs::path& path) {
  json controls = json::array();
  for (const auto& control : result.controls) {
    controls.push_back({{"position", {control.position.x(), control.position.y(),
                                      control.position.z()}},
                        {"track_index", control.track_index},
                        {"mean_reproj_error", control.mean_reproj_error},
                        {"view_count", control.view_count}});
  }
  const json stats{{"accepted", result.stats.accepted},
                   {"rejected_degenerate", result.stats.rejected_degenerate},
                   {"rejected_cheirality", result.stats.rejected_cheirality},
                   {"rejected_reprojection", result.stats.rejected_reprojection}};
  write_file(path, json{{"stats", stats}, {"controls", controls}}.dump() + "\n");
}

TriangulationResult read_controls_json(const fs::path& path) {
  const json j = parse_json_file(path);
  TriangulationResult result;
  try {
    const json& stats = j.at("stats");
    result.stats.accepted = stats.at("accepted").get<std::size_t>();
    result.stats.rejected_degenerate = stats.at("rejected_degenerate").get<std::size_t>();
    result.stats.rejected_cheirality = stats.at("rejected_cheirality").get<std::size_t>();
    result.stats.rejected_reprojection = stats.at("rejected_reprojection").get<std::size_t>();
    for (const auto& entry : j.at("controls")) {
      ControlPoint control;
      control.position = Vec3(entry.at("position").at(0).get<double>(),
                              entry.at("position").at(1).get<double>(),
                              entry.at("position").at(2).get<double>());
      control.track_index = entry.at("track_index").get<std::size_t>();
      control.mean_reproj_error = entry.at("mean_reproj_error").get<double>();
      control.view_count = entry.at("view_count").get<int>();
      result.controls.push_back(control);
    }
  } catch (const json::exception& e) {
    throw_format(path.string() + ": malformed controls file: " + e.what());
  }
  return result;
}

void write_tps3(const TpsModel& model, const fs::path& path) {
  std::string out = "TPS3";
  put_u32_le(out, 1u);
  put_u32_le(out, static_cast<std::uint32_t>(model.centers.size()));
  put_f64_le(out, model.lambda);
  for (int i = 0; i < 3; ++i) put_f64_le(out, model.t(i));
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) put_f64_le(out, model.A(r, c));
  for (const auto& center : model.centers)
    for (int i = 0; i < 3; ++i) put_f64_le(out, center(i));
  for (Eigen::Index r = 0; r < model.W.rows(); ++r)
    for (Eigen::Index c = 0; c < 3; ++c) put_f64_le(out, model.W(r, c));
  write_file(path, out);
}

TpsModel read_tps3(const fs::path& path) {
  const std::string bytes = read_file(path);
  Cursor cursor{bytes, path};
  const unsigned char* magic = cursor.take(4);
  if (std::memcmp(magic, "TPS3", 4) != 0) throw_format(path.string() + ": bad TPS3 magic");
  const std::uint32_t version = cursor.u32_le();
  if (version != 1) throw_format(path.string() + ": unsupported TPS3 version");
  const std::uint32_t m = cursor.u32_le();
  if (m > (1u << 24)) throw_format(path.string() + ": implausible center count");

  TpsModel model;
  model.lambda = cursor.f64_le();
  for (int i = 0; i < 3; ++i) model.t(i) = cursor.f64_le();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) model.A(r, c) = cursor.f64_le();
  model.centers.resize(m);
  for (auto& center : model.centers)
    for (int i = 0; i < 3; ++i) center(i) = cursor.f64_le();
  model.W.resize(m, 3);
  for (Eigen::Index r = 0; r < model.W.rows(); ++r)
    for (Eigen::Index c = 0; c < 3; ++c) model.W(r, c) = cursor.f64_le();
  if (cursor.remaining() != 0) throw_format(path.string() + ": trailing bytes");
  return model;
}

// Job manifest --------------------------------------------------------------

std::vector<Camera> JobManifest::load_cameras() const {
  if (!cameras_json.empty()) return read_cameras_json(cameras_json);
  return read_colmap_cameras(colmap_cameras, colmap_images);
}

JobManifest load_manifest(const fs::path& path) {
  const json j = parse_json_file(path);
  if (!j.is_object()) throw_format(path.string() + ": manifest must be a JSON object");
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  auto resolve = [&base](const std::string& p) -> fs::path {
    const fs::path candidate(p);
    return candidate.is_absolute() ? candidate : base / candidate;
  };

  static const std::set<std::string> known_keys{
      "cameras_json", "colmap_cameras", "colmap_images", "depths",      "images",
      "matches",      "sfm_cloud",      "output",        "work_dir",    "radius_fraction",
      "margin",       "cluster_radius", "max_points",    "max_reproj_px", "k",
      "lambda",       "seed"};
  for (const auto& [key, value] : j.items())
    if (known_keys.count(key) == 0) log::warn("manifest: ignoring unknown key '" + key + "'");

  JobManifest manifest;
  try {
    if (j.contains("cameras_json")) manifest.cameras_json = resolve(j["cameras_json"].get<std::string>());
    if (j.contains("colmap_cameras")) manifest.colmap_cameras = resolve(j["colmap_cameras"].get<std::string>());
    if (j.contains("colmap_images")) manifest.colmap_images = resolve(j["colmap_images"].get<std::string>());
    const bool has_json = !manifest.cameras_json.empty();
    const bool has_colmap = !manifest.colmap_cameras.empty() || !manifest.colmap_images.empty();
    if (has_json == has_colmap)
      throw_format(path.string() + ": need either cameras_json or the colmap_cameras/colmap_images pair");
    if (has_colmap && (manifest.colmap_cameras.empty() || manifest.colmap_images.empty()))
      throw_format(path.string() + ": colmap_cameras and colmap_images must both be set");

    if (!j.contains("depths") || !j["depths"].is_object() || j["depths"].empty())
      throw_format(path.string() + ": 'depths' must map view ids to files");
    for (const auto& [key, value] : j["depths"].items())
      manifest.depths[parse_view_key(key, path)] = resolve(value.get<std::string>());
    if (j.contains("images"))
      for (const auto& [key, value] : j["images"].items())
        manifest.images[parse_view_key(key, path)] = resolve(value.get<std::string>());

    if (!j.contains("matches")) throw_format(path.string() + ": 'matches' is required");
    manifest.matches = resolve(j["matches"].get<std::string>());
    if (j.contains("sfm_cloud")) manifest.sfm_cloud = resolve(j["sfm_cloud"].get<std::string>());
    if (!j.contains("output")) throw_format(path.string() + ": 'output' is required");
    manifest.output = resolve(j["output"].get<std::string>());
    manifest.work_dir = j.contains("work_dir") ? resolve(j["work_dir"].get<std::string>())
                                               : base / "work";

    if (j.contains("radius_fraction")) manifest.sampling.radius_fraction = j["radius_fraction"].get<double>();
    if (j.contains("margin")) manifest.sampling.margin = j["margin"].get<double>();
    if (j.contains("cluster_radius")) manifest.sampling.cluster_radius = j["cluster_radius"].get<double>();
    if (j.contains("max_points")) manifest.sampling.max_points = j["max_points"].get<std::size_t>();
    if (j.contains("max_reproj_px")) manifest.max_reproj_px = j["max_reproj_px"].get<double>();
    if (j.contains("k")) manifest.k = j["k"].get<int>();
    if (j.contains("lambda")) manifest.lambda = j["lambda"].get<double>();
    if (j.contains("seed")) manifest.seed = j["seed"].get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw_format(path.string() + ": malformed manifest: " + e.what());
  }

  manifest.sampling.validate();
  if (!(manifest.max_reproj_px > 0.0)) throw_format(path.string() + ": max_reproj_px must be positive");
  if (manifest.k && *manifest.k < 1) throw_format(path.string() + ": k must be at least 1");
  if (!(manifest.lambda >= 0.0)) throw_format(path.string() + ": lambda must be non-negative");

  // Every referenced input must exist, and depth views must exactly match
  // camera views.
  auto require_file = [&](const fs::path& p, const char* what) {
    if (!fs::exists(p)) throw_invalid(std::string(what) + " file missing: " + p.string());
  };
  if (!manifest.cameras_json.empty()) require_file(manifest.cameras_json, "cameras");
  if (!manifest.colmap_cameras.empty()) require_file(manifest.colmap_cameras, "colmap cameras");
  if (!manifest.colmap_images.empty()) require_file(manifest.colmap_images, "colmap images");
  require_file(manifest.matches, "matches");
  if (!manifest.sfm_cloud.empty()) require_file(manifest.sfm_cloud, "sfm cloud");
  for (const auto& [view, depth_path] : manifest.depths) require_file(depth_path, "depth");
  for (const auto& [view, image_path] : manifest.images) require_file(image_path, "image");

  const auto cameras = manifest.load_cameras();
  std::set<ViewId> camera_views;
  for (const auto& camera : cameras) camera_views.insert(camera.id);
  std::set<ViewId> depth_views;
  for (const auto& [view, depth_path] : manifest.depths) depth_views.insert(view);
  if (camera_views != depth_views)
    throw_invalid(path.string() + ": depth view ids must exactly match camera view ids");
  for (const auto& [view, image_path] : manifest.images)
    if (camera_views.count(view) == 0)
      throw_invalid(path.string() + ": image view " + std::to_string(view) + " has no camera");

  return manifest;
}

}  // namespace warpinit
