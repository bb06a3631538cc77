#include "facevox/io/formats.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <system_error>

namespace facevox::io {

namespace {

constexpr std::string_view kDepthMagic = "DPTH";
constexpr std::string_view kGridMagic = "VOXG";

void expect_magic(Reader& r, std::string_view magic, const char* what) {
  if (r.bytes(magic.size()) != magic) throw FormatError(std::string(what) + ": bad magic");
}

template <typename T>
T parse_number(std::string_view field, const char* what) {
  T v{};
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, v);
  if (ec != std::errc() || ptr != end) throw FormatError(std::string(what) + ": cannot parse '" + std::string(field) + "'");
  return v;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

}  // namespace

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// ---------------------------------------------------------------------------

std::string encode_depth(const geometry::DepthView& depth) {
  std::string out;
  out.reserve(12 + 4 * depth.values.size());
  put_bytes(out, kDepthMagic);
  put_u32(out, static_cast<std::uint32_t>(depth.width));
  put_u32(out, static_cast<std::uint32_t>(depth.height));
  for (double v : depth.values) put_f32(out, static_cast<float>(v));
  return out;
}

geometry::DepthView decode_depth(std::string_view bytes) {
  Reader r(bytes, "depth view");
  expect_magic(r, kDepthMagic, "depth view");
  const auto w = r.u32(), h = r.u32();
  if (static_cast<std::uint64_t>(w) * h * 4 != r.remaining()) throw FormatError("depth view: payload size mismatch");
  geometry::DepthView d(w, h);
  for (auto& v : d.values) v = r.f32();
  return d;
}

void write_depth(const std::filesystem::path& path, const geometry::DepthView& depth) {
  write_file_atomic(path, encode_depth(depth));
}

geometry::DepthView read_depth(const std::filesystem::path& path) { return decode_depth(read_file(path)); }

// ---------------------------------------------------------------------------

std::string encode_grid(const geometry::VoxelGrid& grid, GridKind kind) {
  std::string out;
  put_bytes(out, kGridMagic);
  put_u32(out, static_cast<std::uint32_t>(grid.n));
  put_u8(out, static_cast<std::uint8_t>(kind));
  if (kind == GridKind::kBinary) {
    if (!grid.is_binary()) throw std::invalid_argument("encode_grid: binary encoding of a non-binary grid");
    std::string bits((grid.values.size() + 7) / 8, '\0');
    for (std::size_t i = 0; i < grid.values.size(); ++i) {
      if (grid.values[i] == 1.0) bits[i / 8] = static_cast<char>(bits[i / 8] | (1 << (i % 8)));
    }
    out += bits;
  } else {
    for (double v : grid.values) put_f32(out, static_cast<float>(v));
  }
  return out;
}

geometry::VoxelGrid decode_grid(std::string_view bytes) {
  Reader r(bytes, "voxel grid");
  expect_magic(r, kGridMagic, "voxel grid");
  const std::size_t n = r.u32();
  const auto kind = r.u8();
  geometry::VoxelGrid g(n);
  const std::size_t count = g.values.size();
  if (kind == static_cast<std::uint8_t>(GridKind::kBinary)) {
    if (r.remaining() != (count + 7) / 8) throw FormatError("voxel grid: payload size mismatch");
    const auto bits = r.bytes((count + 7) / 8);
    for (std::size_t i = 0; i < count; ++i) {
      g.values[i] = (static_cast<std::uint8_t>(bits[i / 8]) >> (i % 8)) & 1u ? 1.0 : 0.0;
    }
  } else if (kind == static_cast<std::uint8_t>(GridKind::kFloat)) {
    if (r.remaining() != count * 4) throw FormatError("voxel grid: payload size mismatch");
    for (auto& v : g.values) v = r.f32();
  } else {
    throw FormatError("voxel grid: unknown kind " + std::to_string(kind));
  }
  return g;
}

void write_grid(const std::filesystem::path& path, const geometry::VoxelGrid& grid, GridKind kind) {
  write_file_atomic(path, encode_grid(grid, kind));
}

geometry::VoxelGrid read_grid(const std::filesystem::path& path) { return decode_grid(read_file(path)); }

// ---------------------------------------------------------------------------

std::string encode_mesh(const geometry::TriMesh& mesh, const std::vector<double>* vertex_scalars) {
  if (vertex_scalars && vertex_scalars->size() != mesh.vertices.size()) {
    throw std::invalid_argument("encode_mesh: one scalar per vertex required");
  }
  std::string out;
  for (const auto& v : mesh.vertices) {
    out += "v " + format_double(v[0]) + ' ' + format_double(v[1]) + ' ' + format_double(v[2]) + '\n';
  }
  for (const auto& t : mesh.triangles) {
    out += "f " + std::to_string(t[0] + 1) + ' ' + std::to_string(t[1] + 1) + ' ' + std::to_string(t[2] + 1) + '\n';
  }
  if (vertex_scalars) {
    for (double d : *vertex_scalars) out += "# d " + format_double(d) + '\n';
  }
  return out;
}

geometry::TriMesh decode_mesh(const std::string& text) {
  geometry::TriMesh mesh;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.size() < 2 || line[1] != ' ') continue;
    std::vector<std::string_view> fields;
    for (auto f : split(std::string_view(line).substr(2), ' '))
      if (!f.empty()) fields.push_back(f);
    if (line[0] == 'v') {
      if (fields.size() != 3) throw FormatError("mesh: vertex line needs 3 coordinates");
      mesh.vertices.push_back({parse_number<double>(fields[0], "mesh"), parse_number<double>(fields[1], "mesh"),
                               parse_number<double>(fields[2], "mesh")});
    } else if (line[0] == 'f') {
      if (fields.size() != 3) throw FormatError("mesh: only triangular faces are supported");
      std::array<std::uint32_t, 3> tri{};
      for (int k = 0; k < 3; ++k) {
        const auto idx = parse_number<std::uint32_t>(fields[static_cast<std::size_t>(k)].substr(0, fields[static_cast<std::size_t>(k)].find('/')), "mesh");
        if (idx == 0) throw FormatError("mesh: face indices are 1-based");
        tri[static_cast<std::size_t>(k)] = idx - 1;
      }
      mesh.triangles.push_back(tri);
    }
  }
  try {
    mesh.validate();
  } catch (const std::invalid_argument& e) {
    throw FormatError(std::string("mesh: ") + e.what());
  }
  return mesh;
}

void write_mesh(const std::filesystem::path& path, const geometry::TriMesh& mesh,
                const std::vector<double>* vertex_scalars) {
  write_file_atomic(path, encode_mesh(mesh, vertex_scalars));
}

geometry::TriMesh read_mesh(const std::filesystem::path& path) { return decode_mesh(read_file(path)); }

// ---------------------------------------------------------------------------

std::string encode_manifest(const std::vector<ManifestRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += r.depth_path + '\t' + r.grid_path + '\t' + std::to_string(r.seed) + '\t' + format_double(r.yaw) + '\t' +
           format_double(r.pitch) + '\t' + format_double(r.roll) + '\t' + format_double(r.expression) + '\n';
  }
  return out;
}

std::vector<ManifestRecord> decode_manifest(const std::string& text) {
  std::vector<ManifestRecord> out;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split(line, '\t');
    if (f.size() != 7) throw FormatError("manifest line " + std::to_string(lineno) + ": expected 7 fields");
    ManifestRecord r;
    r.depth_path = std::string(f[0]);
    r.grid_path = std::string(f[1]);
    r.seed = parse_number<std::uint64_t>(f[2], "manifest");
    r.yaw = parse_number<double>(f[3], "manifest");
    r.pitch = parse_number<double>(f[4], "manifest");
    r.roll = parse_number<double>(f[5], "manifest");
    r.expression = parse_number<double>(f[6], "manifest");
    out.push_back(std::move(r));
  }
  return out;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  write_file_atomic(path, encode_manifest(records));
}

std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  return decode_manifest(read_file(path));
}

}  // namespace facevox::io
