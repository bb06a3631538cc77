#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "facevox/geometry/types.hpp"
#include "facevox/io/binary.hpp"

namespace facevox::io {

// DPTH: "DPTH", u32 width, u32 height, width*height f32, row-major.
std::string encode_depth(const geometry::DepthView& depth);
geometry::DepthView decode_depth(std::string_view bytes);
void write_depth(const std::filesystem::path& path, const geometry::DepthView& depth);
geometry::DepthView read_depth(const std::filesystem::path& path);

enum class GridKind : std::uint8_t { kBinary = 0, kFloat = 1 };

// VOXG: "VOXG", u32 n, u8 kind, then either n^3 bits (x fastest, then y,
// then z; least significant bit first; last byte zero-padded) or n^3 f32.
std::string encode_grid(const geometry::VoxelGrid& grid, GridKind kind);
geometry::VoxelGrid decode_grid(std::string_view bytes);
void write_grid(const std::filesystem::path& path, const geometry::VoxelGrid& grid, GridKind kind);
geometry::VoxelGrid read_grid(const std::filesystem::path& path);

/// `v x y z` and `f i j k` lines (1-based). When `vertex_scalars` is given,
/// one `# d <value>` line per vertex follows, in vertex order.
std::string encode_mesh(const geometry::TriMesh& mesh, const std::vector<double>* vertex_scalars = nullptr);
geometry::TriMesh decode_mesh(const std::string& text);
void write_mesh(const std::filesystem::path& path, const geometry::TriMesh& mesh,
                const std::vector<double>* vertex_scalars = nullptr);
geometry::TriMesh read_mesh(const std::filesystem::path& path);

struct ManifestRecord {
  std::string depth_path;
  std::string grid_path;
  std::uint64_t seed = 0;
  double yaw = 0.0;
  double pitch = 0.0;
  double roll = 0.0;
  double expression = 0.0;
};

/// One tab-separated record per line:
/// depth_path, grid_path, seed, yaw, pitch, roll, expression.
std::string encode_manifest(const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> decode_manifest(const std::string& text);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);
std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double v);

}  // namespace facevox::io
