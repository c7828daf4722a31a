#pragma once

#include <filesystem>

#include "dsvt/voxel_grid.hpp"

namespace dsvt {

// CSV with header `x,y,z[,a0,a1,...]`.
PointCloud read_points_csv(const std::filesystem::path& path);
void write_points_csv(const PointCloud& pc, const std::filesystem::path& path);

// Little-endian float32, row-major (N, 3 + extra_dims).
PointCloud read_points_bin(const std::filesystem::path& path, std::size_t extra_dims);
void write_points_bin(const PointCloud& pc, const std::filesystem::path& path);

// Picks the format from the extension: .csv or anything else as binary.
PointCloud read_points(const std::filesystem::path& path, std::size_t extra_dims);
void write_points(const PointCloud& pc, const std::filesystem::path& path);

// Throws InputError on a non-finite coordinate or attribute.
void validate_points(const PointCloud& pc);

}  // namespace dsvt
