#include "dsvt/point_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dsvt/config_io.hpp"
#include "dsvt/errors.hpp"

namespace dsvt {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? "" : cell.substr(b, e - b + 1));
  }
  return cells;
}

}  // namespace

void validate_points(const PointCloud& pc) {
  for (std::size_t i = 0; i < pc.data.size(); ++i)
    if (!std::isfinite(pc.data[i]))
      throw InputError("point " + std::to_string(i / pc.stride()) + " has a non-finite value");
}

PointCloud read_points_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InputError(path.string() + ": missing CSV header");
  const auto header = split_csv(line);
  if (header.size() < 3 || header[0] != "x" || header[1] != "y" || header[2] != "z")
    throw InputError(path.string() + ": header must start with x,y,z");

  PointCloud pc;
  pc.extra_dims = header.size() - 3;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " columns");
    for (const auto& c : cells) {
      float v = 0.0f;
      const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
      if (ec != std::errc() || ptr != c.data() + c.size())
        throw InputError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + c +
                         "'");
      pc.data.push_back(v);
    }
  }
  validate_points(pc);
  return pc;
}

void write_points_csv(const PointCloud& pc, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << "x,y,z";
  for (std::size_t k = 0; k < pc.extra_dims; ++k) out << ",a" << k;
  out << '\n' << std::setprecision(9);
  for (std::size_t i = 0; i < pc.size(); ++i) {
    const auto p = pc.point(i);
    for (std::size_t k = 0; k < p.size(); ++k) out << (k ? "," : "") << p[k];
    out << '\n';
  }
}

PointCloud read_points_bin(const std::filesystem::path& path, std::size_t extra_dims) {
  PointCloud pc;
  pc.extra_dims = extra_dims;
  pc.data = read_f32_blob(path);
  if (pc.data.size() % pc.stride() != 0)
    throw InputError(path.string() + ": float count is not a multiple of " +
                     std::to_string(pc.stride()));
  validate_points(pc);
  return pc;
}

void write_points_bin(const PointCloud& pc, const std::filesystem::path& path) {
  write_f32_blob(pc.data, path);
}

PointCloud read_points(const std::filesystem::path& path, std::size_t extra_dims) {
  if (path.extension() == ".csv") return read_points_csv(path);
  return read_points_bin(path, extra_dims);
}

void write_points(const PointCloud& pc, const std::filesystem::path& path) {
  if (path.extension() == ".csv")
    write_points_csv(pc, path);
  else
    write_points_bin(pc, path);
}

}  // namespace dsvt
