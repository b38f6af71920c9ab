// Copyright 2026 The topex Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <charconv>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "topex/common.hpp"

namespace topex {

enum class CellLabel : std::uint8_t { Free = 0, Obstacle = 1 };

/// Row-major 2D occupancy grid. Cell (x, y) covers
/// [x * cell_size, (x + 1) * cell_size) x [y * cell_size, (y + 1) * cell_size).
class OccupancyGrid {
 public:
  OccupancyGrid() = default;
  OccupancyGrid(int width, int height, double cell_size, CellLabel fill = CellLabel::Free)
      : width_(width), height_(height), cell_size_(cell_size),
        cells_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), fill) {
    if (width <= 0 || height <= 0) throw ShapeError("OccupancyGrid: non-positive dimensions");
    if (!(cell_size > 0.0)) throw ShapeError("OccupancyGrid: cell_size must be positive");
  }

  int width() const { return width_; }
  int height() const { return height_; }
  double cell_size() const { return cell_size_; }
  std::size_t size() const { return cells_.size(); }

  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_; }
  std::size_t index(Cell c) const {
    return static_cast<std::size_t>(c.y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(c.x);
  }
  Cell cell_at(std::size_t i) const {
    return {static_cast<int>(i % static_cast<std::size_t>(width_)),
            static_cast<int>(i / static_cast<std::size_t>(width_))};
  }

  CellLabel at(Cell c) const { return cells_[index(c)]; }
  void set(Cell c, CellLabel label) { cells_[index(c)] = label; }

  /// Out-of-bounds cells are neither free nor traversable.
  bool is_free(Cell c) const { return in_bounds(c) && at(c) == CellLabel::Free; }
  bool is_obstacle(Cell c) const { return !is_free(c); }

  Cell cell_of(Point p) const {
    return {static_cast<int>(std::floor(p.x / cell_size_)), static_cast<int>(std::floor(p.y / cell_size_))};
  }
  Point center_of(Cell c) const { return {(c.x + 0.5) * cell_size_, (c.y + 0.5) * cell_size_}; }

  std::size_t free_count() const {
    std::size_t n = 0;
    for (auto l : cells_) n += (l == CellLabel::Free);
    return n;
  }

  double diagonal_meters() const { return std::hypot(width_ * cell_size_, height_ * cell_size_); }

  friend bool operator==(const OccupancyGrid&, const OccupancyGrid&) = default;

  // Text format: header `width height cell_size`, then one row per line,
  // `#` obstacle and `.` free. Row 0 is y = 0.
  std::string to_text() const {
    std::string out = std::to_string(width_) + " " + std::to_string(height_) + " " + format_double(cell_size_) + "\n";
    out.reserve(out.size() + cells_.size() + static_cast<std::size_t>(height_));
    for (int y = 0; y < height_; ++y) {
      for (int x = 0; x < width_; ++x) out.push_back(at({x, y}) == CellLabel::Obstacle ? '#' : '.');
      out.push_back('\n');
    }
    return out;
  }

  static OccupancyGrid from_text(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string header;
    if (!std::getline(in, header)) throw FormatError("map: missing header");
    std::istringstream hs(header);
    int w = 0, h = 0;
    std::string cs_token;
    if (!(hs >> w >> h >> cs_token)) throw FormatError("map: malformed header '" + header + "'");
    double cs = 0.0;
    auto [ptr, ec] = std::from_chars(cs_token.data(), cs_token.data() + cs_token.size(), cs);
    if (ec != std::errc{} || ptr != cs_token.data() + cs_token.size()) throw FormatError("map: bad cell_size");
    OccupancyGrid g(w, h, cs);
    std::string row;
    for (int y = 0; y < h; ++y) {
      if (!std::getline(in, row)) throw FormatError("map: missing row " + std::to_string(y));
      if (!row.empty() && row.back() == '\r') row.pop_back();
      if (static_cast<int>(row.size()) != w) throw FormatError("map: row " + std::to_string(y) + " has wrong width");
      for (int x = 0; x < w; ++x) {
        if (row[x] == '#') g.set({x, y}, CellLabel::Obstacle);
        else if (row[x] == '.') g.set({x, y}, CellLabel::Free);
        else throw FormatError(std::string("map: unexpected character '") + row[x] + "'");
      }
    }
    return g;
  }

  static std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
  }

 private:
  int width_ = 0;
  int height_ = 0;
  double cell_size_ = 0.25;
  std::vector<CellLabel> cells_;
};

enum class Knowledge : std::uint8_t { Unknown = 0, Free = 1, Obstacle = 2 };

/// What one agent has observed of the scene.
class KnownMap {
 public:
  KnownMap() = default;
  KnownMap(int width, int height, double cell_size)
      : width_(width), height_(height), cell_size_(cell_size),
        cells_(static_cast<std::size_t>(width) * static_cast<std::size_t>(height), Knowledge::Unknown) {}
  explicit KnownMap(const OccupancyGrid& g) : KnownMap(g.width(), g.height(), g.cell_size()) {}

  int width() const { return width_; }
  int height() const { return height_; }
  double cell_size() const { return cell_size_; }
  std::size_t size() const { return cells_.size(); }
  bool in_bounds(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < width_ && c.y < height_; }
  std::size_t index(Cell c) const {
    return static_cast<std::size_t>(c.y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(c.x);
  }
  Cell cell_at(std::size_t i) const {
    return {static_cast<int>(i % static_cast<std::size_t>(width_)),
            static_cast<int>(i / static_cast<std::size_t>(width_))};
  }

  Knowledge at(Cell c) const { return in_bounds(c) ? cells_[index(c)] : Knowledge::Obstacle; }
  Knowledge at_index(std::size_t i) const { return cells_[i]; }
  void set(Cell c, Knowledge k) { cells_[index(c)] = k; }
  bool is_explored_free(Cell c) const { return at(c) == Knowledge::Free; }
  bool is_unknown(Cell c) const { return in_bounds(c) && at(c) == Knowledge::Unknown; }

  /// Union with another observation record (cell-wise: any knowledge wins).
  void merge_from(const KnownMap& other) {
    for (std::size_t i = 0; i < cells_.size(); ++i)
      if (cells_[i] == Knowledge::Unknown) cells_[i] = other.cells_[i];
  }

  /// Planning view: unknown cells are treated as traversable.
  OccupancyGrid optimistic_grid() const {
    OccupancyGrid g(width_, height_, cell_size_);
    for (std::size_t i = 0; i < cells_.size(); ++i)
      if (cells_[i] == Knowledge::Obstacle) g.set(g.cell_at(i), CellLabel::Obstacle);
    return g;
  }

  friend bool operator==(const KnownMap&, const KnownMap&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  double cell_size_ = 0.25;
  std::vector<Knowledge> cells_;
};

}  // namespace topex
