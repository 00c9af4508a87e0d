#pragma once

#include "belief/common.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace belief {

enum class CellState : std::uint8_t { Free = 0, Occupied = 1, Unknown = 2 };

struct Cell {
    int x = 0;
    int y = 0;
    bool operator==(const Cell &) const = default;
    auto operator<=>(const Cell &) const = default;
};

/// Top-down navigation grid; cell (x, y) spans origin + cell * [x, x+1) x [y, y+1).
struct GridSpec2D {
    Vec2 origin = Vec2::Zero();
    double cell = 0.25;
    int nx = 0;
    int ny = 0;

    std::size_t cells() const { return static_cast<std::size_t>(nx) * ny; }
    std::size_t index(Cell c) const { return static_cast<std::size_t>(c.y) * nx + c.x; }
    bool contains(Cell c) const { return c.x >= 0 && c.y >= 0 && c.x < nx && c.y < ny; }
    Vec2 center(Cell c) const { return origin + cell * Vec2(c.x + 0.5, c.y + 0.5); }
    std::optional<Cell> locate(const Vec2 &p) const;
    bool operator==(const GridSpec2D &) const = default;
};

struct OccupancyGrid {
    GridSpec2D spec;
    std::vector<CellState> state;

    OccupancyGrid() = default;
    OccupancyGrid(const GridSpec2D &spec, CellState fill);

    CellState at(Cell c) const { return state[spec.index(c)]; }
    CellState &at(Cell c) { return state[spec.index(c)]; }
    std::size_t count(CellState s) const;
};

/// Marks every cell within `radius` cells (Chebyshev) of an Occupied cell as Occupied.
OccupancyGrid inflate(const OccupancyGrid &grid, int radius);

} // namespace belief
