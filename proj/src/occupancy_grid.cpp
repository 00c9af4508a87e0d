#include "belief/occupancy_grid.hpp"

#include <algorithm>
#include <cmath>

namespace belief {

std::optional<Cell> GridSpec2D::locate(const Vec2 &p) const {
    const Vec2 r = (p - origin) / cell;
    const Cell c{static_cast<int>(std::floor(r.x())), static_cast<int>(std::floor(r.y()))};
    if (!contains(c)) {
        return std::nullopt;
    }
    return c;
}

OccupancyGrid::OccupancyGrid(const GridSpec2D &s, CellState fill) : spec(s), state(s.cells(), fill) {
    if (s.nx < 1 || s.ny < 1) {
        throw Error(ErrorCode::EmptyGrid, "occupancy grid dims must be positive");
    }
}

std::size_t OccupancyGrid::count(CellState s) const {
    return static_cast<std::size_t>(std::count(state.begin(), state.end(), s));
}

OccupancyGrid inflate(const OccupancyGrid &grid, int radius) {
    OccupancyGrid out = grid;
    if (radius <= 0) {
        return out;
    }
    for (int y = 0; y < grid.spec.ny; ++y) {
        for (int x = 0; x < grid.spec.nx; ++x) {
            if (grid.at({x, y}) != CellState::Occupied) {
                continue;
            }
            for (int dy = -radius; dy <= radius; ++dy) {
                for (int dx = -radius; dx <= radius; ++dx) {
                    const Cell n{x + dx, y + dy};
                    if (grid.spec.contains(n)) {
                        out.at(n) = CellState::Occupied;
                    }
                }
            }
        }
    }
    return out;
}

} // namespace belief
