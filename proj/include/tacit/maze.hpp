#pragma once

#include <cstdint>
#include <queue>
#include <vector>

#include "tacit/error.hpp"
#include "tacit/image.hpp"
#include "tacit/rng.hpp"

namespace tacit {

struct Cell {
    int row = 0;
    int col = 0;

    bool operator==(const Cell&) const = default;
};

/// Logical maze on an odd-sized S x S grid. Border cells are walls; the open
/// cells form a spanning tree over the ((S-1)/2)^2 both-odd "node" cells, so
/// any two open cells are connected by exactly one simple path.
struct MazeGrid {
    int size = 0;
    std::vector<uint8_t> cells;  // row-major, 1 = path, 0 = wall

    bool path(int r, int c) const { return cells[static_cast<size_t>(r) * size + c] != 0; }
    void carve(int r, int c) { cells[static_cast<size_t>(r) * size + c] = 1; }

    Cell entry() const { return {1, 1}; }
    Cell exit() const { return {size - 2, size - 2}; }
};

/// Ordered entry-to-exit cell sequence; consecutive cells are 4-adjacent.
struct SolutionPath {
    std::vector<Cell> cells;
};

struct PairSample {
    ImageU8 input;   // rendered maze
    ImageU8 target;  // rendered maze with the solution path overlaid
    int size = 0;
    uint64_t seed = 0;
};

namespace detail {
inline void check_maze_size(int size) {
    require(size % 2 == 1 && size >= 5 && size <= 63, ErrorCategory::invalid_argument,
            "invalid maze size " + std::to_string(size) + " (need odd, 5..63)");
}
}  // namespace detail

/// Randomized depth-first carve with iterative backtracking. All cells start
/// as walls; from (1,1) we repeatedly pick an uncarved node two cells away
/// (candidates scanned in fixed N,S,W,E order, one uniform index draw) and
/// carve both the intermediate wall and the node. Deterministic in (size, seed).
inline MazeGrid generate_maze(int size, uint64_t seed) {
    detail::check_maze_size(size);

    MazeGrid grid;
    grid.size = size;
    grid.cells.assign(static_cast<size_t>(size) * size, 0);

    Xoshiro256ss rng(seed);
    std::vector<Cell> stack;
    grid.carve(1, 1);
    stack.push_back({1, 1});

    // N, S, W, E at node distance 2.
    static constexpr int kStep[4][2] = {{-2, 0}, {2, 0}, {0, -2}, {0, 2}};

    while (!stack.empty()) {
        const Cell cur = stack.back();
        Cell candidates[4];
        int n = 0;
        for (const auto& d : kStep) {
            const int r = cur.row + d[0];
            const int c = cur.col + d[1];
            if (r < 1 || c < 1 || r > size - 2 || c > size - 2) continue;
            if (!grid.path(r, c)) candidates[n++] = {r, c};
        }
        if (n == 0) {
            stack.pop_back();
            continue;
        }
        const Cell next = candidates[rng.bounded(static_cast<uint64_t>(n))];
        grid.carve((cur.row + next.row) / 2, (cur.col + next.col) / 2);
        grid.carve(next.row, next.col);
        stack.push_back(next);
    }
    return grid;
}

/// Breadth-first search from entry to exit. In a perfect maze the returned
/// path is the unique (hence shortest) one.
inline SolutionPath solve_maze(const MazeGrid& grid) {
    const int size = grid.size;
    const Cell start = grid.entry();
    const Cell goal = grid.exit();
    require(grid.path(start.row, start.col) && grid.path(goal.row, goal.col),
            ErrorCategory::invalid_argument, "entry or exit is not an open cell");

    if (start == goal) return SolutionPath{{start}};

    std::vector<int32_t> parent(static_cast<size_t>(size) * size, -1);
    auto idx = [size](int r, int c) { return r * size + c; };

    std::queue<Cell> frontier;
    frontier.push(start);
    parent[idx(start.row, start.col)] = idx(start.row, start.col);

    static constexpr int kStep[4][2] = {{-1, 0}, {1, 0}, {0, -1}, {0, 1}};
    bool found = false;
    while (!frontier.empty() && !found) {
        const Cell cur = frontier.front();
        frontier.pop();
        for (const auto& d : kStep) {
            const int r = cur.row + d[0];
            const int c = cur.col + d[1];
            if (r < 0 || c < 0 || r >= size || c >= size) continue;
            if (!grid.path(r, c) || parent[idx(r, c)] != -1) continue;
            parent[idx(r, c)] = idx(cur.row, cur.col);
            if (r == goal.row && c == goal.col) {
                found = true;
                break;
            }
            frontier.push({r, c});
        }
    }
    require(found, ErrorCategory::invalid_argument, "exit unreachable; maze is corrupted");

    SolutionPath path;
    for (Cell c = goal;; c = {parent[idx(c.row, c.col)] / size, parent[idx(c.row, c.col)] % size}) {
        path.cells.push_back(c);
        if (c == start) break;
    }
    std::reverse(path.cells.begin(), path.cells.end());
    return path;
}

namespace palette {
inline constexpr uint8_t kWhite[3] = {255, 255, 255};  // open path
inline constexpr uint8_t kBlack[3] = {0, 0, 0};        // wall
inline constexpr uint8_t kGreen[3] = {0, 255, 0};      // entry and exit
inline constexpr uint8_t kRed[3] = {255, 0, 0};        // solution path
}  // namespace palette

/// Nearest-neighbor render: pixel (i,j) shows cell (floor(i*S/res), floor(j*S/res)).
/// Entry and exit stay green even when they lie on the solution path; only
/// interior path cells turn red.
inline ImageU8 render_maze(const MazeGrid& grid, const SolutionPath* path, int resolution) {
    const int size = grid.size;
    require(resolution >= size, ErrorCategory::invalid_argument,
            "resolution " + std::to_string(resolution) + " < maze size " + std::to_string(size));

    enum : uint8_t { kCWall, kCPath, kCGreen, kCRed };
    std::vector<uint8_t> color(static_cast<size_t>(size) * size, kCWall);
    for (int r = 0; r < size; ++r)
        for (int c = 0; c < size; ++c)
            if (grid.path(r, c)) color[static_cast<size_t>(r) * size + c] = kCPath;
    if (path) {
        for (size_t i = 1; i + 1 < path->cells.size(); ++i) {
            const Cell& c = path->cells[i];
            color[static_cast<size_t>(c.row) * size + c.col] = kCRed;
        }
    }
    const Cell en = grid.entry();
    const Cell ex = grid.exit();
    color[static_cast<size_t>(en.row) * size + en.col] = kCGreen;
    color[static_cast<size_t>(ex.row) * size + ex.col] = kCGreen;

    ImageU8 img(resolution, resolution);
    for (int i = 0; i < resolution; ++i) {
        const int r = i * size / resolution;
        for (int j = 0; j < resolution; ++j) {
            const int c = j * size / resolution;
            const uint8_t* rgb = palette::kBlack;
            switch (color[static_cast<size_t>(r) * size + c]) {
                case kCPath: rgb = palette::kWhite; break;
                case kCGreen: rgb = palette::kGreen; break;
                case kCRed: rgb = palette::kRed; break;
                default: break;
            }
            for (int ch = 0; ch < 3; ++ch) img.at(i, j, ch) = rgb[ch];
        }
    }
    return img;
}

inline PairSample generate_pair(int size, uint64_t seed, int resolution) {
    const MazeGrid grid = generate_maze(size, seed);
    const SolutionPath path = solve_maze(grid);
    PairSample pair;
    pair.input = render_maze(grid, nullptr, resolution);
    pair.target = render_maze(grid, &path, resolution);
    pair.size = size;
    pair.seed = seed;
    return pair;
}

}  // namespace tacit
