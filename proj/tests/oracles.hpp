#pragma once

// Independent reference implementations used only to check the library.
// Deliberately naive: straight loops and brute-force enumeration, sharing no
// code with the implementations under test.

#include <cstdint>
#include <numeric>
#include <vector>

#include "tacit/maze.hpp"
#include "tacit/tensor.hpp"

namespace oracles {

// ---- graph checks on mazes ----

class UnionFind {
public:
    explicit UnionFind(size_t n) : parent_(n) {
        std::iota(parent_.begin(), parent_.end(), size_t{0});
    }
    size_t find(size_t x) {
        while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
        return x;
    }
    /// Returns false if x and y were already connected (a cycle).
    bool unite(size_t x, size_t y) {
        const size_t rx = find(x), ry = find(y);
        if (rx == ry) return false;
        parent_[rx] = ry;
        return true;
    }

private:
    std::vector<size_t> parent_;
};

struct MazeTreeCheck {
    size_t open_cells = 0;
    bool acyclic = true;
    bool single_component = true;
};

/// Union-find over the adjacency of open cells: a perfect maze must come out
/// as one acyclic component with open_cells == 2c - 1.
inline MazeTreeCheck check_maze_tree(const tacit::MazeGrid& grid) {
    const int s = grid.size;
    MazeTreeCheck result;
    UnionFind uf(static_cast<size_t>(s) * s);
    std::vector<size_t> open;
    for (int r = 0; r < s; ++r)
        for (int c = 0; c < s; ++c) {
            if (!grid.path(r, c)) continue;
            open.push_back(static_cast<size_t>(r) * s + c);
            if (r + 1 < s && grid.path(r + 1, c))
                result.acyclic &= uf.unite(size_t(r) * s + c, size_t(r + 1) * s + c);
            if (c + 1 < s && grid.path(r, c + 1))
                result.acyclic &= uf.unite(size_t(r) * s + c, size_t(r) * s + c + 1);
        }
    result.open_cells = open.size();
    for (size_t cell : open)
        result.single_component &= uf.find(cell) == uf.find(open.front());
    return result;
}

/// Depth-first enumeration of every simple entry-to-exit path. Exponential in
/// general; fine for S <= 9.
inline std::vector<std::vector<tacit::Cell>> enumerate_simple_paths(const tacit::MazeGrid& grid) {
    std::vector<std::vector<tacit::Cell>> found;
    std::vector<uint8_t> visited(static_cast<size_t>(grid.size) * grid.size, 0);
    std::vector<tacit::Cell> walk;

    auto dfs = [&](auto&& self, tacit::Cell cur) -> void {
        walk.push_back(cur);
        visited[static_cast<size_t>(cur.row) * grid.size + cur.col] = 1;
        if (cur == grid.exit()) {
            found.push_back(walk);
        } else {
            const int dr[4] = {-1, 1, 0, 0};
            const int dc[4] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
                const int r = cur.row + dr[k], c = cur.col + dc[k];
                if (r < 0 || c < 0 || r >= grid.size || c >= grid.size) continue;
                if (!grid.path(r, c) || visited[static_cast<size_t>(r) * grid.size + c]) continue;
                self(self, {r, c});
            }
        }
        visited[static_cast<size_t>(cur.row) * grid.size + cur.col] = 0;
        walk.pop_back();
    };
    dfs(dfs, grid.entry());
    return found;
}

// ---- numeric oracles ----

/// Triple-loop matmul.
template <typename T>
tacit::Tensor<T> matmul_naive(const tacit::Tensor<T>& a, const tacit::Tensor<T>& b) {
    tacit::Tensor<T> out({a.rows(), b.cols()});
    for (int i = 0; i < a.rows(); ++i)
        for (int j = 0; j < b.cols(); ++j) {
            T acc = 0;
            for (int k = 0; k < a.cols(); ++k) acc += a.at(i, k) * b.at(k, j);
            out.at(i, j) = acc;
        }
    return out;
}

template <typename T>
T mse_naive(const tacit::Tensor<T>& a, const tacit::Tensor<T>& b) {
    T acc = 0;
    for (size_t i = 0; i < a.numel(); ++i) {
        const T d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / T(a.numel());
}

}  // namespace oracles
