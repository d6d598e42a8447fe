#pragma once

#include <cstddef>
#include <vector>

namespace scribble {

/// Dense row-major matrix of assignment costs.
struct CostMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    CostMatrix() = default;
    CostMatrix(std::size_t rows_, std::size_t cols_, double fill = 0.0)
        : rows(rows_), cols(cols_), data(rows_ * cols_, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
};

struct Assignment {
    std::vector<std::size_t> column_of_row;
    double cost = 0.0;
};

/// Exact minimum-cost perfect matching on a square matrix (Kuhn-Munkres with
/// row/column potentials and shortest augmenting paths, O(n^3)).
/// Throws BadCostMatrix for non-square, empty or non-finite input.
Assignment hungarian(const CostMatrix& cost);

double assignment_cost(const CostMatrix& cost, const std::vector<std::size_t>& column_of_row);

}  // namespace scribble
