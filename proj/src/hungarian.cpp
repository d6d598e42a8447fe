#include "scribble/hungarian.hpp"

#include "scribble/core.hpp"

#include <cmath>
#include <limits>

namespace scribble {

Assignment hungarian(const CostMatrix& cost)
{
    const std::size_t n = cost.rows;
    if (n == 0 || cost.cols != n || cost.data.size() != n * n) {
        throw Error(ErrorCode::BadCostMatrix, "expected a non-empty square matrix");
    }
    for (double v : cost.data) {
        if (!std::isfinite(v)) {
            throw Error(ErrorCode::BadCostMatrix, "non-finite cost");
        }
    }

    constexpr double kInf = std::numeric_limits<double>::infinity();
    constexpr std::size_t kFree = 0;
    // 1-based; index 0 is the virtual column used to start each augmentation.
    std::vector<double> row_pot(n + 1, 0.0), col_pot(n + 1, 0.0);
    std::vector<std::size_t> row_of_col(n + 1, kFree), way(n + 1, 0);

    for (std::size_t row = 1; row <= n; ++row) {
        row_of_col[0] = row;
        std::size_t col0 = 0;
        std::vector<double> slack(n + 1, kInf);
        std::vector<char> used(n + 1, 0);
        do {
            used[col0] = 1;
            const std::size_t r0 = row_of_col[col0];
            double delta = kInf;
            std::size_t col1 = 0;
            for (std::size_t col = 1; col <= n; ++col) {
                if (used[col]) {
                    continue;
                }
                const double reduced = cost(r0 - 1, col - 1) - row_pot[r0] - col_pot[col];
                if (reduced < slack[col]) {
                    slack[col] = reduced;
                    way[col] = col0;
                }
                if (slack[col] < delta) {
                    delta = slack[col];
                    col1 = col;
                }
            }
            for (std::size_t col = 0; col <= n; ++col) {
                if (used[col]) {
                    row_pot[row_of_col[col]] += delta;
                    col_pot[col] -= delta;
                } else {
                    slack[col] -= delta;
                }
            }
            col0 = col1;
        } while (row_of_col[col0] != kFree);
        do {
            const std::size_t col1 = way[col0];
            row_of_col[col0] = row_of_col[col1];
            col0 = col1;
        } while (col0 != 0);
    }

    Assignment out;
    out.column_of_row.assign(n, 0);
    for (std::size_t col = 1; col <= n; ++col) {
        out.column_of_row[row_of_col[col] - 1] = col - 1;
    }
    out.cost = assignment_cost(cost, out.column_of_row);
    return out;
}

double assignment_cost(const CostMatrix& cost, const std::vector<std::size_t>& column_of_row)
{
    double total = 0.0;
    for (std::size_t r = 0; r < column_of_row.size(); ++r) {
        total += cost(r, column_of_row[r]);
    }
    return total;
}

}  // namespace scribble
