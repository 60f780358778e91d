#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

namespace mlchains {

// Dense row-major matrix of doubles. Feature matrices are small enough here
// that a flat vector with row views is all we need.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}

    double& at(std::size_t r, std::size_t c) {
        assert(r < rows && c < cols);
        return values[r * cols + c];
    }
    double at(std::size_t r, std::size_t c) const {
        assert(r < rows && c < cols);
        return values[r * cols + c];
    }

    std::span<double> row(std::size_t r) {
        assert(r < rows);
        return {values.data() + r * cols, cols};
    }
    std::span<const double> row(std::size_t r) const {
        assert(r < rows);
        return {values.data() + r * cols, cols};
    }

    // Appends one column; used to grow chain training inputs position by position.
    void append_column(std::span<const double> column) {
        assert(column.size() == rows);
        std::vector<double> next(rows * (cols + 1));
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) next[r * (cols + 1) + c] = values[r * cols + c];
            next[r * (cols + 1) + cols] = column[r];
        }
        values = std::move(next);
        ++cols;
    }
};

}  // namespace mlchains
