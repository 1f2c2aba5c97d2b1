#pragma once

#include <cassert>
#include <cstddef>
#include <span>
#include <vector>

#include "qpae/error.hpp"

namespace qpae {

/// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(std::size_t r, std::size_t c) noexcept {
        assert(r < rows && c < cols);
        return data[r * cols + c];
    }
    double operator()(std::size_t r, std::size_t c) const noexcept {
        assert(r < rows && c < cols);
        return data[r * cols + c];
    }

    std::span<double> row(std::size_t r) noexcept { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const noexcept { return {data.data() + r * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols != b.rows) throw ShapeError("matmul: inner dimensions differ");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            const auto brow = b.row(k);
            auto orow = out.row(i);
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

inline bool is_symmetric(const Matrix& m) noexcept {
    if (m.rows != m.cols) return false;
    for (std::size_t i = 0; i < m.rows; ++i)
        for (std::size_t j = i + 1; j < m.cols; ++j)
            if (m(i, j) != m(j, i)) return false;
    return true;
}

}  // namespace qpae
