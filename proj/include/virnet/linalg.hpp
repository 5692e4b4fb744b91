#pragma once

#include <cstddef>
#include <vector>

#include "virnet/rng.hpp"

namespace virnet {

/// Dense row-major matrix, just enough for PCA, orthogonal init and least
/// squares. Not a tensor: no gradients, no shape algebra.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Mat() = default;
    Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
};

Mat matmul(const Mat& x, const Mat& y);
Mat transpose(const Mat& x);

struct EigResult {
    std::vector<double> values;  // descending
    Mat vectors;                 // column j pairs with values[j]
};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
EigResult eigh(const Mat& sym);

/// Random matrix with orthonormal columns (rows >= cols), via Householder QR
/// of a Gaussian matrix with the R-diagonal sign fix; deterministic in rng.
Mat orthonormal_columns(std::size_t rows, std::size_t cols, Rng& rng);

/// Least-squares solution of A x = b (rows >= cols) by Householder QR.
/// Throws ConditioningError when A is numerically rank deficient.
std::vector<double> solve_least_squares(Mat A, std::vector<double> b);

/// Solves A x = b for symmetric positive definite A by Cholesky.
std::vector<double> cholesky_solve(Mat A, std::vector<double> b);

}  // namespace virnet
