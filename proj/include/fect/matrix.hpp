#pragma once

#include <cstddef>
#include <vector>

#include "fect/rng.hpp"

namespace fect {

// Dense row-major matrix of doubles. The workhorse carrier for all
// attention / fusion / SVM math in this project.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    double* row_ptr(std::size_t i) { return data.data() + i * cols; }
    const double* row_ptr(std::size_t i) const { return data.data() + i * cols; }

    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    static Matrix zeros(std::size_t r, std::size_t c) { return Matrix(r, c); }
    static Matrix identity(std::size_t n);
    static Matrix gaussian(std::size_t r, std::size_t c, double stddev, SeededRng& rng);
};

// Serial reference kernels. Kept as the ground truth the parallel
// versions are tested against (and benchmarked against in tools/).
namespace reference {
Matrix matmul(const Matrix& a, const Matrix& b);
}

// OpenMP-parallel product; bit-identical to reference::matmul because each
// output element is accumulated in the same order by exactly one thread.
Matrix matmul(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
void add_inplace(Matrix& a, const Matrix& b);
void axpy_inplace(Matrix& a, double s, const Matrix& b); // a += s * b

double frobenius_norm(const Matrix& a);
double norm_1(const Matrix& a);   // max absolute column sum
double norm_inf(const Matrix& a); // max absolute row sum
bool all_finite(const Matrix& a);

// Row-wise softmax with per-row max subtraction for overflow safety.
Matrix softmax_rows(const Matrix& m);

// Backward of softmax_rows: given y = softmax(x) row-wise and dL/dy,
// returns dL/dx = y * (dy - rowsum(dy * y)).
Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy);

// Iterative Moore-Penrose pseudoinverse of a square matrix via the
// third-order Newton-Schulz scheme
//   Z_{j+1} = (1/4) Z_j (13 I - A Z_j (15 I - A Z_j (7 I - A Z_j)))
// started from Z_0 = A^T / (||A||_1 ||A||_inf). An all-zero input returns
// the zero matrix (its defined pseudoinverse).
Matrix pinv_iterative(const Matrix& a, int iters = 6);

// Projection of the rows of x onto the top-k principal directions of the
// column-centered data. Columns come out in non-increasing variance order
// with a deterministic sign convention.
Matrix pca_project(const Matrix& x, std::size_t k);

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Eigenvalues are returned in descending order with matching columns in
// eigenvectors.
void symmetric_eigen(const Matrix& a, std::vector<double>& eigenvalues,
                     Matrix& eigenvectors);

} // namespace fect
