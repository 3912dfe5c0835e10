#include "fect/matrix.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fect/errors.hpp"

namespace fect {

namespace {

void require(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

} // namespace

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::gaussian(std::size_t r, std::size_t c, double stddev, SeededRng& rng) {
    Matrix m(r, c);
    for (auto& v : m.data) v = stddev * rng.normal();
    return m;
}

namespace reference {

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols == b.rows, "matmul: inner dimensions differ (" +
                                  std::to_string(a.cols) + " vs " +
                                  std::to_string(b.rows) + ")");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = a.row_ptr(i);
        double* orow = out.row_ptr(i);
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.row_ptr(k);
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

} // namespace reference

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols == b.rows, "matmul: inner dimensions differ (" +
                                  std::to_string(a.cols) + " vs " +
                                  std::to_string(b.rows) + ")");
    Matrix out(a.rows, b.cols);
    const std::ptrdiff_t nrows = static_cast<std::ptrdiff_t>(a.rows);
    // One thread owns each output row, so the accumulation order per element
    // matches the serial kernel exactly.
#pragma omp parallel for schedule(static) if (a.rows * a.cols * b.cols > 32768)
    for (std::ptrdiff_t i = 0; i < nrows; ++i) {
        const double* arow = a.row_ptr(static_cast<std::size_t>(i));
        double* orow = out.row_ptr(static_cast<std::size_t>(i));
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            if (aik == 0.0) continue;
            const double* brow = b.row_ptr(k);
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "add: shape mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "subtract: shape mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

Matrix scale(const Matrix& a, double s) {
    Matrix out = a;
    for (auto& v : out.data) v *= s;
    return out;
}

void add_inplace(Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "add_inplace: shape mismatch");
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += b.data[i];
}

void axpy_inplace(Matrix& a, double s, const Matrix& b) {
    require(a.same_shape(b), "axpy_inplace: shape mismatch");
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] += s * b.data[i];
}

double frobenius_norm(const Matrix& a) {
    double sum = 0.0;
    for (double v : a.data) sum += v * v;
    return std::sqrt(sum);
}

double norm_1(const Matrix& a) {
    double best = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.rows; ++i) s += std::fabs(a(i, j));
        best = std::max(best, s);
    }
    return best;
}

double norm_inf(const Matrix& a) {
    double best = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) s += std::fabs(a(i, j));
        best = std::max(best, s);
    }
    return best;
}

bool all_finite(const Matrix& a) {
    for (double v : a.data)
        if (!std::isfinite(v)) return false;
    return true;
}

Matrix softmax_rows(const Matrix& m) {
    require(m.rows > 0 && m.cols > 0, "softmax_rows: empty matrix");
    Matrix out(m.rows, m.cols);
    for (std::size_t i = 0; i < m.rows; ++i) {
        const double* in = m.row_ptr(i);
        double* o = out.row_ptr(i);
        double mx = in[0];
        for (std::size_t j = 1; j < m.cols; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < m.cols; ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        for (std::size_t j = 0; j < m.cols; ++j) o[j] /= sum;
    }
    return out;
}

Matrix softmax_rows_backward(const Matrix& y, const Matrix& dy) {
    require(y.same_shape(dy), "softmax_rows_backward: shape mismatch");
    Matrix dx(y.rows, y.cols);
    for (std::size_t i = 0; i < y.rows; ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < y.cols; ++j) dot += dy(i, j) * y(i, j);
        for (std::size_t j = 0; j < y.cols; ++j)
            dx(i, j) = y(i, j) * (dy(i, j) - dot);
    }
    return dx;
}

Matrix pinv_iterative(const Matrix& a, int iters) {
    require(a.rows == a.cols, "pinv_iterative: matrix not square");
    if (iters < 1) throw ShapeError("pinv_iterative: iters must be >= 1");
    const std::size_t n = a.rows;
    const double n1 = norm_1(a);
    const double ninf = norm_inf(a);
    if (n1 == 0.0 || ninf == 0.0) return Matrix::zeros(n, n);

    Matrix z = scale(transpose(a), 1.0 / (n1 * ninf));
    const Matrix eye = Matrix::identity(n);
    for (int it = 0; it < iters; ++it) {
        Matrix az = matmul(a, z);                                   // Y
        Matrix t1 = subtract(scale(eye, 7.0), az);                  // 7I - Y
        Matrix t2 = subtract(scale(eye, 15.0), matmul(az, t1));     // 15I - Y t1
        Matrix t3 = subtract(scale(eye, 13.0), matmul(az, t2));     // 13I - Y t2
        z = scale(matmul(z, t3), 0.25);
    }
    return z;
}

void symmetric_eigen(const Matrix& a, std::vector<double>& eigenvalues,
                     Matrix& eigenvectors) {
    require(a.rows == a.cols, "symmetric_eigen: matrix not square");
    const std::size_t n = a.rows;
    Matrix m = a;
    Matrix v = Matrix::identity(n);

    const int max_sweeps = 100;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off += m(p, q) * m(p, q);
        if (off < 1e-24) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::fabs(m(p, q)) < 1e-300) continue;
                const double theta = (m(q, q) - m(p, p)) / (2.0 * m(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double mkp = m(k, p), mkq = m(k, q);
                    m(k, p) = c * mkp - s * mkq;
                    m(k, q) = s * mkp + c * mkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double mpk = m(p, k), mqk = m(q, k);
                    m(p, k) = c * mpk - s * mqk;
                    m(q, k) = s * mpk + c * mqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        if (m(x, x) != m(y, y)) return m(x, x) > m(y, y);
        return x < y;
    });

    eigenvalues.assign(n, 0.0);
    eigenvectors = Matrix(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        eigenvalues[j] = m(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) eigenvectors(i, j) = v(i, order[j]);
    }
}

Matrix pca_project(const Matrix& x, std::size_t k) {
    if (k > x.cols) throw ShapeError("pca_project: k exceeds feature dimension");
    if (x.rows < 2) throw ShapeError("pca_project: need at least 2 samples");

    Matrix centered = x;
    for (std::size_t j = 0; j < x.cols; ++j) {
        double mean = 0.0;
        for (std::size_t i = 0; i < x.rows; ++i) mean += x(i, j);
        mean /= static_cast<double>(x.rows);
        for (std::size_t i = 0; i < x.rows; ++i) centered(i, j) -= mean;
    }

    Matrix cov = scale(matmul(transpose(centered), centered),
                       1.0 / static_cast<double>(x.rows - 1));
    std::vector<double> evals;
    Matrix evecs;
    symmetric_eigen(cov, evals, evecs);

    Matrix basis(x.cols, k);
    for (std::size_t j = 0; j < k; ++j) {
        // Sign convention: largest-magnitude component positive.
        std::size_t arg = 0;
        for (std::size_t i = 1; i < x.cols; ++i)
            if (std::fabs(evecs(i, j)) > std::fabs(evecs(arg, j))) arg = i;
        const double flip = evecs(arg, j) < 0.0 ? -1.0 : 1.0;
        for (std::size_t i = 0; i < x.cols; ++i) basis(i, j) = flip * evecs(i, j);
    }
    return matmul(centered, basis);
}

} // namespace fect
