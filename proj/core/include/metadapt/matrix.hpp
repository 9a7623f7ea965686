#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

namespace metadapt {

// Dense real matrix, row-major. The whole artifact runs in double precision.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data; // rows*cols, row-major

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rs);

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }
};

bool operator==(const Matrix& a, const Matrix& b);

Matrix matmul(const Matrix& a, const Matrix& b);    // a(n,m) * b(m,k)
Matrix matmul_nt(const Matrix& a, const Matrix& b); // a(n,m) * b(k,m)^T -> (n,k)
Matrix matmul_tn(const Matrix& a, const Matrix& b); // a(m,n)^T * b(m,k) -> (n,k)

Matrix add(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double c);
Matrix add_bias_rows(const Matrix& x, const Matrix& bias); // bias is 1 x cols
Matrix relu(const Matrix& x);

// Row softmax with max subtraction; rows sum to 1.
Matrix softmax_rows(const Matrix& logits);
// Per-row log(sum(exp(row))) computed against the row max.
std::vector<double> logsumexp_rows(const Matrix& logits);

Matrix l2_normalize_rows(const Matrix& x); // row norms clamped at 1e-12
Matrix l2_normalize_cols(const Matrix& x);

bool all_finite(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);
double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b);

} // namespace metadapt
