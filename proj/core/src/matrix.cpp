#include "metadapt/matrix.hpp"

#include "metadapt/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace metadapt {

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rs) {
    Matrix m;
    m.rows = rs.size();
    m.cols = rs.begin()->size();
    m.data.reserve(m.rows * m.cols);
    for (const auto& r : rs) {
        require(r.size() == m.cols, "Matrix::from_rows: ragged rows");
        m.data.insert(m.data.end(), r.begin(), r.end());
    }
    return m;
}

bool operator==(const Matrix& a, const Matrix& b) {
    return a.rows == b.rows && a.cols == b.cols && a.data == b.data;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    require(a.cols == b.rows, "matmul: inner dimensions differ");
    Matrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[i * a.cols];
        double* orow = &out.data[i * out.cols];
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double av = arow[k];
            if (av == 0.0) continue;
            const double* brow = &b.data[k * b.cols];
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    require(a.cols == b.cols, "matmul_nt: inner dimensions differ");
    Matrix out(a.rows, b.rows);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double* arow = &a.data[i * a.cols];
        for (std::size_t j = 0; j < b.rows; ++j) {
            const double* brow = &b.data[j * b.cols];
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            out(i, j) = acc;
        }
    }
    return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    require(a.rows == b.rows, "matmul_tn: inner dimensions differ");
    Matrix out(a.cols, b.cols);
    for (std::size_t k = 0; k < a.rows; ++k) {
        const double* arow = &a.data[k * a.cols];
        const double* brow = &b.data[k * b.cols];
        for (std::size_t i = 0; i < a.cols; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* orow = &out.data[i * out.cols];
            for (std::size_t j = 0; j < b.cols; ++j) orow[j] += av * brow[j];
        }
    }
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "add: shape mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] += b.data[i];
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "hadamard: shape mismatch");
    Matrix out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] *= b.data[i];
    return out;
}

Matrix scale(const Matrix& a, double c) {
    Matrix out = a;
    for (double& v : out.data) v *= c;
    return out;
}

Matrix add_bias_rows(const Matrix& x, const Matrix& bias) {
    require(bias.rows == 1 && bias.cols == x.cols, "add_bias_rows: bias must be 1 x cols");
    Matrix out = x;
    for (std::size_t i = 0; i < x.rows; ++i)
        for (std::size_t j = 0; j < x.cols; ++j) out(i, j) += bias(0, j);
    return out;
}

Matrix relu(const Matrix& x) {
    Matrix out = x;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return out;
}

Matrix softmax_rows(const Matrix& logits) {
    Matrix out(logits.rows, logits.cols);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < logits.cols; ++j) m = std::max(m, logits(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) {
            out(i, j) = std::exp(logits(i, j) - m);
            z += out(i, j);
        }
        for (std::size_t j = 0; j < logits.cols; ++j) out(i, j) /= z;
    }
    return out;
}

std::vector<double> logsumexp_rows(const Matrix& logits) {
    std::vector<double> out(logits.rows);
    for (std::size_t i = 0; i < logits.rows; ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < logits.cols; ++j) m = std::max(m, logits(i, j));
        double z = 0.0;
        for (std::size_t j = 0; j < logits.cols; ++j) z += std::exp(logits(i, j) - m);
        out[i] = m + std::log(z);
    }
    return out;
}

Matrix l2_normalize_rows(const Matrix& x) {
    Matrix out = x;
    for (std::size_t i = 0; i < x.rows; ++i) {
        double sq = 0.0;
        for (std::size_t j = 0; j < x.cols; ++j) sq += x(i, j) * x(i, j);
        const double inv = 1.0 / std::max(std::sqrt(sq), 1e-12);
        for (std::size_t j = 0; j < x.cols; ++j) out(i, j) *= inv;
    }
    return out;
}

Matrix l2_normalize_cols(const Matrix& x) {
    Matrix out = x;
    for (std::size_t j = 0; j < x.cols; ++j) {
        double sq = 0.0;
        for (std::size_t i = 0; i < x.rows; ++i) sq += x(i, j) * x(i, j);
        const double inv = 1.0 / std::max(std::sqrt(sq), 1e-12);
        for (std::size_t i = 0; i < x.rows; ++i) out(i, j) *= inv;
    }
    return out;
}

bool all_finite(const Matrix& m) {
    for (double v : m.data)
        if (!std::isfinite(v)) return false;
    return true;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    require(a.same_shape(b), "max_abs_diff: shape mismatch");
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.data[i] - b.data[i]));
    return d;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    require(a.size() == b.size(), "max_abs_diff: length mismatch");
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
    return d;
}

} // namespace metadapt
