#include "fedfa/matrix.hpp"

#include <cmath>

namespace fedfa {

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("from_rows: ragged row lengths");
        std::size_t j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

Matrix& Matrix::operator+=(const Matrix& other) {
    if (!same_shape(other)) throw ShapeError("operator+=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
    if (!same_shape(other)) throw ShapeError("operator-=: shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    return *this;
}

Matrix& Matrix::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                         " * " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    Matrix out(a.rows(), b.cols(), 0.0);
    // i-k-j order: inner accumulation stays left-to-right over k for each
    // output entry, keeping the reduction order fixed.
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < b.cols(); ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += a(i, k) * b(k, j);
            out(i, j) = acc;
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) out(j, i) = m(i, j);
    return out;
}

Matrix softmax_rows(const Matrix& z) {
    Matrix out(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < z.cols(); ++j) mx = std::max(mx, z(i, j));
        double denom = 0.0;
        for (std::size_t j = 0; j < z.cols(); ++j) {
            out(i, j) = std::exp(z(i, j) - mx);
            denom += out(i, j);
        }
        for (std::size_t j = 0; j < z.cols(); ++j) out(i, j) /= denom;
    }
    return out;
}

Matrix log_softmax_rows(const Matrix& z) {
    Matrix out(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        std::size_t arg = 0;
        double mx = z(i, 0);
        for (std::size_t j = 1; j < z.cols(); ++j) {
            if (z(i, j) > mx) {
                mx = z(i, j);
                arg = j;
            }
        }
        // lse = mx + log1p(sum of exp over the non-max entries); keeps the
        // saturated case accurate down to ~1e-300.
        double rest = 0.0;
        for (std::size_t j = 0; j < z.cols(); ++j) {
            if (j != arg) rest += std::exp(z(i, j) - mx);
        }
        // Subtract mx before the log1p term so saturated losses keep their
        // tiny magnitude instead of being absorbed into mx.
        const double log1p_rest = std::log1p(rest);
        for (std::size_t j = 0; j < z.cols(); ++j)
            out(i, j) = (z(i, j) - mx) - log1p_rest;
    }
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double sum(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
    double mx = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i)
        mx = std::max(mx, std::abs(a.data()[i] - b.data()[i]));
    return mx;
}

void ensure_finite(const Matrix& m, const std::string& what) {
    if (!m.all_finite()) throw std::runtime_error(what + ": non-finite entries");
}

}  // namespace fedfa
