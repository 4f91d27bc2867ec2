#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace grape {

// Dense row-major matrix of doubles.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) noexcept {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }
    double operator()(std::size_t r, std::size_t c) const noexcept {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }

    std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const noexcept {
        return {data_.data() + r * cols_, cols_};
    }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool all_finite() const noexcept {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

namespace linalg {

// out = a * w^T (+ bias), with a: n x in, w: out x in.
inline Matrix affine(const Matrix& a, const Matrix& w, std::span<const double> bias) {
    assert(a.cols() == w.cols());
    Matrix out(a.rows(), w.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto x = a.row(i);
        auto y = out.row(i);
        for (std::size_t o = 0; o < w.rows(); ++o) {
            auto wr = w.row(o);
            double s = bias.empty() ? 0.0 : bias[o];
            for (std::size_t k = 0; k < x.size(); ++k) s += wr[k] * x[k];
            y[o] = s;
        }
    }
    return out;
}

// Backward of affine: accumulates dW += dy^T a, db += colsum(dy); returns dA = dy * w.
inline Matrix affine_backward(const Matrix& a, const Matrix& w, const Matrix& dy, Matrix& dw,
                              std::span<double> db, bool want_input_grad = true) {
    assert(dy.rows() == a.rows() && dy.cols() == w.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto x = a.row(i);
        auto g = dy.row(i);
        for (std::size_t o = 0; o < w.rows(); ++o) {
            const double go = g[o];
            if (go == 0.0) continue;
            auto dwr = dw.row(o);
            for (std::size_t k = 0; k < x.size(); ++k) dwr[k] += go * x[k];
            if (!db.empty()) db[o] += go;
        }
    }
    if (!want_input_grad) return {};
    Matrix da(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto g = dy.row(i);
        auto d = da.row(i);
        for (std::size_t o = 0; o < w.rows(); ++o) {
            const double go = g[o];
            if (go == 0.0) continue;
            auto wr = w.row(o);
            for (std::size_t k = 0; k < d.size(); ++k) d[k] += go * wr[k];
        }
    }
    return da;
}

inline void relu_inplace(Matrix& m) {
    for (double& v : m.values()) v = v > 0.0 ? v : 0.0;
}

inline double sum_squares(const Matrix& m) {
    double s = 0.0;
    for (double v : m.values()) s += v * v;
    return s;
}

}  // namespace linalg
}  // namespace grape
