#pragma once

// Minimal row-major double matrix for the desk-scale model. Dimensions stay
// small (tokens x model width), so naive loops are fine; 64-bit throughout
// because the training stack is verified against finite differences.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace logatlas {

struct Mat {
    int rows = 0;
    int cols = 0;
    std::vector<double> d;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), d(static_cast<std::size_t>(r) * c, 0.0) {}

    double& at(int i, int j) { return d[static_cast<std::size_t>(i) * cols + j]; }
    double at(int i, int j) const {
        return d[static_cast<std::size_t>(i) * cols + j];
    }
    std::size_t size() const { return d.size(); }

    void zero() { std::fill(d.begin(), d.end(), 0.0); }

    bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
    bool operator==(const Mat&) const = default;
};

namespace matops {

inline void require(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("matrix: ") + what);
}

// C = A * B
inline Mat matmul(const Mat& a, const Mat& b) {
    require(a.cols == b.rows, "matmul shape mismatch");
    Mat c(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int k = 0; k < a.cols; ++k) {
            const double av = a.at(i, k);
            if (av == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) c.at(i, j) += av * b.at(k, j);
        }
    return c;
}

// C = A * B^T, with B stored [n x k]
inline Mat matmul_nt(const Mat& a, const Mat& b) {
    require(a.cols == b.cols, "matmul_nt shape mismatch");
    Mat c(a.rows, b.rows);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < b.rows; ++j) {
            double s = 0.0;
            for (int k = 0; k < a.cols; ++k) s += a.at(i, k) * b.at(j, k);
            c.at(i, j) = s;
        }
    return c;
}

// C = A^T * B, with A stored [k x m]
inline Mat matmul_tn(const Mat& a, const Mat& b) {
    require(a.rows == b.rows, "matmul_tn shape mismatch");
    Mat c(a.cols, b.cols);
    for (int k = 0; k < a.rows; ++k)
        for (int i = 0; i < a.cols; ++i) {
            const double av = a.at(k, i);
            if (av == 0.0) continue;
            for (int j = 0; j < b.cols; ++j) c.at(i, j) += av * b.at(k, j);
        }
    return c;
}

inline void add_inplace(Mat& a, const Mat& b) {
    require(a.same_shape(b), "add shape mismatch");
    for (std::size_t i = 0; i < a.d.size(); ++i) a.d[i] += b.d[i];
}

inline void axpy_inplace(Mat& a, double alpha, const Mat& b) {
    require(a.same_shape(b), "axpy shape mismatch");
    for (std::size_t i = 0; i < a.d.size(); ++i) a.d[i] += alpha * b.d[i];
}

inline void scale_inplace(Mat& a, double alpha) {
    for (double& v : a.d) v *= alpha;
}

// Adds b (a 1 x n row) to every row of a.
inline void add_row_inplace(Mat& a, const Mat& b) {
    require(b.rows == 1 && b.cols == a.cols, "row add shape mismatch");
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) a.at(i, j) += b.at(0, j);
}

// Returns the 1 x n column sums (gradient of a broadcast row).
inline Mat col_sums(const Mat& a) {
    Mat out(1, a.cols);
    for (int i = 0; i < a.rows; ++i)
        for (int j = 0; j < a.cols; ++j) out.at(0, j) += a.at(i, j);
    return out;
}

}  // namespace matops

}  // namespace logatlas
