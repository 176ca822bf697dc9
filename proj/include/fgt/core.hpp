#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <stdexcept>
#include <string>
#include <vector>

namespace fgt {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using Vector = std::vector<double>;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Shapes or coordinate counts that do not line up.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Arguments outside the admissible range of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Non-finite values, failed solves, divergence.
class NumericalError : public Error {
public:
    using Error::Error;
};

inline constexpr double kPi = 3.14159265358979323846;

inline void require(bool ok, const std::string& what) {
    if (!ok) throw DomainError(what);
}

inline void require_dims(bool ok, const std::string& what) {
    if (!ok) throw DimensionError(what);
}

inline Matrix rows_to_matrix(const std::vector<Vector>& rows, std::size_t cols) {
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        require_dims(rows[i].size() == cols, "row length mismatch");
        for (std::size_t j = 0; j < cols; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return m;
}

/// 1 x n matrix holding a single point.
inline Matrix row_matrix(std::span<const double> v) {
    Matrix m(1, static_cast<Eigen::Index>(v.size()));
    for (std::size_t j = 0; j < v.size(); ++j) m(0, static_cast<Eigen::Index>(j)) = v[j];
    return m;
}

inline Vector row_of(const Matrix& m, Eigen::Index i) {
    Vector out(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(j)] = m(i, j);
    return out;
}

inline double euclidean(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double t = a[i] - b[i];
        s += t * t;
    }
    return std::sqrt(s);
}

/// 64-bit FNV-1a, stable across platforms (used for config hashes in reports).
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace fgt
