#pragma once

// Fixed sinusoidal coordinate features phi(x) = (sin(2 pi w_m x_l), cos(2 pi w_m x_l)).

#include "fgt/core.hpp"

namespace fgt {

inline constexpr std::size_t kFeatureFrequencies = 6;

/// w_m = 16^{(m-1)/5}, m = 1..6. Only w_1 = 1 and w_6 = 16 are integers, so phi is not
/// 1-periodic in general.
inline double feature_frequency(std::size_t m) {
    return std::pow(16.0, static_cast<double>(m - 1) / 5.0);
}

inline std::size_t feature_dim(std::size_t d) { return 2 * kFeatureFrequencies * d; }

/// Layout: for each axis l, for each m: sin then cos.
inline Vector positional_features(std::span<const double> x) {
    Vector out;
    out.reserve(feature_dim(x.size()));
    for (double c : x)
        for (std::size_t m = 1; m <= kFeatureFrequencies; ++m) {
            const double a = 2.0 * kPi * feature_frequency(m) * c;
            out.push_back(std::sin(a));
            out.push_back(std::cos(a));
        }
    return out;
}

/// Row-wise features of an N x d coordinate matrix.
inline Matrix positional_features(const Matrix& x) {
    const auto d = static_cast<std::size_t>(x.cols());
    Matrix out(x.rows(), static_cast<Eigen::Index>(feature_dim(d)));
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const Vector f = positional_features(std::span<const double>(x.row(i).data(), d));
        for (std::size_t j = 0; j < f.size(); ++j) out(i, static_cast<Eigen::Index>(j)) = f[j];
    }
    return out;
}

}  // namespace fgt
