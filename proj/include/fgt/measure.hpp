#pragma once

// Discrete probability measures on R^{d+n}: tokens, graph measures and layer
// outputs all live here.

#include "fgt/core.hpp"

#include "json.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <utility>

namespace fgt {

using Point = Vector;

struct Atom {
    Point location;
    double weight = 0.0;
};

/// Weighted atoms in R^{ambient_dim}; the first `split` coordinates are spatial (x),
/// the rest are values (y). split == ambient_dim is a purely spatial measure, e.g. the
/// image of a graph measure under (x, y) -> x. Immutable after construction.
class DiscreteMeasure {
public:
    static constexpr double kMassTolerance = 1e-12;

    DiscreteMeasure() = default;

    DiscreteMeasure(std::vector<Atom> atoms, std::size_t ambient_dim, std::size_t split)
        : atoms_(std::move(atoms)), ambient_dim_(ambient_dim), split_(split) {
        validate();
    }

    /// Uniform weights 1/N on the given locations.
    static DiscreteMeasure uniform(const std::vector<Point>& locations, std::size_t split) {
        require(!locations.empty(), "uniform measure needs at least one atom");
        const double w = 1.0 / static_cast<double>(locations.size());
        std::vector<Atom> atoms;
        atoms.reserve(locations.size());
        for (const auto& p : locations) atoms.push_back({p, w});
        return DiscreteMeasure(std::move(atoms), locations.front().size(), split);
    }

    static DiscreteMeasure dirac(Point location, std::size_t split) {
        const std::size_t dim = location.size();
        return DiscreteMeasure({{std::move(location), 1.0}}, dim, split);
    }

    [[nodiscard]] const std::vector<Atom>& atoms() const { return atoms_; }
    [[nodiscard]] std::size_t size() const { return atoms_.size(); }
    [[nodiscard]] bool empty() const { return atoms_.empty(); }
    [[nodiscard]] std::size_t ambient_dim() const { return ambient_dim_; }
    [[nodiscard]] std::size_t split() const { return split_; }
    [[nodiscard]] std::size_t value_dim() const { return ambient_dim_ - split_; }
    [[nodiscard]] const Atom& operator[](std::size_t i) const { return atoms_[i]; }

    /// Compensated sum, so large uniform measures pass the mass check.
    [[nodiscard]] double total_mass() const {
        double s = 0.0, comp = 0.0;
        for (const auto& a : atoms_) {
            const double t = s + a.weight;
            comp += std::abs(s) >= std::abs(a.weight) ? (s - t) + a.weight : (a.weight - t) + s;
            s = t;
        }
        return s + comp;
    }

    /// Atom locations as an N x ambient_dim matrix.
    [[nodiscard]] Matrix locations() const {
        Matrix m(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(ambient_dim_));
        for (std::size_t i = 0; i < size(); ++i)
            for (std::size_t j = 0; j < ambient_dim_; ++j)
                m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = atoms_[i].location[j];
        return m;
    }

    /// Spatial block (first `split` columns) of locations().
    [[nodiscard]] Matrix coords() const { return locations().leftCols(static_cast<Eigen::Index>(split_)); }

    /// Value block (remaining columns) of locations().
    [[nodiscard]] Matrix values() const {
        return locations().rightCols(static_cast<Eigen::Index>(value_dim()));
    }

    [[nodiscard]] Vector weights() const {
        Vector w(size());
        for (std::size_t i = 0; i < size(); ++i) w[i] = atoms_[i].weight;
        return w;
    }

    /// Rebuild from a location matrix and weights.
    static DiscreteMeasure from_matrix(const Matrix& locations, const Vector& weights, std::size_t split) {
        require_dims(static_cast<std::size_t>(locations.rows()) == weights.size(), "weights/locations mismatch");
        std::vector<Atom> atoms;
        atoms.reserve(weights.size());
        for (Eigen::Index i = 0; i < locations.rows(); ++i)
            atoms.push_back({row_of(locations, i), weights[static_cast<std::size_t>(i)]});
        return DiscreteMeasure(std::move(atoms), static_cast<std::size_t>(locations.cols()), split);
    }

private:
    void validate() const {
        require_dims(ambient_dim_ > 0, "ambient dimension must be positive");
        require_dims(split_ > 0 && split_ <= ambient_dim_, "coordinate split must satisfy 0 < split <= ambient_dim");
        for (const auto& a : atoms_) {
            require_dims(a.location.size() == ambient_dim_, "atom dimension differs from ambient dimension");
            require(a.weight >= 0.0, "atom weight must be nonnegative");
        }
        if (!atoms_.empty()) {
            const double m = total_mass();
            require(std::abs(m - 1.0) <= kMassTolerance, "measure is not a probability measure (mass " + std::to_string(m) + ")");
        }
    }

    std::vector<Atom> atoms_;
    std::size_t ambient_dim_ = 1;
    std::size_t split_ = 0;
};

using PointMap = std::function<Point(std::span<const double>)>;

/// f_# mu: same weights, locations mapped by f, order preserved. `split` is the
/// coordinate split of the image space; 0 keeps the source split (capped at the image
/// dimension).
inline DiscreteMeasure pushforward(const DiscreteMeasure& mu, const PointMap& f, std::size_t split = 0) {
    require(!mu.empty(), "pushforward of an empty measure");
    std::vector<Atom> atoms;
    atoms.reserve(mu.size());
    std::size_t dim = 0;
    for (const auto& a : mu.atoms()) {
        Point p = f(a.location);
        if (atoms.empty()) dim = p.size();
        require_dims(p.size() == dim, "pushforward map returned inconsistent dimensions");
        atoms.push_back({std::move(p), a.weight});
    }
    return DiscreteMeasure(std::move(atoms), dim, split == 0 ? std::min(mu.split(), dim) : split);
}

/// mu (x) nu: atom (s, r) has weight w_s * w_r, ordered with nu's index varying fastest.
/// The coordinate split of the product is that of the first factor.
inline DiscreteMeasure product_measure(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
    require(!mu.empty() && !nu.empty(), "product of an empty measure");
    std::vector<Atom> atoms;
    atoms.reserve(mu.size() * nu.size());
    for (const auto& s : mu.atoms()) {
        for (const auto& r : nu.atoms()) {
            Point p = s.location;
            p.insert(p.end(), r.location.begin(), r.location.end());
            atoms.push_back({std::move(p), s.weight * r.weight});
        }
    }
    return DiscreteMeasure(std::move(atoms), mu.ambient_dim() + nu.ambient_dim(), mu.split());
}

/// <mu, phi> = sum_j w_j phi(z_j).
inline Vector pair_with_test(const DiscreteMeasure& mu, const PointMap& phi) {
    Vector acc;
    for (const auto& a : mu.atoms()) {
        const Point v = phi(a.location);
        if (acc.empty()) acc.assign(v.size(), 0.0);
        require_dims(v.size() == acc.size(), "test function returned inconsistent dimensions");
        for (std::size_t i = 0; i < v.size(); ++i) acc[i] += a.weight * v[i];
    }
    return acc;
}

enum class Factor { first, second };

/// Marginal of a product measure under rho_1 (first `factor_dim` coordinates) or
/// rho_2 (the rest). Atoms at identical locations are merged (first occurrence order).
inline DiscreteMeasure marginal(const DiscreteMeasure& prod, Factor which, std::size_t factor_dim,
                                std::size_t marginal_split) {
    require_dims(factor_dim > 0 && factor_dim < prod.ambient_dim(), "bad product split");
    const std::size_t begin = which == Factor::first ? 0 : factor_dim;
    const std::size_t end = which == Factor::first ? factor_dim : prod.ambient_dim();
    std::map<Point, std::size_t> index;
    std::vector<Atom> merged;
    for (const auto& a : prod.atoms()) {
        Point p(a.location.begin() + static_cast<std::ptrdiff_t>(begin),
                a.location.begin() + static_cast<std::ptrdiff_t>(end));
        auto [it, inserted] = index.try_emplace(p, merged.size());
        if (inserted)
            merged.push_back({std::move(p), a.weight});
        else
            merged[it->second].weight += a.weight;
    }
    return DiscreteMeasure(std::move(merged), end - begin, marginal_split);
}

inline nlohmann::json to_json(const DiscreteMeasure& mu) {
    nlohmann::json atoms = nlohmann::json::array();
    for (const auto& a : mu.atoms()) atoms.push_back({{"x", a.location}, {"w", a.weight}});
    return {{"dim", mu.ambient_dim()}, {"split", mu.split()}, {"atoms", atoms}};
}

inline DiscreteMeasure measure_from_json(const nlohmann::json& j) {
    const auto dim = j.at("dim").get<std::size_t>();
    const auto split = j.at("split").get<std::size_t>();
    std::vector<Atom> atoms;
    for (const auto& a : j.at("atoms")) atoms.push_back({a.at("x").get<Point>(), a.at("w").get<double>()});
    return DiscreteMeasure(std::move(atoms), dim, split);
}

}  // namespace fgt
