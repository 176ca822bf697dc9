#pragma once

// Exact Wasserstein-1 distance between discrete measures.
//
// General case: primal network simplex on the complete bipartite transportation
// graph (spanning-tree basis with thread/successor bookkeeping, block-search pricing,
// strongly feasible leaving-arc rule). Uniform measures with equal atom counts use a
// shortest-augmenting-path Hungarian solver instead.

#include "fgt/measure.hpp"

#include <limits>

namespace fgt {

struct TransportEntry {
    std::size_t source_index = 0;
    std::size_t target_index = 0;
    double mass = 0.0;
};

struct TransportPlan {
    std::vector<TransportEntry> entries;
    double cost = 0.0;
};

struct W1Result {
    double distance = 0.0;
    TransportPlan plan;
};

namespace detail {

/// Dense cost matrix with Euclidean ground metric.
inline Matrix cost_matrix(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
    const Matrix a = mu.locations();
    const Matrix b = nu.locations();
    Matrix c(a.rows(), b.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < b.rows(); ++j) c(i, j) = (a.row(i) - b.row(j)).norm();
    return c;
}

/// Min-cost perfect matching on a square cost matrix (Jonker-Volgenant style
/// potentials). Returns assignment[row] = column.
inline std::vector<std::size_t> hungarian(const Matrix& cost) {
    const auto n = static_cast<std::size_t>(cost.rows());
    constexpr double inf = std::numeric_limits<double>::infinity();
    // 1-based arrays; column 0 is the virtual start.
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
    std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
    std::vector<char> used(n + 1);
    for (std::size_t i = 1; i <= n; ++i) {
        p[0] = i;
        std::size_t j0 = 0;
        std::fill(minv.begin(), minv.end(), inf);
        std::fill(used.begin(), used.end(), 0);
        do {
            used[j0] = 1;
            const std::size_t i0 = p[j0];
            double delta = inf;
            std::size_t j1 = 0;
            for (std::size_t j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(static_cast<Eigen::Index>(i0 - 1), static_cast<Eigen::Index>(j - 1)) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (std::size_t j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const std::size_t j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0 != 0);
    }
    std::vector<std::size_t> assignment(n);
    for (std::size_t j = 1; j <= n; ++j) assignment[p[j] - 1] = j - 1;
    return assignment;
}

/// Uncapacitated transportation problem solved by the primal network simplex.
class NetworkSimplex {
public:
    NetworkSimplex(const Matrix& cost, const Vector& supply, const Vector& demand)
        : n_src_(supply.size()), n_dst_(demand.size()) {
        const std::size_t node_num = n_src_ + n_dst_;
        node_num_ = static_cast<int>(node_num);
        arc_num_ = static_cast<int>(n_src_ * n_dst_);
        const int all_arc_num = arc_num_ + node_num_;
        root_ = node_num_;

        source_.resize(static_cast<std::size_t>(all_arc_num));
        target_.resize(static_cast<std::size_t>(all_arc_num));
        cost_.resize(static_cast<std::size_t>(all_arc_num));
        flow_.assign(static_cast<std::size_t>(all_arc_num), 0.0);
        state_.assign(static_cast<std::size_t>(all_arc_num), kStateLower);

        double max_cost = 0.0;
        for (std::size_t i = 0; i < n_src_; ++i) {
            for (std::size_t j = 0; j < n_dst_; ++j) {
                const auto a = i * n_dst_ + j;
                source_[a] = static_cast<int>(i);
                target_[a] = static_cast<int>(n_src_ + j);
                cost_[a] = cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                max_cost = std::max(max_cost, cost_[a]);
            }
        }
        cost_scale_ = std::max(max_cost, 1e-300);
        const double art_cost = (max_cost + 1.0) * static_cast<double>(node_num);

        std::vector<double> node_supply(node_num + 1, 0.0);
        for (std::size_t i = 0; i < n_src_; ++i) node_supply[i] = supply[i];
        for (std::size_t j = 0; j < n_dst_; ++j) node_supply[n_src_ + j] = -demand[j];

        const auto nn = static_cast<std::size_t>(node_num_) + 1;
        parent_.assign(nn, -1);
        pred_.assign(nn, -1);
        thread_.assign(nn, 0);
        rev_thread_.assign(nn, 0);
        succ_num_.assign(nn, 0);
        last_succ_.assign(nn, 0);
        pred_dir_.assign(nn, kDirUp);
        pi_.assign(nn, 0.0);

        const auto r = static_cast<std::size_t>(root_);
        parent_[r] = -1;
        pred_[r] = -1;
        thread_[r] = 0;
        rev_thread_[0] = root_;
        succ_num_[r] = node_num_ + 1;
        last_succ_[r] = root_ - 1;
        pi_[r] = 0.0;

        for (int u = 0, e = arc_num_; u != node_num_; ++u, ++e) {
            const auto uu = static_cast<std::size_t>(u);
            const auto ee = static_cast<std::size_t>(e);
            parent_[uu] = root_;
            pred_[uu] = e;
            thread_[uu] = u + 1;
            rev_thread_[static_cast<std::size_t>(u + 1)] = u;
            succ_num_[uu] = 1;
            last_succ_[uu] = u;
            state_[ee] = kStateTree;
            if (node_supply[uu] >= 0.0) {
                pred_dir_[uu] = kDirUp;
                pi_[uu] = 0.0;
                source_[ee] = u;
                target_[ee] = root_;
                flow_[ee] = node_supply[uu];
                cost_[ee] = 0.0;
            } else {
                pred_dir_[uu] = kDirDown;
                pi_[uu] = art_cost;
                source_[ee] = root_;
                target_[ee] = u;
                flow_[ee] = -node_supply[uu];
                cost_[ee] = art_cost;
            }
        }
        block_size_ = std::max(10, static_cast<int>(std::sqrt(static_cast<double>(arc_num_))));
    }

    void run(std::size_t max_iterations = 0) {
        if (max_iterations == 0) max_iterations = 100 * static_cast<std::size_t>(arc_num_ + node_num_) + 1000;
        std::size_t it = 0;
        while (find_entering_arc()) {
            if (++it > max_iterations) throw NumericalError("network simplex did not converge");
            find_join_node();
            find_leaving_arc();
            change_flow();
            update_tree_structure();
            update_potential();
        }
        for (int e = arc_num_; e < arc_num_ + node_num_; ++e) {
            if (flow_[static_cast<std::size_t>(e)] > 1e-9)
                throw NumericalError("transport problem infeasible (unbalanced masses)");
        }
    }

    [[nodiscard]] double flow(std::size_t i, std::size_t j) const { return flow_[i * n_dst_ + j]; }

private:
    static constexpr int kStateLower = 1;
    static constexpr int kStateTree = 0;
    static constexpr int kDirUp = 1;
    static constexpr int kDirDown = -1;

    [[nodiscard]] double reduced(int e) const {
        const auto ee = static_cast<std::size_t>(e);
        return static_cast<double>(state_[ee]) *
               (cost_[ee] + pi_[static_cast<std::size_t>(source_[ee])] - pi_[static_cast<std::size_t>(target_[ee])]);
    }

    bool find_entering_arc() {
        const double threshold = -1e-11 * cost_scale_;
        double min = 0.0;
        int cnt = block_size_;
        int e = next_arc_;
        for (; e != arc_num_; ++e) {
            const double c = reduced(e);
            if (c < min) {
                min = c;
                in_arc_ = e;
            }
            if (--cnt == 0) {
                if (min < threshold) {
                    next_arc_ = e + 1 == arc_num_ ? 0 : e + 1;
                    return true;
                }
                cnt = block_size_;
            }
        }
        for (e = 0; e != next_arc_; ++e) {
            const double c = reduced(e);
            if (c < min) {
                min = c;
                in_arc_ = e;
            }
            if (--cnt == 0) {
                if (min < threshold) {
                    next_arc_ = e + 1;
                    return true;
                }
                cnt = block_size_;
            }
        }
        return min < threshold;
    }

    void find_join_node() {
        int u = source_[static_cast<std::size_t>(in_arc_)];
        int v = target_[static_cast<std::size_t>(in_arc_)];
        while (u != v) {
            if (succ_num_[static_cast<std::size_t>(u)] < succ_num_[static_cast<std::size_t>(v)])
                u = parent_[static_cast<std::size_t>(u)];
            else
                v = parent_[static_cast<std::size_t>(v)];
        }
        join_ = u;
    }

    void find_leaving_arc() {
        // Entering arcs are always at their lower bound (no capacities).
        const int first = source_[static_cast<std::size_t>(in_arc_)];
        const int second = target_[static_cast<std::size_t>(in_arc_)];
        delta_ = std::numeric_limits<double>::infinity();
        int result = 0;
        for (int u = first; u != join_; u = parent_[static_cast<std::size_t>(u)]) {
            const auto uu = static_cast<std::size_t>(u);
            if (pred_dir_[uu] == kDirDown) continue;  // flow increases on this arc
            const double d = flow_[static_cast<std::size_t>(pred_[uu])];
            if (d < delta_) {
                delta_ = d;
                u_out_ = u;
                result = 1;
            }
        }
        for (int u = second; u != join_; u = parent_[static_cast<std::size_t>(u)]) {
            const auto uu = static_cast<std::size_t>(u);
            if (pred_dir_[uu] == kDirUp) continue;
            const double d = flow_[static_cast<std::size_t>(pred_[uu])];
            if (d <= delta_) {
                delta_ = d;
                u_out_ = u;
                result = 2;
            }
        }
        if (result == 0) throw NumericalError("unbounded transport cycle");
        if (result == 1) {
            u_in_ = first;
            v_in_ = second;
        } else {
            u_in_ = second;
            v_in_ = first;
        }
    }

    void change_flow() {
        if (delta_ > 0.0) {
            const double val = delta_;
            flow_[static_cast<std::size_t>(in_arc_)] += val;
            for (int u = source_[static_cast<std::size_t>(in_arc_)]; u != join_; u = parent_[static_cast<std::size_t>(u)]) {
                const auto uu = static_cast<std::size_t>(u);
                flow_[static_cast<std::size_t>(pred_[uu])] -= pred_dir_[uu] * val;
            }
            for (int u = target_[static_cast<std::size_t>(in_arc_)]; u != join_; u = parent_[static_cast<std::size_t>(u)]) {
                const auto uu = static_cast<std::size_t>(u);
                flow_[static_cast<std::size_t>(pred_[uu])] += pred_dir_[uu] * val;
            }
        }
        state_[static_cast<std::size_t>(in_arc_)] = kStateTree;
        const auto out_arc = static_cast<std::size_t>(pred_[static_cast<std::size_t>(u_out_)]);
        flow_[out_arc] = 0.0;
        state_[out_arc] = kStateLower;
    }

    void update_tree_structure() {
        auto at = [](std::vector<int>& v, int i) -> int& { return v[static_cast<std::size_t>(i)]; };

        const int old_rev_thread = at(rev_thread_, u_out_);
        const int old_succ_num = at(succ_num_, u_out_);
        const int old_last_succ = at(last_succ_, u_out_);
        v_out_ = at(parent_, u_out_);

        if (u_in_ == u_out_) {
            at(parent_, u_in_) = v_in_;
            at(pred_, u_in_) = in_arc_;
            at(pred_dir_, u_in_) = u_in_ == source_[static_cast<std::size_t>(in_arc_)] ? kDirUp : kDirDown;
            if (at(thread_, v_in_) != u_out_) {
                int after = at(thread_, old_last_succ);
                at(thread_, old_rev_thread) = after;
                at(rev_thread_, after) = old_rev_thread;
                after = at(thread_, v_in_);
                at(thread_, v_in_) = u_out_;
                at(rev_thread_, u_out_) = v_in_;
                at(thread_, old_last_succ) = after;
                at(rev_thread_, after) = old_last_succ;
            }
        } else {
            const int thread_continue = old_rev_thread == v_in_ ? at(thread_, old_last_succ) : at(thread_, v_in_);

            int stem = u_in_;
            int par_stem = v_in_;
            int last = at(last_succ_, u_in_);
            int after = at(thread_, last);
            at(thread_, v_in_) = u_in_;
            dirty_revs_.clear();
            dirty_revs_.push_back(v_in_);
            while (stem != u_out_) {
                const int next_stem = at(parent_, stem);
                at(thread_, last) = next_stem;
                dirty_revs_.push_back(last);

                const int before = at(rev_thread_, stem);
                at(thread_, before) = after;
                at(rev_thread_, after) = before;

                at(parent_, stem) = par_stem;
                par_stem = stem;
                stem = next_stem;

                last = at(last_succ_, stem) == at(last_succ_, par_stem) ? at(rev_thread_, par_stem) : at(last_succ_, stem);
                after = at(thread_, last);
            }
            at(parent_, u_out_) = par_stem;
            at(thread_, last) = thread_continue;
            at(rev_thread_, thread_continue) = last;
            at(last_succ_, u_out_) = last;

            if (old_rev_thread != v_in_) {
                at(thread_, old_rev_thread) = after;
                at(rev_thread_, after) = old_rev_thread;
            }

            for (const int u : dirty_revs_) at(rev_thread_, at(thread_, u)) = u;

            int tmp_sc = 0;
            const int tmp_ls = at(last_succ_, u_out_);
            for (int u = u_out_, p = at(parent_, u); u != u_in_; u = p, p = at(parent_, u)) {
                at(pred_, u) = at(pred_, p);
                at(pred_dir_, u) = -at(pred_dir_, p);
                tmp_sc += at(succ_num_, u) - at(succ_num_, p);
                at(succ_num_, u) = tmp_sc;
                at(last_succ_, p) = tmp_ls;
            }
            at(pred_, u_in_) = in_arc_;
            at(pred_dir_, u_in_) = u_in_ == source_[static_cast<std::size_t>(in_arc_)] ? kDirUp : kDirDown;
            at(succ_num_, u_in_) = old_succ_num;
        }

        const int up_limit_out = at(last_succ_, join_) == v_in_ ? join_ : -1;
        const int last_succ_out = at(last_succ_, u_out_);
        for (int u = v_in_; u != -1 && at(last_succ_, u) == v_in_; u = at(parent_, u)) at(last_succ_, u) = last_succ_out;

        if (join_ != old_rev_thread && v_in_ != old_rev_thread) {
            for (int u = v_out_; u != up_limit_out && at(last_succ_, u) == old_last_succ; u = at(parent_, u))
                at(last_succ_, u) = old_rev_thread;
        } else if (last_succ_out != old_last_succ) {
            for (int u = v_out_; u != up_limit_out && at(last_succ_, u) == old_last_succ; u = at(parent_, u))
                at(last_succ_, u) = last_succ_out;
        }

        for (int u = v_in_; u != join_; u = at(parent_, u)) at(succ_num_, u) += old_succ_num;
        for (int u = v_out_; u != join_; u = at(parent_, u)) at(succ_num_, u) -= old_succ_num;
    }

    void update_potential() {
        const auto in = static_cast<std::size_t>(in_arc_);
        const auto ui = static_cast<std::size_t>(u_in_);
        const double sigma = pi_[static_cast<std::size_t>(v_in_)] - pi_[ui] - pred_dir_[ui] * cost_[in];
        const int end = thread_[static_cast<std::size_t>(last_succ_[ui])];
        for (int u = u_in_; u != end; u = thread_[static_cast<std::size_t>(u)]) pi_[static_cast<std::size_t>(u)] += sigma;
    }

    std::size_t n_src_;
    std::size_t n_dst_;
    int node_num_ = 0;
    int arc_num_ = 0;
    int root_ = 0;
    int block_size_ = 10;
    int next_arc_ = 0;
    double cost_scale_ = 1.0;

    std::vector<int> source_, target_;
    std::vector<double> cost_, flow_;
    std::vector<int> state_;

    std::vector<int> parent_, pred_, thread_, rev_thread_, succ_num_, last_succ_, pred_dir_;
    std::vector<double> pi_;
    std::vector<int> dirty_revs_;

    int in_arc_ = 0, join_ = 0, u_in_ = 0, v_in_ = 0, u_out_ = 0, v_out_ = 0;
    double delta_ = 0.0;
};

inline bool is_uniform(const DiscreteMeasure& mu) {
    const double w = 1.0 / static_cast<double>(mu.size());
    for (const auto& a : mu.atoms())
        if (std::abs(a.weight - w) > 1e-15) return false;
    return true;
}

}  // namespace detail

/// Exact W1 distance and an optimal plan under the Euclidean ground metric.
inline W1Result w1_distance(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
    require(!mu.empty() && !nu.empty(), "w1_distance of an empty measure");
    require_dims(mu.ambient_dim() == nu.ambient_dim(), "w1_distance: ambient dimensions differ");
    const Matrix cost = detail::cost_matrix(mu, nu);

    W1Result out;
    if (mu.size() == nu.size() && detail::is_uniform(mu) && detail::is_uniform(nu)) {
        const auto assignment = detail::hungarian(cost);
        const double w = 1.0 / static_cast<double>(mu.size());
        for (std::size_t i = 0; i < assignment.size(); ++i) {
            out.plan.entries.push_back({i, assignment[i], w});
            out.plan.cost += w * cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(assignment[i]));
        }
    } else {
        detail::NetworkSimplex solver(cost, mu.weights(), nu.weights());
        solver.run();
        for (std::size_t i = 0; i < mu.size(); ++i) {
            for (std::size_t j = 0; j < nu.size(); ++j) {
                const double f = solver.flow(i, j);
                if (f > 0.0) {
                    out.plan.entries.push_back({i, j, f});
                    out.plan.cost += f * cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                }
            }
        }
    }
    out.distance = out.plan.cost;
    return out;
}

/// General-case solver regardless of weights (used to cross-check the assignment route).
inline W1Result w1_distance_simplex(const DiscreteMeasure& mu, const DiscreteMeasure& nu) {
    require(!mu.empty() && !nu.empty(), "w1_distance of an empty measure");
    require_dims(mu.ambient_dim() == nu.ambient_dim(), "w1_distance: ambient dimensions differ");
    const Matrix cost = detail::cost_matrix(mu, nu);
    detail::NetworkSimplex solver(cost, mu.weights(), nu.weights());
    solver.run();
    W1Result out;
    for (std::size_t i = 0; i < mu.size(); ++i) {
        for (std::size_t j = 0; j < nu.size(); ++j) {
            const double f = solver.flow(i, j);
            if (f > 0.0) {
                out.plan.entries.push_back({i, j, f});
                out.plan.cost += f * cost(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
            }
        }
    }
    out.distance = out.plan.cost;
    return out;
}

}  // namespace fgt
