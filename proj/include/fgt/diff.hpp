#pragma once

// Matrix-valued reverse-mode differentiation. Model code is written once against an
// "Ops" policy: EvalOps computes plain matrices, TapeOps records a tape that can be
// differentiated. Both expose the same primitive set.

#include "fgt/spectral.hpp"

#include <functional>
#include <unordered_map>

namespace fgt {

namespace detail {

/// Row-wise softmax of logits against nonnegative column weights:
/// p_ij = w_j exp(l_ij) / sum_k w_k exp(l_ik), stabilised by the row max.
inline Matrix weighted_softmax(const Matrix& logits, const Vector& weights) {
    require_dims(static_cast<std::size_t>(logits.cols()) == weights.size(), "softmax weights/logits mismatch");
    Matrix p(logits.rows(), logits.cols());
    for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        double m = -std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < logits.cols(); ++j)
            if (weights[static_cast<std::size_t>(j)] > 0.0) m = std::max(m, logits(i, j));
        double den = 0.0;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
            const double w = weights[static_cast<std::size_t>(j)];
            const double e = w > 0.0 ? w * std::exp(logits(i, j) - m) : 0.0;
            p(i, j) = e;
            den += e;
        }
        p.row(i) /= std::max(den, 1e-300);
    }
    return p;
}

inline Matrix weighted_row_sum(const Matrix& a, const Vector& weights) {
    require_dims(static_cast<std::size_t>(a.rows()) == weights.size(), "row weights mismatch");
    Matrix out = Matrix::Zero(1, a.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) out.row(0) += weights[static_cast<std::size_t>(i)] * a.row(i);
    return out;
}

inline void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    require_dims(a.rows() == b.rows() && a.cols() == b.cols(), std::string(what) + ": shape mismatch");
}

}  // namespace detail

/// Forward-only evaluation.
struct EvalOps {
    using Value = Matrix;

    Value param(const Matrix& m) { return m; }
    Value constant(const Matrix& m) { return m; }
    static const Matrix& value(const Value& v) { return v; }

    Value matmul(const Value& a, const Value& b) {
        require_dims(a.cols() == b.rows(), "matmul: inner dimensions differ");
        return a * b;
    }
    Value matmul_nt(const Value& a, const Value& b) {
        require_dims(a.cols() == b.cols(), "matmul_nt: inner dimensions differ");
        return a * b.transpose();
    }
    Value add(const Value& a, const Value& b) {
        detail::check_same_shape(a, b, "add");
        return a + b;
    }
    Value sub(const Value& a, const Value& b) {
        detail::check_same_shape(a, b, "sub");
        return a - b;
    }
    Value mul(const Value& a, const Value& b) {
        detail::check_same_shape(a, b, "mul");
        return a.cwiseProduct(b);
    }
    Value scale(const Value& a, double s) { return a * s; }
    Value add_row(const Value& a, const Value& row) {
        require_dims(row.rows() == 1 && row.cols() == a.cols(), "add_row: row shape mismatch");
        Matrix out = a;
        out.rowwise() += row.row(0);
        return out;
    }
    Value broadcast_rows(const Value& row, Eigen::Index n) {
        require_dims(row.rows() == 1, "broadcast_rows needs a single row");
        return row.replicate(n, 1);
    }
    Value tanh(const Value& a) { return a.array().tanh().matrix(); }
    Value exp(const Value& a) { return a.array().exp().matrix(); }
    Value measure_softmax(const Value& logits, const Vector& weights) { return detail::weighted_softmax(logits, weights); }
    Value weighted_rows(const Value& a, const Vector& weights) { return detail::weighted_row_sum(a, weights); }
    Value smooth_clip(const Value& a, const SmoothClip& clip) { return a.unaryExpr([&](double y) { return clip(y); }); }
    Value concat_cols(const Value& a, const Value& b) {
        require_dims(a.rows() == b.rows(), "concat_cols: row counts differ");
        Matrix out(a.rows(), a.cols() + b.cols());
        out << a, b;
        return out;
    }
    Value slice_cols(const Value& a, Eigen::Index start, Eigen::Index count) {
        require_dims(start >= 0 && count >= 0 && start + count <= a.cols(), "slice_cols out of range");
        return a.middleCols(start, count);
    }
    Value sum(const Value& a) { return Matrix::Constant(1, 1, a.sum()); }
};

class Tape {
public:
    struct Node {
        Matrix value;
        Matrix grad;
        std::function<void(Tape&, const Matrix&)> backward;
    };

    std::size_t push(Matrix value, std::function<void(Tape&, const Matrix&)> backward = {}) {
        nodes_.push_back({std::move(value), Matrix(), std::move(backward)});
        return nodes_.size() - 1;
    }

    [[nodiscard]] const Matrix& value(std::size_t i) const { return nodes_[i].value; }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

    void accumulate(std::size_t i, const Matrix& g) {
        auto& n = nodes_[i];
        if (n.grad.size() == 0)
            n.grad = g;
        else
            n.grad += g;
    }

    /// Gradient of node `i` after backward(); zeros if it never received one.
    [[nodiscard]] Matrix grad(std::size_t i) const {
        const auto& n = nodes_[i];
        return n.grad.size() == 0 ? Matrix::Zero(n.value.rows(), n.value.cols()) : n.grad;
    }

    /// Seeds d(out)/d(out) = 1 for a 1x1 node and sweeps the tape in reverse.
    void backward(std::size_t out) {
        require_dims(nodes_[out].value.size() == 1, "backward needs a scalar output");
        for (auto& n : nodes_) n.grad.resize(0, 0);
        nodes_[out].grad = Matrix::Ones(1, 1);
        for (std::size_t i = out + 1; i-- > 0;) {
            auto& n = nodes_[i];
            if (n.grad.size() == 0 || !n.backward) continue;
            const Matrix g = n.grad;
            n.backward(*this, g);
        }
    }

private:
    std::vector<Node> nodes_;
};

struct Var {
    std::size_t index = 0;
};

/// Recording evaluation. Parameters are identified by address, so using the same
/// matrix twice yields one node whose gradient accumulates.
class TapeOps {
public:
    using Value = Var;

    Tape& tape() { return tape_; }

    Value param(const Matrix& m) {
        auto [it, inserted] = params_.try_emplace(&m, 0);
        if (inserted) it->second = tape_.push(m);
        return {it->second};
    }
    Value constant(const Matrix& m) { return {tape_.push(m)}; }
    [[nodiscard]] const Matrix& value(const Value& v) const { return tape_.value(v.index); }

    void backward(const Value& out) { tape_.backward(out.index); }

    /// d(out)/d(param) for a matrix passed to param(); zeros if it was never used.
    [[nodiscard]] Matrix grad(const Matrix& m) const {
        const auto it = params_.find(&m);
        if (it == params_.end()) return Matrix::Zero(m.rows(), m.cols());
        return tape_.grad(it->second);
    }

    Value matmul(const Value& a, const Value& b) {
        const std::size_t ia = a.index, ib = b.index;
        return record(EvalOps().matmul(value(a), value(b)), [ia, ib](Tape& t, const Matrix& g) {
            t.accumulate(ia, g * t.value(ib).transpose());
            t.accumulate(ib, t.value(ia).transpose() * g);
        });
    }
    Value matmul_nt(const Value& a, const Value& b) {
        const std::size_t ia = a.index, ib = b.index;
        return record(EvalOps().matmul_nt(value(a), value(b)), [ia, ib](Tape& t, const Matrix& g) {
            t.accumulate(ia, g * t.value(ib));
            t.accumulate(ib, g.transpose() * t.value(ia));
        });
    }
    Value add(const Value& a, const Value& b) {
        const std::size_t ia = a.index, ib = b.index;
        return record(EvalOps().add(value(a), value(b)), [ia, ib](Tape& t, const Matrix& g) {
            t.accumulate(ia, g);
            t.accumulate(ib, g);
        });
    }
    Value sub(const Value& a, const Value& b) {
        const std::size_t ia = a.index, ib = b.index;
        return record(EvalOps().sub(value(a), value(b)), [ia, ib](Tape& t, const Matrix& g) {
            t.accumulate(ia, g);
            t.accumulate(ib, -g);
        });
    }
    Value mul(const Value& a, const Value& b) {
        const std::size_t ia = a.index, ib = b.index;
        return record(EvalOps().mul(value(a), value(b)), [ia, ib](Tape& t, const Matrix& g) {
            t.accumulate(ia, g.cwiseProduct(t.value(ib)));
            t.accumulate(ib, g.cwiseProduct(t.value(ia)));
        });
    }
    Value scale(const Value& a, double s) {
        const std::size_t ia = a.index;
        return record(value(a) * s, [ia, s](Tape& t, const Matrix& g) { t.accumulate(ia, g * s); });
    }
    Value add_row(const Value& a, const Value& row) {
        const std::size_t ia = a.index, ir = row.index;
        return record(EvalOps().add_row(value(a), value(row)), [ia, ir](Tape& t, const Matrix& g) {
            t.accumulate(ia, g);
            t.accumulate(ir, g.colwise().sum());
        });
    }
    Value broadcast_rows(const Value& row, Eigen::Index n) {
        const std::size_t ir = row.index;
        return record(EvalOps().broadcast_rows(value(row), n),
                      [ir](Tape& t, const Matrix& g) { t.accumulate(ir, g.colwise().sum()); });
    }
    Value tanh(const Value& a) {
        const std::size_t ia = a.index;
        Matrix out = EvalOps().tanh(value(a));
        const std::size_t self = tape_.size();
        return record(std::move(out), [ia, self](Tape& t, const Matrix& g) {
            const Matrix& y = t.value(self);
            t.accumulate(ia, g.cwiseProduct((1.0 - y.array().square()).matrix()));
        });
    }
    Value exp(const Value& a) {
        const std::size_t ia = a.index;
        const std::size_t self = tape_.size();
        return record(EvalOps().exp(value(a)),
                      [ia, self](Tape& t, const Matrix& g) { t.accumulate(ia, g.cwiseProduct(t.value(self))); });
    }
    Value measure_softmax(const Value& logits, const Vector& weights) {
        const std::size_t il = logits.index;
        const std::size_t self = tape_.size();
        return record(detail::weighted_softmax(value(logits), weights), [il, self](Tape& t, const Matrix& g) {
            const Matrix& p = t.value(self);
            const Eigen::VectorXd inner = p.cwiseProduct(g).rowwise().sum();
            Matrix d = g;
            d.colwise() -= inner;
            t.accumulate(il, p.cwiseProduct(d));
        });
    }
    Value weighted_rows(const Value& a, const Vector& weights) {
        const std::size_t ia = a.index;
        return record(detail::weighted_row_sum(value(a), weights), [ia, weights](Tape& t, const Matrix& g) {
            Matrix d(static_cast<Eigen::Index>(weights.size()), g.cols());
            for (std::size_t i = 0; i < weights.size(); ++i) d.row(static_cast<Eigen::Index>(i)) = weights[i] * g.row(0);
            t.accumulate(ia, d);
        });
    }
    Value smooth_clip(const Value& a, const SmoothClip& clip) {
        const std::size_t ia = a.index;
        return record(EvalOps().smooth_clip(value(a), clip), [ia, clip](Tape& t, const Matrix& g) {
            t.accumulate(ia, g.cwiseProduct(t.value(ia).unaryExpr([&](double y) { return clip.derivative(y); })));
        });
    }
    Value concat_cols(const Value& a, const Value& b) {
        const std::size_t ia = a.index, ib = b.index;
        const Eigen::Index ca = value(a).cols(), cb = value(b).cols();
        return record(EvalOps().concat_cols(value(a), value(b)), [ia, ib, ca, cb](Tape& t, const Matrix& g) {
            t.accumulate(ia, g.leftCols(ca));
            t.accumulate(ib, g.rightCols(cb));
        });
    }
    Value slice_cols(const Value& a, Eigen::Index start, Eigen::Index count) {
        const std::size_t ia = a.index;
        const Eigen::Index rows = value(a).rows(), cols = value(a).cols();
        return record(EvalOps().slice_cols(value(a), start, count), [=](Tape& t, const Matrix& g) {
            Matrix d = Matrix::Zero(rows, cols);
            d.middleCols(start, count) = g;
            t.accumulate(ia, d);
        });
    }
    Value sum(const Value& a) {
        const std::size_t ia = a.index;
        const Eigen::Index rows = value(a).rows(), cols = value(a).cols();
        return record(EvalOps().sum(value(a)),
                      [=](Tape& t, const Matrix& g) { t.accumulate(ia, Matrix::Constant(rows, cols, g(0, 0))); });
    }

private:
    Value record(Matrix v, std::function<void(Tape&, const Matrix&)> back) {
        return {tape_.push(std::move(v), std::move(back))};
    }

    Tape tape_;
    std::unordered_map<const Matrix*, std::size_t> params_;
};

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::size_t entries = 0;
    std::size_t worst_param = 0;
    Eigen::Index worst_row = 0, worst_col = 0;
    double worst_analytic = 0.0, worst_numeric = 0.0;
};

/// Relative error |a - n| / max(|a|, |n|, floor); the floor keeps entries whose true
/// gradient is zero from dividing rounding noise by zero.
inline double relative_error(double analytic, double numeric, double floor = 1e-8) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares tape gradients of a scalar function with central differences.
/// `f(ops)` must build the scalar from ops.param(*params[i]) for each parameter.
template <class F>
GradCheckResult grad_check(const std::vector<Matrix*>& params, F&& f, double step = 1e-5, double floor = 1e-8) {
    TapeOps tape;
    const auto out = f(tape);
    tape.backward(out);
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (const Matrix* p : params) analytic.push_back(tape.grad(*p));

    GradCheckResult res;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Matrix& p = *params[pi];
        for (Eigen::Index r = 0; r < p.rows(); ++r)
            for (Eigen::Index c = 0; c < p.cols(); ++c) {
                const double saved = p(r, c);
                EvalOps eval;
                p(r, c) = saved + step;
                const double up = f(eval)(0, 0);
                p(r, c) = saved - step;
                const double down = f(eval)(0, 0);
                p(r, c) = saved;
                const double numeric = (up - down) / (2.0 * step);
                const double err = relative_error(analytic[pi](r, c), numeric, floor);
                ++res.entries;
                if (err > res.max_rel_error) {
                    res.max_rel_error = err;
                    res.worst_param = pi;
                    res.worst_row = r;
                    res.worst_col = c;
                    res.worst_analytic = analytic[pi](r, c);
                    res.worst_numeric = numeric;
                }
            }
    }
    return res;
}

}  // namespace fgt
