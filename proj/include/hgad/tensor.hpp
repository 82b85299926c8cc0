#pragma once

// Dense row-major tensors of doubles and a reverse-mode tape.
//
// Values are plain `Tensor`s. A `Tape` records every operation applied to
// `Var` handles and replays the recorded backward rules in reverse order.
// Trainable parameters enter the tape through `Tape::leaf`, and `backward`
// writes d(loss)/d(parameter) into the parameter's own gradient slot.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace hgad {

class DimensionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape, double fill = 0.0)
        : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
        check_shape();
    }

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (data_.size() != shape_size(shape_)) {
            throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                                 " does not match shape " + shape_string(shape_));
        }
    }

    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
        return Tensor({rows, cols}, fill);
    }

    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
        const std::size_t r = rows.size();
        const std::size_t c = r ? rows.begin()->size() : 0;
        std::vector<double> data;
        data.reserve(r * c);
        for (const auto& row : rows) {
            if (row.size() != c) throw DimensionError("ragged matrix literal");
            data.insert(data.end(), row.begin(), row.end());
        }
        return Tensor({r, c}, std::move(data));
    }

    static Tensor vector(std::vector<double> values) {
        const std::size_t n = values.size();
        return Tensor({n}, std::move(values));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }

    // Rank-1 tensors behave as column vectors.
    std::size_t rows() const noexcept { return shape_.empty() ? 1 : shape_[0]; }
    std::size_t cols() const noexcept {
        if (shape_.size() < 2) return 1;
        return data_.size() / shape_[0];
    }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols(), cols()}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols(), cols()}; }

    bool requires_grad() const noexcept { return requires_grad_; }
    void set_requires_grad(bool on) {
        requires_grad_ = on;
        if (on && !grad_) grad_.emplace(data_.size(), 0.0);
        if (!on) grad_.reset();
    }

    bool has_grad() const noexcept { return grad_.has_value(); }
    std::span<double> grad() {
        if (!grad_) throw std::logic_error("tensor has no gradient slot");
        return *grad_;
    }
    std::span<const double> grad() const {
        if (!grad_) throw std::logic_error("tensor has no gradient slot");
        return *grad_;
    }
    void zero_grad() {
        if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
    }

    Tensor reshaped(Shape shape) const {
        Tensor out(std::move(shape), data_);
        return out;
    }

    bool all_finite() const {
        return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
    }

private:
    void check_shape() const {
        for (std::size_t s : shape_) {
            if (s == 0) throw DimensionError("tensor dimensions must be positive, got " + shape_string(shape_));
        }
    }

    Shape shape_;
    std::vector<double> data_;
    bool requires_grad_ = false;
    std::optional<std::vector<double>> grad_;
};

class Tape;

/// Handle to a value recorded on a tape.
class Var {
public:
    Var() = default;

    Tape& tape() const { return *tape_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return tape_ != nullptr; }

    const Tensor& value() const;
    std::size_t rows() const { return value().rows(); }
    std::size_t cols() const { return value().cols(); }
    std::size_t size() const { return value().size(); }

private:
    friend class Tape;
    Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

    Tape* tape_ = nullptr;
    std::size_t id_ = 0;
};

class Tape {
public:
    using Backward = std::function<void(Tape&, std::span<const double> out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Registers a trainable tensor. Registering the same tensor twice yields the same node.
    /// The tape reads the tensor in place, so it must outlive the tape and stay unmodified until backward.
    Var leaf(Tensor& parameter) {
        if (auto it = leaves_.find(&parameter); it != leaves_.end()) return Var(this, it->second);
        Node node;
        node.external = &parameter;
        node.parameter = &parameter;
        node.needs_grad = parameter.requires_grad();
        nodes_.push_back(std::move(node));
        leaves_.emplace(&parameter, nodes_.size() - 1);
        return Var(this, nodes_.size() - 1);
    }

    /// Non-differentiable reference to an existing tensor (no copy).
    Var view(const Tensor& value) {
        Node node;
        node.external = &value;
        nodes_.push_back(std::move(node));
        return Var(this, nodes_.size() - 1);
    }

    Var constant(Tensor value) {
        Node node;
        node.value = std::move(value);
        nodes_.push_back(std::move(node));
        return Var(this, nodes_.size() - 1);
    }

    /// Records a derived value. `backward` runs only when some input needs a gradient.
    Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
        Node node;
        node.value = std::move(value);
        for (const Var& v : inputs) {
            if (v.tape_ != this) throw std::logic_error("operand recorded on a different tape");
            node.needs_grad = node.needs_grad || nodes_[v.id_].needs_grad;
        }
        if (node.needs_grad) node.backward = std::move(backward);
        nodes_.push_back(std::move(node));
        return Var(this, nodes_.size() - 1);
    }

    const Tensor& value(std::size_t id) const {
        const Node& node = nodes_[id];
        return node.external ? *node.external : node.value;
    }
    bool needs_grad(const Var& v) const { return nodes_[v.id_].needs_grad; }

    /// Gradient accumulator of a node during backward; empty when the node needs none.
    std::span<double> grad_of(const Var& v) {
        Node& node = nodes_[v.id_];
        if (!node.needs_grad) return {};
        if (node.grad.empty()) node.grad.assign(value(v.id_).size(), 0.0);
        return node.grad;
    }

    std::size_t size() const noexcept { return nodes_.size(); }

    /// Reverse sweep from a scalar loss. Every registered trainable leaf gets its
    /// gradient slot overwritten; leaves the loss does not reach end up with zeros.
    void backward(const Var& loss) {
        if (loss.tape_ != this) throw std::logic_error("loss recorded on a different tape");
        if (value(loss.id_).size() != 1) {
            throw DimensionError("backward needs a scalar loss, got shape " + shape_string(value(loss.id_).shape()));
        }
        for (Node& node : nodes_) std::fill(node.grad.begin(), node.grad.end(), 0.0);
        if (nodes_[loss.id_].needs_grad) {
            grad_of(loss)[0] = 1.0;
            for (std::size_t i = loss.id_ + 1; i-- > 0;) {
                Node& node = nodes_[i];
                if (!node.backward || node.grad.empty()) continue;
                // The closure may grow other nodes' grad buffers but never this one's.
                node.backward(*this, node.grad);
            }
        }
        for (Node& node : nodes_) {
            if (!node.parameter || !node.parameter->requires_grad()) continue;
            auto dst = node.parameter->grad();
            if (node.grad.empty()) {
                std::fill(dst.begin(), dst.end(), 0.0);
            } else {
                std::copy(node.grad.begin(), node.grad.end(), dst.begin());
            }
        }
    }

private:
    struct Node {
        Tensor value;
        const Tensor* external = nullptr;
        std::vector<double> grad;
        Backward backward;
        Tensor* parameter = nullptr;
        bool needs_grad = false;
    };

    std::vector<Node> nodes_;
    std::unordered_map<const Tensor*, std::size_t> leaves_;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, std::string_view op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

inline Shape matrix_shape(std::size_t rows, std::size_t cols) { return {rows, cols}; }

}  // namespace detail

inline Var matmul(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const std::size_t p = av.rows(), q = av.cols(), r = bv.cols();
    if (bv.rows() != q) {
        throw DimensionError("matmul: inner dimensions disagree, " + shape_string(av.shape()) + " x " +
                             shape_string(bv.shape()));
    }
    Tensor out = Tensor::matrix(p, r);
    const double* A = av.data().data();
    const double* B = bv.data().data();
    double* C = out.data().data();
    for (std::size_t i = 0; i < p; ++i) {
        for (std::size_t k = 0; k < q; ++k) {
            const double aik = A[i * q + k];
            if (aik == 0.0) continue;
            const double* brow = B + k * r;
            double* crow = C + i * r;
            for (std::size_t j = 0; j < r; ++j) crow[j] += aik * brow[j];
        }
    }
    return a.tape().record(std::move(out), {a, b}, [a, b, p, q, r](Tape& tape, std::span<const double> g) {
        const double* A = a.value().data().data();
        const double* B = b.value().data().data();
        if (auto ga = tape.grad_of(a); !ga.empty()) {
            for (std::size_t i = 0; i < p; ++i)
                for (std::size_t k = 0; k < q; ++k) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < r; ++j) acc += g[i * r + j] * B[k * r + j];
                    ga[i * q + k] += acc;
                }
        }
        if (auto gb = tape.grad_of(b); !gb.empty()) {
            for (std::size_t i = 0; i < p; ++i)
                for (std::size_t k = 0; k < q; ++k) {
                    const double aik = A[i * q + k];
                    if (aik == 0.0) continue;
                    for (std::size_t j = 0; j < r; ++j) gb[k * r + j] += aik * g[i * r + j];
                }
        }
    });
}

inline Var transpose(const Var& a) {
    const Tensor& av = a.value();
    const std::size_t r = av.rows(), c = av.cols();
    Tensor out = Tensor::matrix(c, r);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out(j, i) = av(i, j);
    return a.tape().record(std::move(out), {a}, [a, r, c](Tape& tape, std::span<const double> g) {
        auto ga = tape.grad_of(a);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j * r + i];
    });
}

inline Var add(const Var& a, const Var& b) {
    detail::require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    auto o = out.data();
    auto bv = b.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
    return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tape, std::span<const double> g) {
        for (const Var& v : {a, b}) {
            auto gv = tape.grad_of(v);
            for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += g[i];
        }
    });
}

inline Var sub(const Var& a, const Var& b) {
    detail::require_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    auto o = out.data();
    auto bv = b.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
    return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tape, std::span<const double> g) {
        auto ga = tape.grad_of(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
        auto gb = tape.grad_of(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    });
}

/// Elementwise product.
inline Var mul(const Var& a, const Var& b) {
    detail::require_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    auto o = out.data();
    auto bv = b.value().data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
    return a.tape().record(std::move(out), {a, b}, [a, b](Tape& tape, std::span<const double> g) {
        auto av = a.value().data();
        auto bv = b.value().data();
        auto ga = tape.grad_of(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
        auto gb = tape.grad_of(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
    });
}

inline Var scale(const Var& a, double factor) {
    Tensor out = a.value();
    for (double& v : out.data()) v *= factor;
    return a.tape().record(std::move(out), {a}, [a, factor](Tape& tape, std::span<const double> g) {
        auto ga = tape.grad_of(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += factor * g[i];
    });
}

namespace detail {

template <class F, class DF>
Var unary(const Var& a, F f, DF df_from_out) {
    Tensor out = a.value();
    for (double& v : out.data()) v = f(v);
    auto keep = std::make_shared<std::vector<double>>(out.values());
    return a.tape().record(std::move(out), {a}, [a, keep, df_from_out](Tape& tape, std::span<const double> g) {
        auto ga = tape.grad_of(a);
        auto x = a.value().data();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * df_from_out(x[i], (*keep)[i]);
    });
}

}  // namespace detail

inline Var relu(const Var& a) {
    return detail::unary(
        a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline double sigmoid_value(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Var sigmoid(const Var& a) {
    return detail::unary(a, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

inline Var tanh(const Var& a) {
    return detail::unary(
        a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var sqrt(const Var& a) {
    return detail::unary(
        a, [](double x) { return std::sqrt(x); }, [](double, double y) { return 0.5 / y; });
}

inline Var reciprocal(const Var& a) {
    return detail::unary(
        a, [](double x) { return 1.0 / x; }, [](double, double y) { return -y * y; });
}

/// Multiplies every entry of `a` by the single entry of `s`.
inline Var scale_by(const Var& a, const Var& s) {
    if (s.size() != 1) throw DimensionError("scale_by: factor must be a scalar, got " + shape_string(s.value().shape()));
    Tensor out = a.value();
    const double f = s.value()[0];
    for (double& v : out.data()) v *= f;
    return a.tape().record(std::move(out), {a, s}, [a, s](Tape& tape, std::span<const double> g) {
        const double f = s.value()[0];
        if (auto ga = tape.grad_of(a); !ga.empty())
            for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += f * g[i];
        if (auto gs = tape.grad_of(s); !gs.empty()) {
            const auto av = a.value().data();
            double acc = 0.0;
            for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * g[i];
            gs[0] += acc;
        }
    });
}

/// Concatenates two matrices side by side: [a | b].
inline Var concat_cols(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.rows() != bv.rows()) {
        throw DimensionError("concat_cols: row counts differ, " + shape_string(av.shape()) + " vs " +
                             shape_string(bv.shape()));
    }
    const std::size_t n = av.rows(), ca = av.cols(), cb = bv.cols();
    Tensor out = Tensor::matrix(n, ca + cb);
    for (std::size_t i = 0; i < n; ++i) {
        std::copy_n(av.row(i).begin(), ca, out.row(i).begin());
        std::copy_n(bv.row(i).begin(), cb, out.row(i).begin() + ca);
    }
    return a.tape().record(std::move(out), {a, b}, [a, b, n, ca, cb](Tape& tape, std::span<const double> g) {
        const std::size_t c = ca + cb;
        if (auto ga = tape.grad_of(a); !ga.empty())
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < ca; ++j) ga[i * ca + j] += g[i * c + j];
        if (auto gb = tape.grad_of(b); !gb.empty())
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < cb; ++j) gb[i * cb + j] += g[i * c + ca + j];
    });
}

/// Stacks two matrices vertically.
inline Var concat_rows(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.cols()) {
        throw DimensionError("concat_rows: column counts differ, " + shape_string(av.shape()) + " vs " +
                             shape_string(bv.shape()));
    }
    std::vector<double> data(av.values());
    data.insert(data.end(), bv.values().begin(), bv.values().end());
    Tensor out({av.rows() + bv.rows(), av.cols()}, std::move(data));
    const std::size_t split = av.size();
    return a.tape().record(std::move(out), {a, b}, [a, b, split](Tape& tape, std::span<const double> g) {
        auto ga = tape.grad_of(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
        auto gb = tape.grad_of(b);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[split + i];
    });
}

/// Rows [begin, end) of a matrix (or entries of a vector).
inline Var slice_rows(const Var& a, std::size_t begin, std::size_t end) {
    const Tensor& av = a.value();
    if (begin >= end || end > av.rows()) {
        throw DimensionError("slice_rows: range [" + std::to_string(begin) + "," + std::to_string(end) +
                             ") outside " + shape_string(av.shape()));
    }
    const std::size_t c = av.cols();
    std::vector<double> data(av.values().begin() + begin * c, av.values().begin() + end * c);
    Shape shape = av.rank() == 1 ? Shape{end - begin} : Shape{end - begin, c};
    Tensor out(std::move(shape), std::move(data));
    return a.tape().record(std::move(out), {a}, [a, begin, c](Tape& tape, std::span<const double> g) {
        auto ga = tape.grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[begin * c + i] += g[i];
    });
}

inline Var reshape(const Var& a, Shape shape) {
    if (shape_size(shape) != a.size()) {
        throw DimensionError("reshape: cannot view " + shape_string(a.value().shape()) + " as " +
                             shape_string(shape));
    }
    Tensor out = a.value().reshaped(std::move(shape));
    return a.tape().record(std::move(out), {a}, [a](Tape& tape, std::span<const double> g) {
        auto ga = tape.grad_of(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
    });
}

/// Selects rows by index (repeats allowed).
inline Var gather_rows(const Var& a, std::vector<std::size_t> index) {
    const Tensor& av = a.value();
    const std::size_t c = av.cols();
    if (index.empty()) throw DimensionError("gather_rows: empty index");
    std::vector<double> data;
    data.reserve(index.size() * c);
    for (std::size_t r : index) {
        if (r >= av.rows()) throw DimensionError("gather_rows: row " + std::to_string(r) + " out of range");
        data.insert(data.end(), av.row(r).begin(), av.row(r).end());
    }
    Shape shape = av.rank() == 1 ? Shape{index.size()} : Shape{index.size(), c};
    Tensor out(std::move(shape), std::move(data));
    return a.tape().record(std::move(out), {a},
                           [a, index = std::move(index), c](Tape& tape, std::span<const double> g) {
                               auto ga = tape.grad_of(a);
                               for (std::size_t k = 0; k < index.size(); ++k)
                                   for (std::size_t j = 0; j < c; ++j) ga[index[k] * c + j] += g[k * c + j];
                           });
}

/// Writes row k of `a` into row index[k] of an otherwise zero rows x cols matrix.
inline Var scatter_rows(const Var& a, std::vector<std::size_t> index, std::size_t rows) {
    const Tensor& av = a.value();
    if (index.size() != av.rows()) {
        throw DimensionError("scatter_rows: " + std::to_string(index.size()) + " indices for " +
                             std::to_string(av.rows()) + " rows");
    }
    const std::size_t c = av.cols();
    std::vector<bool> seen(rows, false);
    Tensor out = Tensor::matrix(rows, c);
    for (std::size_t k = 0; k < index.size(); ++k) {
        if (index[k] >= rows) throw DimensionError("scatter_rows: index out of range");
        if (seen[index[k]]) throw DimensionError("scatter_rows: duplicate index " + std::to_string(index[k]));
        seen[index[k]] = true;
        std::copy_n(av.row(k).begin(), c, out.row(index[k]).begin());
    }
    return a.tape().record(std::move(out), {a},
                           [a, index = std::move(index), c](Tape& tape, std::span<const double> g) {
                               auto ga = tape.grad_of(a);
                               for (std::size_t k = 0; k < index.size(); ++k)
                                   for (std::size_t j = 0; j < c; ++j) ga[k * c + j] += g[index[k] * c + j];
                           });
}

/// Multiplies row i of `a` by the scalar `s[i]`.
inline Var mul_rows(const Var& a, const Var& s) {
    const Tensor& av = a.value();
    if (s.size() != av.rows()) {
        throw DimensionError("mul_rows: " + std::to_string(s.size()) + " scales for " +
                             std::to_string(av.rows()) + " rows");
    }
    const std::size_t n = av.rows(), c = av.cols();
    Tensor out = av;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out(i, j) *= s.value()[i];
    return a.tape().record(std::move(out), {a, s}, [a, s, n, c](Tape& tape, std::span<const double> g) {
        const Tensor& av = a.value();
        const Tensor& sv = s.value();
        if (auto ga = tape.grad_of(a); !ga.empty())
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i * c + j] * sv[i];
        if (auto gs = tape.grad_of(s); !gs.empty())
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < c; ++j) acc += g[i * c + j] * av[i * c + j];
                gs[i] += acc;
            }
    });
}

/// Dot product of matching rows: out[i] = <a_i, b_i>. Result is a vector.
inline Var rowwise_dot(const Var& a, const Var& b) {
    detail::require_same_shape(a.value(), b.value(), "rowwise_dot");
    const std::size_t n = a.value().rows(), c = a.value().cols();
    Tensor out({n}, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += a.value()(i, j) * b.value()(i, j);
        out[i] = acc;
    }
    return a.tape().record(std::move(out), {a, b}, [a, b, n, c](Tape& tape, std::span<const double> g) {
        const auto av = a.value().data();
        const auto bv = b.value().data();
        if (auto ga = tape.grad_of(a); !ga.empty())
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[i] * bv[i * c + j];
        if (auto gb = tape.grad_of(b); !gb.empty())
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) gb[i * c + j] += g[i] * av[i * c + j];
    });
}

/// Row-wise sum-pool: adds all rows of an n x d matrix into one 1 x d row.
inline Var sum_rows(const Var& a) {
    const Tensor& av = a.value();
    const std::size_t n = av.rows(), c = av.cols();
    Tensor out = Tensor::matrix(1, c);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j] += av(i, j);
    return a.tape().record(std::move(out), {a}, [a, n, c](Tape& tape, std::span<const double> g) {
        auto ga = tape.grad_of(a);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += g[j];
    });
}

inline Var sum(const Var& a) {
    double total = 0.0;
    for (double v : a.value().data()) total += v;
    return a.tape().record(Tensor({1}, total), {a}, [a](Tape& tape, std::span<const double> g) {
        auto ga = tape.grad_of(a);
        for (double& v : ga) v += g[0];
    });
}

inline Var mean_squared_error(const Var& prediction, const Var& target) {
    detail::require_same_shape(prediction.value(), target.value(), "mean_squared_error");
    const auto p = prediction.value().data();
    const auto t = target.value().data();
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) total += (p[i] - t[i]) * (p[i] - t[i]);
    const double n = static_cast<double>(p.size());
    return prediction.tape().record(
        Tensor({1}, total / n), {prediction, target}, [prediction, target, n](Tape& tape, std::span<const double> g) {
            const auto p = prediction.value().data();
            const auto t = target.value().data();
            if (auto gp = tape.grad_of(prediction); !gp.empty())
                for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[0] * 2.0 * (p[i] - t[i]) / n;
            if (auto gt = tape.grad_of(target); !gt.empty())
                for (std::size_t i = 0; i < gt.size(); ++i) gt[i] -= g[0] * 2.0 * (p[i] - t[i]) / n;
        });
}

/// Mean binary cross-entropy of probabilities against {0,1} labels.
inline Var binary_cross_entropy(const Var& probability, const Var& label) {
    detail::require_same_shape(probability.value(), label.value(), "binary_cross_entropy");
    static constexpr double kClamp = 1e-12;
    const auto p = probability.value().data();
    const auto y = label.value().data();
    double total = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = std::clamp(p[i], kClamp, 1.0 - kClamp);
        total -= y[i] * std::log(q) + (1.0 - y[i]) * std::log(1.0 - q);
    }
    const double n = static_cast<double>(p.size());
    return probability.tape().record(
        Tensor({1}, total / n), {probability}, [probability, label, n](Tape& tape, std::span<const double> g) {
            const auto p = probability.value().data();
            const auto y = label.value().data();
            auto gp = tape.grad_of(probability);
            for (std::size_t i = 0; i < gp.size(); ++i) {
                const double q = std::clamp(p[i], kClamp, 1.0 - kClamp);
                gp[i] += g[0] * (-(y[i] / q) + (1.0 - y[i]) / (1.0 - q)) / n;
            }
        });
}

/// A partition of score indices into softmax groups.
using Groups = std::vector<std::vector<std::size_t>>;

inline void validate_partition(const Groups& groups, std::size_t count) {
    std::vector<bool> seen(count, false);
    std::size_t covered = 0;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        if (groups[g].empty()) throw DimensionError("grouped_softmax: group " + std::to_string(g) + " is empty");
        for (std::size_t i : groups[g]) {
            if (i >= count || seen[i]) {
                throw DimensionError("grouped_softmax: index " + std::to_string(i) +
                                     " is out of range or in more than one group");
            }
            seen[i] = true;
            ++covered;
        }
    }
    if (covered != count) throw DimensionError("grouped_softmax: groups do not cover every score");
}

/// Softmax applied independently inside each group (max-shifted).
inline std::vector<double> grouped_softmax_values(std::span<const double> scores, const Groups& groups) {
    validate_partition(groups, scores.size());
    std::vector<double> out(scores.size());
    for (const auto& group : groups) {
        double peak = -std::numeric_limits<double>::infinity();
        for (std::size_t i : group) peak = std::max(peak, scores[i]);
        double total = 0.0;
        for (std::size_t i : group) {
            out[i] = std::exp(scores[i] - peak);
            total += out[i];
        }
        for (std::size_t i : group) out[i] /= total;
    }
    return out;
}

inline Var grouped_softmax(const Var& scores, Groups groups) {
    std::vector<double> probs = grouped_softmax_values(scores.value().data(), groups);
    Tensor out(scores.value().shape(), probs);
    return scores.tape().record(
        std::move(out), {scores},
        [scores, groups = std::move(groups), probs = std::move(probs)](Tape& tape, std::span<const double> g) {
            auto gs = tape.grad_of(scores);
            for (const auto& group : groups) {
                double dot = 0.0;
                for (std::size_t i : group) dot += g[i] * probs[i];
                for (std::size_t i : group) gs[i] += probs[i] * (g[i] - dot);
            }
        });
}

/// Sparse weighted aggregation: out[target[k]] += weight[k] * values[source[k]].
/// `weights` is a vector with one entry per (target, source) pair.
inline Var segment_weighted_sum(const Var& weights, const Var& values, std::vector<std::size_t> target,
                                std::vector<std::size_t> source, std::size_t out_rows) {
    const Tensor& wv = weights.value();
    const Tensor& xv = values.value();
    if (target.size() != source.size() || wv.size() != target.size()) {
        throw DimensionError("segment_weighted_sum: " + std::to_string(wv.size()) + " weights for " +
                             std::to_string(target.size()) + " pairs");
    }
    const std::size_t c = xv.cols();
    Tensor out = Tensor::matrix(out_rows, c);
    for (std::size_t k = 0; k < target.size(); ++k) {
        if (target[k] >= out_rows || source[k] >= xv.rows()) {
            throw DimensionError("segment_weighted_sum: pair index out of range");
        }
        const double w = wv[k];
        for (std::size_t j = 0; j < c; ++j) out(target[k], j) += w * xv(source[k], j);
    }
    return weights.tape().record(
        std::move(out), {weights, values},
        [weights, values, target = std::move(target), source = std::move(source), c](Tape& tape,
                                                                                   std::span<const double> g) {
            const Tensor& wv = weights.value();
            const Tensor& xv = values.value();
            auto gw = tape.grad_of(weights);
            auto gx = tape.grad_of(values);
            for (std::size_t k = 0; k < target.size(); ++k) {
                const double* grow = g.data() + target[k] * c;
                if (!gw.empty()) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < c; ++j) acc += grow[j] * xv(source[k], j);
                    gw[k] += acc;
                }
                if (!gx.empty()) {
                    for (std::size_t j = 0; j < c; ++j) gx[source[k] * c + j] += wv[k] * grow[j];
                }
            }
        });
}

inline Var add_all(std::span<const Var> terms) {
    if (terms.empty()) throw DimensionError("add_all: no terms");
    Var total = terms[0];
    for (std::size_t i = 1; i < terms.size(); ++i) total = add(total, terms[i]);
    return total;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct NamedTensor {
    std::string name;
    Tensor* tensor;
};

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double epsilon = 1e-8;
    std::size_t step = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
};

/// One bias-corrected Adam update using the gradients stored on each tensor.
inline void adam_step(std::span<const NamedTensor> params, AdamState& state) {
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.emplace_back(p.tensor->size(), 0.0);
            state.second_moment.emplace_back(p.tensor->size(), 0.0);
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw DimensionError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                             " tensors, got " + std::to_string(params.size()));
    }
    for (std::size_t k = 0; k < params.size(); ++k) {
        const Tensor& t = *params[k].tensor;
        if (!t.has_grad() || state.first_moment[k].size() != t.size()) {
            throw DimensionError("adam_step: parameter '" + params[k].name + "' has no matching gradient or moments");
        }
        for (double g : t.grad()) {
            if (!std::isfinite(g)) throw NumericError("adam_step: non-finite gradient in parameter '" + params[k].name + "'");
        }
    }
    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        Tensor& t = *params[k].tensor;
        auto w = t.data();
        auto g = std::as_const(t).grad();
        auto& m = state.first_moment[k];
        auto& v = state.second_moment[k];
        for (std::size_t i = 0; i < w.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            w[i] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

}  // namespace hgad
