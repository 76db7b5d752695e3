#include "dgcl/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "dgcl/error.hpp"

namespace dgcl {

namespace {

void require_positive(std::size_t rows, std::size_t cols) {
    if (rows == 0 || cols == 0)
        fail(ErrorKind::dimension, "tensor dimensions must be positive, got " + std::to_string(rows) +
                                       "x" + std::to_string(cols));
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        fail(ErrorKind::dimension,
             std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

template <class F>
Tensor map(const Tensor& a, F f) {
    Tensor out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i]);
    return out;
}

template <class F>
Tensor zip(const Tensor& a, const Tensor& b, const char* op, F f) {
    require_same(a, b, op);
    Tensor out(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
    return out;
}

}  // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    require_positive(rows, cols);
}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    require_positive(rows, cols);
    if (data_.size() != rows * cols)
        fail(ErrorKind::dimension, "data length " + std::to_string(data_.size()) +
                                       " does not match shape " + shape_str());
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    require_positive(rows_, cols_);
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
        if (r.size() != cols_) fail(ErrorKind::dimension, "ragged tensor literal");
        data_.insert(data_.end(), r.begin(), r.end());
    }
}

Tensor Tensor::row(std::vector<double> values) {
    std::size_t n = values.size();
    return Tensor(1, n, std::move(values));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

std::string Tensor::shape_str() const {
    return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows())
        fail(ErrorKind::dimension, "matmul: inner dimensions differ, " + a.shape_str() + " * " +
                                       b.shape_str());
    const std::size_t p = a.rows(), q = a.cols(), r = b.cols();
    Tensor out(p, r);
    for (std::size_t i = 0; i < p; ++i) {
        double* o = out.row_ptr(i);
        const double* ai = a.row_ptr(i);
        for (std::size_t k = 0; k < q; ++k) {
            const double av = ai[k];
            if (av == 0.0) continue;
            const double* bk = b.row_ptr(k);
            for (std::size_t j = 0; j < r; ++j) o[j] += av * bk[j];
        }
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    Tensor out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
    return zip(a, b, "add", [](double x, double y) { return x + y; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
    return zip(a, b, "sub", [](double x, double y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
    return zip(a, b, "mul", [](double x, double y) { return x * y; });
}
Tensor scale(const Tensor& a, double s) {
    return map(a, [s](double x) { return x * s; });
}
Tensor relu(const Tensor& a) {
    return map(a, [](double x) { return x > 0.0 ? x : 0.0; });
}

Tensor gelu(const Tensor& a) {
    constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    return map(a, [](double x) { return 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x))); });
}

Tensor exp(const Tensor& a) {
    return map(a, [](double x) { return std::exp(x); });
}

Tensor log(const Tensor& a) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!(a[i] > 0.0)) fail(ErrorKind::domain, "log of non-positive value " + std::to_string(a[i]));
    return map(a, [](double x) { return std::log(x); });
}

Tensor sqrt(const Tensor& a) {
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] < 0.0) fail(ErrorKind::domain, "sqrt of negative value " + std::to_string(a[i]));
    return map(a, [](double x) { return std::sqrt(x); });
}

Tensor softmax_rows(const Tensor& x) {
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* xi = x.row_ptr(i);
        double* oi = out.row_ptr(i);
        double mx = *std::max_element(xi, xi + x.cols());
        double z = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) z += (oi[j] = std::exp(xi[j] - mx));
        for (std::size_t j = 0; j < x.cols(); ++j) oi[j] /= z;
    }
    return out;
}

Tensor log_softmax_rows(const Tensor& x) {
    Tensor out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        const double* xi = x.row_ptr(i);
        double mx = *std::max_element(xi, xi + x.cols());
        double z = 0.0;
        for (std::size_t j = 0; j < x.cols(); ++j) z += std::exp(xi[j] - mx);
        double lse = mx + std::log(z);
        for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = xi[j] - lse;
    }
    return out;
}

Tensor add_row(const Tensor& a, const Tensor& row) {
    if (row.rows() != 1 || row.cols() != a.cols())
        fail(ErrorKind::dimension, "add_row: " + a.shape_str() + " + " + row.shape_str());
    Tensor out = a;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) += row[j];
    return out;
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end) {
    if (begin >= end || end > a.cols())
        fail(ErrorKind::dimension, "slice_cols: bad range on " + a.shape_str());
    Tensor out(a.rows(), end - begin);
    for (std::size_t i = 0; i < a.rows(); ++i)
        std::copy(a.row_ptr(i) + begin, a.row_ptr(i) + end, out.row_ptr(i));
    return out;
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
    if (begin >= end || end > a.rows())
        fail(ErrorKind::dimension, "slice_rows: bad range on " + a.shape_str());
    return Tensor(end - begin, a.cols(),
                  std::vector<double>(a.row_ptr(begin), a.row_ptr(begin) + (end - begin) * a.cols()));
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) fail(ErrorKind::dimension, "concat_cols: no inputs");
    std::size_t rows = parts.front().rows(), cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) fail(ErrorKind::dimension, "concat_cols: row counts differ");
        cols += p.cols();
    }
    Tensor out(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        double* o = out.row_ptr(i);
        for (const auto& p : parts) o = std::copy(p.row_ptr(i), p.row_ptr(i) + p.cols(), o);
    }
    return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) fail(ErrorKind::dimension, "concat_rows: no inputs");
    std::size_t cols = parts.front().cols(), rows = 0;
    std::vector<double> data;
    for (const auto& p : parts) {
        if (p.cols() != cols) fail(ErrorKind::dimension, "concat_rows: column counts differ");
        rows += p.rows();
        data.insert(data.end(), p.values().begin(), p.values().end());
    }
    return Tensor(rows, cols, std::move(data));
}

double sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    return s;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same(a, b, "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

double frobenius(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v * v;
    return std::sqrt(s);
}

}  // namespace dgcl
