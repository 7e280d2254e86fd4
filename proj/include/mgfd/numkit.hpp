#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "mgfd/errors.hpp"
#include "mgfd/rng.hpp"

namespace mgfd::numkit {

/// Dense row-major matrix of 64-bit reals. All operations in this module are
/// sequential and deterministic: identical inputs give bit-identical outputs.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

    static Matrix filled(std::size_t rows, std::size_t cols, double v);
    static Matrix identity(std::size_t n);
    /// Entries drawn i.i.d. uniform in [lo, hi).
    static Matrix random_uniform(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    double* row(std::size_t i) { return data_.data() + i * cols_; }
    const double* row(std::size_t i) const { return data_.data() + i * cols_; }

    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    bool same_shape(const Matrix& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
    bool all_finite() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

/// Trainable tensor: value plus gradient accumulator and Adam moment state.
/// grad/m/v always share the value's shape; zero_grad writes exact zeros.
struct ParamTensor {
    Matrix value;
    Matrix grad;
    Matrix m;
    Matrix v;
    std::int64_t step = 0;

    ParamTensor() = default;
    explicit ParamTensor(Matrix init);

    void zero_grad();
};

struct AdamConfig {
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.0;

    /// Throws ValidationError unless lr > 0, 0 <= beta < 1, eps > 0, wd >= 0.
    void validate() const;
};

struct ScalarWithGrad {
    double value = 0.0;
    Matrix grad;
};

// ---- forward kernels ----

/// Standard product. Throws ValidationError naming both shapes on mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T * b and a * b^T; the two factor orders every backward rule needs.
Matrix matmul_at_b(const Matrix& a, const Matrix& b);
Matrix matmul_a_bt(const Matrix& a, const Matrix& b);

Matrix transpose(const Matrix& a);
void add_inplace(Matrix& a, const Matrix& b);
void axpy_inplace(Matrix& a, double alpha, const Matrix& b);  // a += alpha * b
void scale_inplace(Matrix& a, double alpha);
/// Sum over rows: 1 x cols.
Matrix col_sum(const Matrix& a);
/// Frobenius inner product.
double dot(const Matrix& a, const Matrix& b);

/// Row-wise stable softmax (per-row max subtraction). Every output row is a
/// probability vector.
Matrix row_softmax(const Matrix& logits);
/// Softmax Jacobian applied backward: given y = softmax(x) row-wise and dL/dy,
/// returns dL/dx.
Matrix row_softmax_backward(const Matrix& softmax_out, const Matrix& dout);

Matrix tanh_map(const Matrix& x);
/// dL/dx from the tanh *output* y and dL/dy (derivative is 1 - y^2).
Matrix tanh_backward(const Matrix& tanh_out, const Matrix& dout);

Matrix relu_map(const Matrix& x);
/// Subgradient at 0 is 0: passes dout only where the pre-activation is > 0.
Matrix relu_backward(const Matrix& pre_activation, const Matrix& dout);

// ---- losses (value + analytic gradient in one pass) ----

/// Mean over masked rows of -log softmax(logits)[label]. labels are one-hot
/// rows (soft rows also work). Gradient is exactly 0 outside the mask.
/// Throws ValidationError on an empty mask or shape mismatch.
ScalarWithGrad cross_entropy_masked(const Matrix& logits, const Matrix& labels,
                                    std::span<const std::int32_t> mask);

/// Weighted sum over rows of KL(target_row || softmax(student_row)) with
/// 0*ln(0) = 0. Returns the weighted *sum*; callers normalize. Gradient is
/// w.r.t. the student logits. Negative weights are a ValidationError.
ScalarWithGrad kl_divergence_rows(const Matrix& target_probs, const Matrix& student_logits,
                                  std::span<const double> row_weights);

/// H(c_bar) where c_bar_i is the column mean of c. Rows must lie on the
/// probability simplex within 1e-8 or a ValidationError is thrown. Gradient is
/// w.r.t. every entry of c.
ScalarWithGrad entropy_of_mean(const Matrix& coeffs);

/// Decoupled weight decay (value *= 1 - lr*wd) followed by the bias-corrected
/// Adam update. Each tensor keeps its own step counter.
void adam_step(std::span<ParamTensor* const> params, const AdamConfig& cfg);

// ---- gradient checking ----

/// A scalar-valued differentiable operation: value and analytic gradient at a
/// point, both as functions of the same input matrix.
struct DiffScalarOp {
    std::function<double(const Matrix&)> value;
    std::function<Matrix(const Matrix&)> grad;
};

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::size_t worst_row = 0;
    std::size_t worst_col = 0;
    bool passed = false;
};

/// Central differences with step 1e-5 against the analytic gradient. The
/// relative error denominator is max(1, |analytic|, |numeric|). The input
/// point must be away from kinks (callers resample near ReLU boundaries).
GradCheckReport grad_check(const DiffScalarOp& op, const Matrix& input, double tolerance);

}  // namespace mgfd::numkit
