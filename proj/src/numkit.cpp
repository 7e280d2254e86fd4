#include "mgfd/numkit.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace mgfd::numkit {

namespace {

std::string shape_str(const Matrix& m) {
    std::ostringstream os;
    os << m.rows() << "x" << m.cols();
    return os.str();
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ValidationError(std::string(what) + ": shape mismatch " + shape_str(a) + " vs " +
                              shape_str(b));
    }
}

}  // namespace

Matrix Matrix::filled(std::size_t rows, std::size_t cols, double v) {
    Matrix m(rows, cols);
    for (double& x : m.data_) x = v;
    return m;
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::random_uniform(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi) {
    Matrix m(rows, cols);
    for (double& x : m.data_) x = rng.uniform(lo, hi);
    return m;
}

bool Matrix::all_finite() const {
    for (double x : data_) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

ParamTensor::ParamTensor(Matrix init)
    : value(std::move(init)),
      grad(value.rows(), value.cols()),
      m(value.rows(), value.cols()),
      v(value.rows(), value.cols()) {}

void ParamTensor::zero_grad() {
    for (double& g : grad.values()) g = 0.0;
}

void AdamConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("adam: learning_rate must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ValidationError("adam: beta1 must be in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ValidationError("adam: beta2 must be in [0, 1)");
    if (!(epsilon > 0.0)) throw ValidationError("adam: epsilon must be > 0");
    if (!(weight_decay >= 0.0)) throw ValidationError("adam: weight_decay must be >= 0");
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw ValidationError("matmul: dimension mismatch " + shape_str(a) + " * " + shape_str(b));
    }
    Matrix c(a.rows(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t i = 0; i < a.rows(); ++i) {
        double* ci = c.row(i);
        const double* ai = a.row(i);
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = ai[k];
            const double* bk = b.row(k);
            for (std::size_t j = 0; j < n; ++j) ci[j] += aik * bk[j];
        }
    }
    return c;
}

Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) {
        throw ValidationError("matmul_at_b: dimension mismatch " + shape_str(a) + "^T * " +
                              shape_str(b));
    }
    Matrix c(a.cols(), b.cols());
    const std::size_t n = b.cols();
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double* ak = a.row(k);
        const double* bk = b.row(k);
        for (std::size_t i = 0; i < a.cols(); ++i) {
            const double aki = ak[i];
            double* ci = c.row(i);
            for (std::size_t j = 0; j < n; ++j) ci[j] += aki * bk[j];
        }
    }
    return c;
}

Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) {
        throw ValidationError("matmul_a_bt: dimension mismatch " + shape_str(a) + " * " +
                              shape_str(b) + "^T");
    }
    Matrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i);
        double* ci = c.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const double* bj = b.row(j);
            double s = 0.0;
            for (std::size_t k = 0; k < a.cols(); ++k) s += ai[k] * bj[k];
            ci[j] = s;
        }
    }
    return c;
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

void add_inplace(Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "add");
    for (std::size_t i = 0; i < a.size(); ++i) a.values()[i] += b.values()[i];
}

void axpy_inplace(Matrix& a, double alpha, const Matrix& b) {
    require_same_shape(a, b, "axpy");
    for (std::size_t i = 0; i < a.size(); ++i) a.values()[i] += alpha * b.values()[i];
}

void scale_inplace(Matrix& a, double alpha) {
    for (double& x : a.values()) x *= alpha;
}

Matrix col_sum(const Matrix& a) {
    Matrix s(1, a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const double* ai = a.row(i);
        for (std::size_t j = 0; j < a.cols(); ++j) s(0, j) += ai[j];
    }
    return s;
}

double dot(const Matrix& a, const Matrix& b) {
    require_same_shape(a, b, "dot");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
    return s;
}

Matrix row_softmax(const Matrix& logits) {
    Matrix p(logits.rows(), logits.cols());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const double* x = logits.row(i);
        double* y = p.row(i);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < logits.cols(); ++j) mx = std::max(mx, x[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < logits.cols(); ++j) {
            y[j] = std::exp(x[j] - mx);
            sum += y[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < logits.cols(); ++j) y[j] *= inv;
    }
    return p;
}

Matrix row_softmax_backward(const Matrix& softmax_out, const Matrix& dout) {
    require_same_shape(softmax_out, dout, "row_softmax_backward");
    Matrix dx(dout.rows(), dout.cols());
    for (std::size_t i = 0; i < dout.rows(); ++i) {
        const double* y = softmax_out.row(i);
        const double* dy = dout.row(i);
        double inner = 0.0;
        for (std::size_t j = 0; j < dout.cols(); ++j) inner += y[j] * dy[j];
        double* d = dx.row(i);
        for (std::size_t j = 0; j < dout.cols(); ++j) d[j] = y[j] * (dy[j] - inner);
    }
    return dx;
}

Matrix tanh_map(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) y.values()[i] = std::tanh(x.values()[i]);
    return y;
}

Matrix tanh_backward(const Matrix& tanh_out, const Matrix& dout) {
    require_same_shape(tanh_out, dout, "tanh_backward");
    Matrix dx(dout.rows(), dout.cols());
    for (std::size_t i = 0; i < dout.size(); ++i) {
        const double y = tanh_out.values()[i];
        dx.values()[i] = dout.values()[i] * (1.0 - y * y);
    }
    return dx;
}

Matrix relu_map(const Matrix& x) {
    Matrix y(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.size(); ++i) y.values()[i] = std::max(0.0, x.values()[i]);
    return y;
}

Matrix relu_backward(const Matrix& pre_activation, const Matrix& dout) {
    require_same_shape(pre_activation, dout, "relu_backward");
    Matrix dx(dout.rows(), dout.cols());
    for (std::size_t i = 0; i < dout.size(); ++i) {
        dx.values()[i] = pre_activation.values()[i] > 0.0 ? dout.values()[i] : 0.0;
    }
    return dx;
}

namespace {

// log softmax of one row, written into out (size cols).
void row_log_softmax(const double* x, std::size_t cols, double* out) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j) mx = std::max(mx, x[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < cols; ++j) sum += std::exp(x[j] - mx);
    const double lse = mx + std::log(sum);
    for (std::size_t j = 0; j < cols; ++j) out[j] = x[j] - lse;
}

}  // namespace

ScalarWithGrad cross_entropy_masked(const Matrix& logits, const Matrix& labels,
                                    std::span<const std::int32_t> mask) {
    require_same_shape(logits, labels, "cross_entropy_masked");
    if (mask.empty()) throw ValidationError("cross_entropy_masked: empty mask");
    for (std::int32_t r : mask) {
        if (r < 0 || static_cast<std::size_t>(r) >= logits.rows()) {
            throw ValidationError("cross_entropy_masked: mask index out of range");
        }
    }

    const std::size_t k = logits.cols();
    std::vector<double> lsm(k);
    ScalarWithGrad out;
    out.grad = Matrix(logits.rows(), logits.cols());
    const double inv = 1.0 / static_cast<double>(mask.size());
    double loss = 0.0;
    for (std::int32_t r : mask) {
        const std::size_t i = static_cast<std::size_t>(r);
        row_log_softmax(logits.row(i), k, lsm.data());
        const double* y = labels.row(i);
        double* g = out.grad.row(i);
        double ysum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            loss -= y[j] * lsm[j];
            ysum += y[j];
        }
        // d/dx_j of -sum_c y_c * logsoftmax(x)_c = softmax(x)_j * sum(y) - y_j
        for (std::size_t j = 0; j < k; ++j) g[j] = inv * (std::exp(lsm[j]) * ysum - y[j]);
    }
    out.value = loss * inv;
    return out;
}

ScalarWithGrad kl_divergence_rows(const Matrix& target_probs, const Matrix& student_logits,
                                  std::span<const double> row_weights) {
    require_same_shape(target_probs, student_logits, "kl_divergence_rows");
    if (row_weights.size() != target_probs.rows()) {
        throw ValidationError("kl_divergence_rows: weight count does not match row count");
    }
    for (double w : row_weights) {
        if (w < 0.0) throw ValidationError("kl_divergence_rows: negative row weight");
    }

    const std::size_t k = target_probs.cols();
    std::vector<double> lsm(k);
    ScalarWithGrad out;
    out.grad = Matrix(student_logits.rows(), student_logits.cols());
    double total = 0.0;
    for (std::size_t i = 0; i < target_probs.rows(); ++i) {
        const double w = row_weights[i];
        if (w == 0.0) continue;
        row_log_softmax(student_logits.row(i), k, lsm.data());
        const double* t = target_probs.row(i);
        double* g = out.grad.row(i);
        double row = 0.0;
        double tsum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (t[j] > 0.0) row += t[j] * (std::log(t[j]) - lsm[j]);
            tsum += t[j];
        }
        total += w * row;
        for (std::size_t j = 0; j < k; ++j) g[j] = w * (std::exp(lsm[j]) * tsum - t[j]);
    }
    out.value = total;
    return out;
}

ScalarWithGrad entropy_of_mean(const Matrix& coeffs) {
    const std::size_t n = coeffs.rows();
    const std::size_t k = coeffs.cols();
    if (n == 0) throw ValidationError("entropy_of_mean: empty matrix");
    for (std::size_t i = 0; i < n; ++i) {
        const double* c = coeffs.row(i);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            if (c[j] < -1e-8) throw ValidationError("entropy_of_mean: negative coefficient");
            sum += c[j];
        }
        if (std::abs(sum - 1.0) > 1e-8) {
            throw ValidationError("entropy_of_mean: row not on the probability simplex");
        }
    }

    std::vector<double> mean(k, 0.0);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* c = coeffs.row(i);
        for (std::size_t j = 0; j < k; ++j) mean[j] += c[j];
    }
    for (std::size_t j = 0; j < k; ++j) mean[j] *= inv_n;

    ScalarWithGrad out;
    out.grad = Matrix(n, k);
    double h = 0.0;
    std::vector<double> dmean(k, 0.0);
    for (std::size_t j = 0; j < k; ++j) {
        if (mean[j] > 0.0) {
            h -= mean[j] * std::log(mean[j]);
            dmean[j] = -(std::log(mean[j]) + 1.0) * inv_n;
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        double* g = out.grad.row(i);
        for (std::size_t j = 0; j < k; ++j) g[j] = dmean[j];
    }
    out.value = h;
    return out;
}

void adam_step(std::span<ParamTensor* const> params, const AdamConfig& cfg) {
    cfg.validate();
    for (ParamTensor* p : params) {
        if (cfg.weight_decay > 0.0) {
            scale_inplace(p->value, 1.0 - cfg.learning_rate * cfg.weight_decay);
        }
        p->step += 1;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->step));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->step));
        for (std::size_t i = 0; i < p->value.size(); ++i) {
            const double g = p->grad.values()[i];
            double& m = p->m.values()[i];
            double& v = p->v.values()[i];
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            const double mhat = m / bc1;
            const double vhat = v / bc2;
            p->value.values()[i] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
        }
    }
}

GradCheckReport grad_check(const DiffScalarOp& op, const Matrix& input, double tolerance) {
    const double h = 1e-5;
    Matrix analytic = op.grad(input);
    Matrix x = input;
    GradCheckReport report;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t j = 0; j < x.cols(); ++j) {
            const double saved = x(i, j);
            x(i, j) = saved + h;
            const double fp = op.value(x);
            x(i, j) = saved - h;
            const double fm = op.value(x);
            x(i, j) = saved;
            const double numeric = (fp - fm) / (2.0 * h);
            const double a = analytic(i, j);
            const double denom = std::max({1.0, std::abs(a), std::abs(numeric)});
            const double rel = std::abs(a - numeric) / denom;
            if (rel > report.max_rel_err) {
                report.max_rel_err = rel;
                report.worst_row = i;
                report.worst_col = j;
            }
        }
    }
    report.passed = report.max_rel_err < tolerance;
    return report;
}

}  // namespace mgfd::numkit
