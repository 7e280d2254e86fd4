#include "mgfd/distill.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mgfd/errors.hpp"
#include "paramio.hpp"

namespace mgfd::distill {

namespace {

using numkit::Matrix;
using numkit::ParamTensor;

Matrix gather_rows(const Matrix& m, std::span<const NodeId> ids) {
    Matrix out(ids.size(), m.cols());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const NodeId id = ids[i];
        if (id < 0 || static_cast<std::size_t>(id) >= m.rows()) {
            throw ValidationError("scope row " + std::to_string(id) +
                                  " outside the feature matrix (" + std::to_string(m.rows()) +
                                  " rows)");
        }
        std::copy(m.row(id), m.row(id) + m.cols(), out.row(i));
    }
    return out;
}

// Per-row softmax probabilities of the scoped student logits plus, per
// teacher, the per-row KL(teacher ‖ student). Shared by every distillation
// objective so their values agree to rounding on identical inputs.
struct ScopeKl {
    Matrix probs;                         // |scope|×k
    std::vector<std::vector<double>> kl;  // [teacher][scope row]
};

ScopeKl compute_scope_kl(const Matrix& logits, const SoftLabelBundle& bundle) {
    const std::size_t k = logits.cols();
    for (const Matrix& t : bundle.teacher_probs) {
        if (t.cols() != k) {
            throw ValidationError("soft-label class count does not match student logits");
        }
    }
    const std::size_t n_s = bundle.scope.size();
    Matrix scoped = gather_rows(logits, bundle.scope);

    ScopeKl out;
    out.probs = Matrix(n_s, k);
    Matrix lsm(n_s, k);
    for (std::size_t v = 0; v < n_s; ++v) {
        const double* row = scoped.row(v);
        double mx = row[0];
        for (std::size_t j = 1; j < k; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
        const double lse = mx + std::log(sum);
        for (std::size_t j = 0; j < k; ++j) {
            lsm(v, j) = row[j] - lse;
            out.probs(v, j) = std::exp(lsm(v, j));
        }
    }
    out.kl.resize(bundle.teachers());
    for (int i = 0; i < bundle.teachers(); ++i) {
        const Matrix& t = bundle.teacher_probs[i];
        out.kl[i].resize(n_s, 0.0);
        for (std::size_t v = 0; v < n_s; ++v) {
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) {
                const double tv = t(v, j);
                if (tv > 0.0) acc += tv * (std::log(tv) - lsm(v, j));
            }
            out.kl[i][v] = acc;
        }
    }
    return out;
}

// dKL_vi/dlogits_v = (Σ_c t_c)·p_v − t_v, scattered back to the full logit
// rows with the given per-(row,teacher) weight.
void scatter_kl_grad(Matrix& d_logits, const SoftLabelBundle& bundle, const ScopeKl& skl,
                     const std::function<double(std::size_t v, int i)>& weight) {
    const std::size_t k = d_logits.cols();
    for (std::size_t v = 0; v < bundle.scope.size(); ++v) {
        double* dst = d_logits.row(bundle.scope[v]);
        for (int i = 0; i < bundle.teachers(); ++i) {
            const double w = weight(v, i);
            if (w == 0.0) continue;
            const Matrix& t = bundle.teacher_probs[i];
            double tsum = 0.0;
            for (std::size_t j = 0; j < k; ++j) tsum += t(v, j);
            for (std::size_t j = 0; j < k; ++j) {
                dst[j] += w * (tsum * skl.probs(v, j) - t(v, j));
            }
        }
    }
}

Matrix glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return Matrix::random_uniform(fan_in, fan_out, rng, -bound, bound);
}

struct MlpTrace {
    std::vector<Matrix> pre;   // pre-activation per layer
    std::vector<Matrix> post;  // post-ReLU per hidden layer
    Matrix hidden;
    Matrix logits;
};

MlpTrace mlp_forward_trace(const MlpParams& p, const Matrix& x) {
    if (x.cols() != static_cast<std::size_t>(p.in_dim)) {
        throw ValidationError("feature width " + std::to_string(x.cols()) +
                              " does not match student input dim " + std::to_string(p.in_dim));
    }
    MlpTrace tr;
    const Matrix* cur = &x;
    for (int l = 0; l < p.layers; ++l) {
        Matrix z = numkit::matmul(*cur, p.weights[l].value);
        for (std::size_t i = 0; i < z.rows(); ++i) {
            double* row = z.row(i);
            for (std::size_t j = 0; j < z.cols(); ++j) row[j] += p.biases[l].value(0, j);
        }
        tr.pre.push_back(std::move(z));
        if (l + 1 < p.layers) {
            tr.post.push_back(numkit::relu_map(tr.pre.back()));
            cur = &tr.post.back();
        }
    }
    tr.logits = tr.pre.back();
    tr.hidden = p.layers >= 2 ? tr.post.back() : x;
    return tr;
}

// d_hidden_extra joins at the last hidden activation (ignored for single-layer
// students, whose "hidden" representation is the untrainable input).
void mlp_backward(MlpParams& p, const Matrix& x, const MlpTrace& tr, const Matrix& d_logits,
                  const Matrix* d_hidden_extra) {
    Matrix d = d_logits;
    for (int l = p.layers - 1; l >= 0; --l) {
        const Matrix& input = l == 0 ? x : tr.post[l - 1];
        Matrix d_pre = l == static_cast<int>(p.layers) - 1
                           ? std::move(d)
                           : numkit::relu_backward(tr.pre[l], d);
        numkit::add_inplace(p.weights[l].grad, numkit::matmul_at_b(input, d_pre));
        numkit::add_inplace(p.biases[l].grad, numkit::col_sum(d_pre));
        if (l == 0) break;
        d = numkit::matmul_a_bt(d_pre, p.weights[l].value);
        if (l == static_cast<int>(p.layers) - 1 && d_hidden_extra) {
            numkit::add_inplace(d, *d_hidden_extra);
        }
    }
}

numkit::ScalarWithGrad checked_cross_entropy(const Matrix& logits, const Matrix& labels,
                                             std::span<const NodeId> train_rows) {
    if (train_rows.empty()) {
        throw ValidationError("labeled set is empty but lambda > 0 requires labels");
    }
    return numkit::cross_entropy_masked(logits, labels, train_rows);
}

std::vector<NodeId> argmax_rows(const Matrix& logits) {
    std::vector<NodeId> out(logits.rows());
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        const double* row = logits.row(i);
        std::size_t best = 0;
        for (std::size_t j = 1; j < logits.cols(); ++j) {
            if (row[j] > row[best]) best = j;
        }
        out[i] = static_cast<NodeId>(best);
    }
    return out;
}

std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

std::string to_string(Mode m) {
    switch (m) {
        case Mode::Mgfnn: return "mgfnn";
        case Mode::MgfnnPlus: return "mgfnn-plus";
        case Mode::Mean: return "mean";
        case Mode::Para: return "para";
    }
    throw RuntimeFailure("unreachable mode");
}

Mode mode_from_string(const std::string& s) {
    if (s == "mgfnn") return Mode::Mgfnn;
    if (s == "mgfnn-plus") return Mode::MgfnnPlus;
    if (s == "mean") return Mode::Mean;
    if (s == "para") return Mode::Para;
    throw ValidationError("unknown mode '" + s +
                          "' (expected mgfnn, mgfnn-plus, mean, or para)");
}

void DistillConfig::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda must lie in [0,1]");
    if (!(gamma >= 0.0)) throw ValidationError("gamma must be >= 0");
    if (rank < 1) throw ValidationError("rank m must be >= 1");
    if (layers < 1) throw ValidationError("student needs at least one layer");
    if (hidden < 1) throw ValidationError("student hidden dim must be positive");
    if (epochs < 0) throw ValidationError("epochs must be non-negative");
    adam.validate();
}

std::vector<ParamTensor*> MlpParams::parameters() {
    std::vector<ParamTensor*> out;
    for (int l = 0; l < layers; ++l) {
        out.push_back(&weights[l]);
        out.push_back(&biases[l]);
    }
    return out;
}

MlpParams init_mlp(int in_dim, int hidden, int out_dim, int layers, std::uint64_t seed) {
    if (in_dim < 1 || hidden < 1 || out_dim < 1 || layers < 1) {
        throw ValidationError("mlp dims and layer count must be positive");
    }
    MlpParams p;
    p.layers = layers;
    p.in_dim = in_dim;
    p.hidden = hidden;
    p.out_dim = out_dim;
    Rng rng(mix_seed(seed, 0x57d));
    for (int l = 0; l < layers; ++l) {
        const std::size_t fan_in = l == 0 ? in_dim : hidden;
        const std::size_t fan_out = l == layers - 1 ? out_dim : hidden;
        p.weights.emplace_back(glorot(fan_in, fan_out, rng));
        p.biases.emplace_back(Matrix(1, fan_out));
    }
    return p;
}

CoeffFactors init_coeff_factors(int hidden, int rank, int teachers, std::uint64_t seed) {
    if (hidden < 1 || rank < 1 || teachers < 2) {
        throw ValidationError("coefficient factors need hidden >= 1, rank >= 1, teachers >= 2");
    }
    CoeffFactors f;
    f.rank = rank;
    Rng rng(mix_seed(seed, 0xc0ef));
    f.w = ParamTensor(Matrix::random_uniform(hidden, rank, rng, -0.01, 0.01));
    f.t = ParamTensor(Matrix::random_uniform(rank, teachers, rng, -0.01, 0.01));
    return f;
}

MlpForward mlp_forward(const MlpParams& params, const Matrix& x) {
    MlpTrace tr = mlp_forward_trace(params, x);
    return {std::move(tr.hidden), std::move(tr.logits)};
}

Matrix coefficients(const Matrix& h, const CoeffFactors& factors) {
    if (h.cols() != factors.w.value.rows()) {
        throw ValidationError("hidden width " + std::to_string(h.cols()) +
                              " does not match coefficient factor rows " +
                              std::to_string(factors.w.value.rows()));
    }
    return numkit::row_softmax(
        numkit::matmul(numkit::tanh_map(numkit::matmul(h, factors.w.value)), factors.t.value));
}

LossResult mgfnn_loss(const Matrix& logits, const Matrix& labels_onehot,
                      std::span<const NodeId> train_rows, const SoftLabelBundle& bundle,
                      double lambda) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda must lie in [0,1]");
    LossResult out;
    out.d_logits = Matrix(logits.rows(), logits.cols());
    if (lambda > 0.0) {
        auto ce = checked_cross_entropy(logits, labels_onehot, train_rows);
        out.value += lambda * ce.value;
        numkit::axpy_inplace(out.d_logits, lambda, ce.grad);
    }
    if (lambda < 1.0 && !bundle.scope.empty()) {
        ScopeKl skl = compute_scope_kl(logits, bundle);
        const int whole = bundle.teachers() - 1;
        const double inv = 1.0 / static_cast<double>(bundle.scope.size());
        double kl_sum = 0.0;
        for (double v : skl.kl[whole]) kl_sum += v;
        out.value += (1.0 - lambda) * inv * kl_sum;
        scatter_kl_grad(out.d_logits, bundle, skl, [&](std::size_t, int i) {
            return i == whole ? (1.0 - lambda) * inv : 0.0;
        });
    }
    return out;
}

ViewwiseLossResult viewwise_loss(const Matrix& logits, const SoftLabelBundle& bundle,
                                 std::span<const double> weights) {
    if (static_cast<int>(weights.size()) != bundle.teachers()) {
        throw ValidationError("need one view weight per teacher");
    }
    double sum = 0.0;
    for (double w : weights) {
        if (w < -1e-8) throw ValidationError("view weights must be non-negative");
        sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-8) {
        throw ValidationError("view weights off the probability simplex");
    }

    ViewwiseLossResult out;
    out.d_logits = Matrix(logits.rows(), logits.cols());
    out.d_weights.assign(weights.size(), 0.0);
    if (bundle.scope.empty()) return out;

    ScopeKl skl = compute_scope_kl(logits, bundle);
    const double inv = 1.0 / static_cast<double>(bundle.scope.size());
    for (int i = 0; i < bundle.teachers(); ++i) {
        double mean_kl = 0.0;
        for (double v : skl.kl[i]) mean_kl += v;
        mean_kl *= inv;
        out.d_weights[i] = mean_kl;
        out.value += weights[i] * mean_kl;
    }
    scatter_kl_grad(out.d_logits, bundle, skl,
                    [&](std::size_t, int i) { return weights[i] * inv; });
    return out;
}

PlusLossResult mgfnn_plus_loss(const Matrix& logits, const Matrix& hidden,
                               CoeffFactors& factors, const SoftLabelBundle& bundle,
                               double lambda, double gamma, const Matrix& labels_onehot,
                               std::span<const NodeId> train_rows) {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda must lie in [0,1]");
    if (!(gamma >= 0.0)) throw ValidationError("gamma must be >= 0");
    if (logits.rows() != hidden.rows()) {
        throw ValidationError("logits and hidden row counts differ");
    }

    PlusLossResult out;
    out.d_logits = Matrix(logits.rows(), logits.cols());
    out.d_hidden = Matrix(hidden.rows(), hidden.cols());
    if (lambda > 0.0) {
        auto ce = checked_cross_entropy(logits, labels_onehot, train_rows);
        out.value += lambda * ce.value;
        numkit::axpy_inplace(out.d_logits, lambda, ce.grad);
    }
    if (lambda >= 1.0 || bundle.scope.empty()) return out;

    const std::size_t n_s = bundle.scope.size();
    const double inv = 1.0 / static_cast<double>(n_s);
    const double kd = 1.0 - lambda;

    Matrix h_s = gather_rows(hidden, bundle.scope);
    Matrix s_mat = numkit::tanh_map(numkit::matmul(h_s, factors.w.value));
    Matrix c = numkit::row_softmax(numkit::matmul(s_mat, factors.t.value));
    ScopeKl skl = compute_scope_kl(logits, bundle);

    // node-wise weighted KL: (1/n_s)·Σ_v Σ_i C_vi·KL_vi
    double kl_term = 0.0;
    for (std::size_t v = 0; v < n_s; ++v) {
        for (int i = 0; i < bundle.teachers(); ++i) kl_term += c(v, i) * skl.kl[i][v];
    }
    kl_term *= inv;
    auto entropy = numkit::entropy_of_mean(c);
    out.value += kd * (kl_term - gamma * entropy.value);

    scatter_kl_grad(out.d_logits, bundle, skl,
                    [&](std::size_t v, int i) { return kd * inv * c(v, i); });

    // gradient into the coefficients, then through softmax → T → tanh → W → H
    Matrix d_c(n_s, bundle.teachers());
    for (std::size_t v = 0; v < n_s; ++v) {
        for (int i = 0; i < bundle.teachers(); ++i) {
            d_c(v, i) = kd * (inv * skl.kl[i][v] - gamma * entropy.grad(v, i));
        }
    }
    Matrix d_b = numkit::row_softmax_backward(c, d_c);
    numkit::add_inplace(factors.t.grad, numkit::matmul_at_b(s_mat, d_b));
    Matrix d_s = numkit::matmul_a_bt(d_b, factors.t.value);
    Matrix d_pre = numkit::tanh_backward(s_mat, d_s);
    numkit::add_inplace(factors.w.grad, numkit::matmul_at_b(h_s, d_pre));
    Matrix d_h_s = numkit::matmul_a_bt(d_pre, factors.w.value);
    for (std::size_t v = 0; v < n_s; ++v) {
        double* dst = out.d_hidden.row(bundle.scope[v]);
        const double* src = d_h_s.row(v);
        for (std::size_t j = 0; j < hidden.cols(); ++j) dst[j] += src[j];
    }
    return out;
}

double student_loss_and_grads(StudentModel& student, const Matrix& x,
                              const Matrix& labels_onehot, std::span<const NodeId> train_rows,
                              const SoftLabelBundle& bundle, const DistillConfig& cfg) {
    for (ParamTensor* p : student.mlp.parameters()) p->zero_grad();
    if (student.factors) {
        student.factors->w.zero_grad();
        student.factors->t.zero_grad();
    }
    if (student.para_logits) student.para_logits->zero_grad();

    MlpTrace tr = mlp_forward_trace(student.mlp, x);
    double value = 0.0;
    Matrix d_logits;
    const Matrix* d_hidden = nullptr;
    Matrix d_hidden_store;

    switch (student.mode) {
        case Mode::Mgfnn: {
            LossResult lr = mgfnn_loss(tr.logits, labels_onehot, train_rows, bundle, cfg.lambda);
            value = lr.value;
            d_logits = std::move(lr.d_logits);
            break;
        }
        case Mode::MgfnnPlus: {
            if (!student.factors) throw ValidationError("mgfnn-plus student has no factors");
            PlusLossResult pl =
                mgfnn_plus_loss(tr.logits, tr.hidden, *student.factors, bundle, cfg.lambda,
                                cfg.gamma, labels_onehot, train_rows);
            value = pl.value;
            d_logits = std::move(pl.d_logits);
            d_hidden_store = std::move(pl.d_hidden);
            d_hidden = &d_hidden_store;
            break;
        }
        case Mode::Mean:
        case Mode::Para: {
            std::vector<double> weights;
            Matrix w_row;
            if (student.mode == Mode::Mean) {
                weights.assign(bundle.teachers(), 1.0 / static_cast<double>(bundle.teachers()));
            } else {
                if (!student.para_logits) throw ValidationError("para student has no weights");
                w_row = numkit::row_softmax(student.para_logits->value);
                weights.assign(w_row.values().begin(), w_row.values().end());
            }
            d_logits = Matrix(tr.logits.rows(), tr.logits.cols());
            if (cfg.lambda > 0.0) {
                auto ce = checked_cross_entropy(tr.logits, labels_onehot, train_rows);
                value += cfg.lambda * ce.value;
                numkit::axpy_inplace(d_logits, cfg.lambda, ce.grad);
            }
            if (cfg.lambda < 1.0) {
                ViewwiseLossResult vw = viewwise_loss(tr.logits, bundle, weights);
                value += (1.0 - cfg.lambda) * vw.value;
                numkit::axpy_inplace(d_logits, 1.0 - cfg.lambda, vw.d_logits);
                if (student.mode == Mode::Para) {
                    Matrix d_w(1, bundle.teachers());
                    for (int i = 0; i < bundle.teachers(); ++i) {
                        d_w(0, i) = (1.0 - cfg.lambda) * vw.d_weights[i];
                    }
                    numkit::add_inplace(student.para_logits->grad,
                                        numkit::row_softmax_backward(w_row, d_w));
                }
            }
            break;
        }
    }
    mlp_backward(student.mlp, x, tr, d_logits, d_hidden);
    return value;
}

StudentTrainResult train_student(const Matrix& x, const std::vector<NodeId>& y,
                                 const mgraph::SplitSpec& splits, const SoftLabelBundle& bundle,
                                 const DistillConfig& cfg) {
    cfg.validate();
    splits.validate(static_cast<NodeId>(x.rows()));
    if (y.size() != x.rows()) throw ValidationError("label count does not match feature rows");
    const int k = static_cast<int>(bundle.teacher_probs.empty()
                                       ? 0
                                       : bundle.teacher_probs.front().cols());
    bundle.validate(k);
    for (NodeId node : bundle.scope) {
        if (node < 0 || static_cast<std::size_t>(node) >= x.rows()) {
            throw ValidationError("soft-label scope does not match the feature rows");
        }
    }
    for (NodeId c : y) {
        if (c < 0 || c >= k) throw ValidationError("label outside the teacher class count");
    }

    StudentModel student;
    student.mode = cfg.mode;
    student.mlp = init_mlp(static_cast<int>(x.cols()), cfg.hidden, k, cfg.layers, cfg.seed);
    if (cfg.mode == Mode::MgfnnPlus) {
        const int coeff_in = cfg.layers >= 2 ? cfg.hidden : static_cast<int>(x.cols());
        student.factors = init_coeff_factors(coeff_in, cfg.rank, bundle.teachers(), cfg.seed);
    }
    if (cfg.mode == Mode::Para) {
        student.para_logits = ParamTensor(Matrix(1, bundle.teachers()));  // uniform start
    }

    Matrix labels(x.rows(), k);
    for (std::size_t i = 0; i < y.size(); ++i) labels(i, y[i]) = 1.0;

    std::vector<ParamTensor*> params = student.mlp.parameters();
    if (student.factors) {
        params.push_back(&student.factors->w);
        params.push_back(&student.factors->t);
    }
    if (student.para_logits) params.push_back(&*student.para_logits);

    StudentTrainResult result;
    StudentModel best = student;
    double best_acc = -1.0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const double loss = student_loss_and_grads(student, x, labels, splits.train, bundle, cfg);
        if (!std::isfinite(loss)) {
            throw RuntimeFailure("non-finite student loss at epoch " + std::to_string(epoch));
        }
        numkit::adam_step(params, cfg.adam);

        MlpForward eval = mlp_forward(student.mlp, x);
        const std::vector<NodeId> pred = argmax_rows(eval.logits);
        std::int64_t correct = 0;
        for (NodeId i : splits.val) {
            if (pred[i] == y[i]) ++correct;
        }
        const double val_acc =
            static_cast<double>(correct) / static_cast<double>(splits.val.size());
        result.log.push_back({epoch, loss, val_acc});
        if (val_acc > best_acc) {
            best_acc = val_acc;
            best = student;
        }
    }
    result.model = cfg.epochs > 0 ? std::move(best) : std::move(student);
    return result;
}

std::string export_coefficients(const Matrix& h, const CoeffFactors& factors,
                                std::span<const NodeId> nodes) {
    for (NodeId node : nodes) {
        if (node < 0 || static_cast<std::size_t>(node) >= h.rows()) {
            throw ValidationError("unknown node id " + std::to_string(node));
        }
    }
    Matrix rows = gather_rows(h, nodes);
    Matrix c = coefficients(rows, factors);
    std::string csv = "node";
    for (std::size_t i = 1; i <= c.cols(); ++i) csv += ",c_" + std::to_string(i);
    csv += "\n";
    for (std::size_t v = 0; v < nodes.size(); ++v) {
        csv += std::to_string(nodes[v]);
        for (std::size_t i = 0; i < c.cols(); ++i) csv += "," + format_real(c(v, i));
        csv += "\n";
    }
    return csv;
}

std::string student_to_json(const StudentModel& model) {
    nlohmann::json doc;
    doc["format"] = "mgfd-student-v1";
    doc["arch"] = {{"mode", to_string(model.mode)},
                   {"layers", model.mlp.layers},
                   {"hidden", model.mlp.hidden},
                   {"in_dim", model.mlp.in_dim},
                   {"classes", model.mlp.out_dim},
                   {"rank", model.factors ? model.factors->rank : 0},
                   {"coeff_in",
                    model.factors ? static_cast<int>(model.factors->w.value.rows()) : 0},
                   {"teachers", model.factors
                                    ? static_cast<int>(model.factors->t.value.cols())
                                    : (model.para_logits
                                           ? static_cast<int>(model.para_logits->value.cols())
                                           : 0)}};
    nlohmann::json params = nlohmann::json::object();
    for (int l = 0; l < model.mlp.layers; ++l) {
        const std::string prefix = "mlp.layer" + std::to_string(l) + ".";
        params[prefix + "weight"] = detail::matrix_to_json(model.mlp.weights[l].value);
        params[prefix + "bias"] = detail::matrix_to_json(model.mlp.biases[l].value);
    }
    if (model.factors) {
        params["coeff.w"] = detail::matrix_to_json(model.factors->w.value);
        params["coeff.t"] = detail::matrix_to_json(model.factors->t.value);
    }
    if (model.para_logits) {
        params["para.logits"] = detail::matrix_to_json(model.para_logits->value);
    }
    doc["params"] = std::move(params);
    return doc.dump(2) + "\n";
}

StudentModel student_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed student checkpoint: " + std::string(e.what()));
    }
    if (!doc.contains("format") || doc["format"] != "mgfd-student-v1") {
        throw ValidationError("not a student checkpoint (unknown format field)");
    }
    const nlohmann::json& arch = doc.at("arch");
    StudentModel model;
    model.mode = mode_from_string(arch.at("mode").get<std::string>());
    const int layers = arch.at("layers").get<int>();
    const int hidden = arch.at("hidden").get<int>();
    const int in_dim = arch.at("in_dim").get<int>();
    const int classes = arch.at("classes").get<int>();
    model.mlp = init_mlp(in_dim, hidden, classes, layers, 0);

    const nlohmann::json& params = doc.at("params");
    for (int l = 0; l < layers; ++l) {
        const std::string prefix = "mlp.layer" + std::to_string(l) + ".";
        const std::size_t fan_in = l == 0 ? in_dim : hidden;
        const std::size_t fan_out = l == layers - 1 ? classes : hidden;
        model.mlp.weights[l].value =
            detail::matrix_from_json(detail::checkpoint_param(params, prefix + "weight"),
                                     prefix + "weight", fan_in, fan_out);
        model.mlp.biases[l].value =
            detail::matrix_from_json(detail::checkpoint_param(params, prefix + "bias"),
                                     prefix + "bias", 1, fan_out);
    }
    if (model.mode == Mode::MgfnnPlus) {
        const int rank = arch.at("rank").get<int>();
        const int teachers = arch.at("teachers").get<int>();
        const int coeff_in = arch.at("coeff_in").get<int>();
        CoeffFactors f;
        f.rank = rank;
        f.w = ParamTensor(detail::matrix_from_json(detail::checkpoint_param(params, "coeff.w"),
                                                   "coeff.w", coeff_in, rank));
        f.t = ParamTensor(detail::matrix_from_json(detail::checkpoint_param(params, "coeff.t"),
                                                   "coeff.t", rank, teachers));
        model.factors = std::move(f);
    }
    if (model.mode == Mode::Para) {
        const int teachers = arch.at("teachers").get<int>();
        model.para_logits = ParamTensor(
            detail::matrix_from_json(detail::checkpoint_param(params, "para.logits"),
                                     "para.logits", 1, teachers));
    }
    return model;
}

void save_student(const std::filesystem::path& path, const StudentModel& model) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write checkpoint: " + path.string());
    out << student_to_json(model);
    if (!out) throw RuntimeFailure("checkpoint write failed: " + path.string());
}

StudentModel load_student(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("missing checkpoint file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return student_from_json(ss.str());
}

}  // namespace mgfd::distill
