#include "mgfd/teacher.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mgfd/errors.hpp"
#include "paramio.hpp"

namespace mgfd {

void SoftLabelBundle::validate(int classes) const {
    if (teacher_probs.size() < 2) {
        throw ValidationError("soft-label bundle needs at least one view plus the whole model");
    }
    for (const numkit::Matrix& probs : teacher_probs) {
        if (probs.rows() != scope.size() || probs.cols() != static_cast<std::size_t>(classes)) {
            throw ValidationError("soft-label matrix shape does not match scope x classes");
        }
        for (std::size_t i = 0; i < probs.rows(); ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < probs.cols(); ++j) {
                if (probs(i, j) < -1e-8) throw ValidationError("negative soft-label probability");
                sum += probs(i, j);
            }
            if (std::abs(sum - 1.0) > 1e-8) {
                throw ValidationError("soft-label row off the probability simplex");
            }
        }
    }
}

}  // namespace mgfd

namespace mgfd::teacher {

namespace {

using mgraph::Csr;
using mgraph::MultiplexGraph;
using mgraph::NodeId;
using numkit::Matrix;
using numkit::ParamTensor;

void add_bias_rows(Matrix& m, const Matrix& bias) {
    for (std::size_t i = 0; i < m.rows(); ++i) {
        double* row = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) row[j] += bias(0, j);
    }
}

// out[v] = mean of h over N(v); zero vector for isolated nodes.
Matrix agg_mean(const Csr& view, const Matrix& h) {
    Matrix out(h.rows(), h.cols());
    for (NodeId v = 0; v < static_cast<NodeId>(h.rows()); ++v) {
        auto nb = view.neighbors(v);
        if (nb.empty()) continue;
        double* dst = out.row(v);
        for (NodeId u : nb) {
            const double* src = h.row(u);
            for (std::size_t j = 0; j < h.cols(); ++j) dst[j] += src[j];
        }
        const double inv = 1.0 / static_cast<double>(nb.size());
        for (std::size_t j = 0; j < h.cols(); ++j) dst[j] *= inv;
    }
    return out;
}

// Adjoint of agg_mean: out[u] = Σ_{v in N(u)} din[v] / deg(v).
Matrix agg_mean_adjoint(const Csr& view, const Matrix& din) {
    Matrix out(din.rows(), din.cols());
    std::vector<double> inv_deg(din.rows(), 0.0);
    for (NodeId v = 0; v < static_cast<NodeId>(din.rows()); ++v) {
        auto deg = view.degree(v);
        if (deg > 0) inv_deg[v] = 1.0 / static_cast<double>(deg);
    }
    for (NodeId u = 0; u < static_cast<NodeId>(din.rows()); ++u) {
        double* dst = out.row(u);
        for (NodeId v : view.neighbors(u)) {
            const double* src = din.row(v);
            const double w = inv_deg[v];
            for (std::size_t j = 0; j < din.cols(); ++j) dst[j] += w * src[j];
        }
    }
    return out;
}

// Â h with Â = D̃^{-1/2}(A+I)D̃^{-1/2}: out[v] = c_v² h[v] + c_v Σ c_u h[u],
// c_v = 1/sqrt(deg(v)+1). Symmetric, hence self-adjoint in the backward pass.
Matrix agg_gcn(const Csr& view, const Matrix& h) {
    Matrix out(h.rows(), h.cols());
    std::vector<double> norm(h.rows());
    for (NodeId v = 0; v < static_cast<NodeId>(h.rows()); ++v) {
        norm[v] = 1.0 / std::sqrt(static_cast<double>(view.degree(v)) + 1.0);
    }
    for (NodeId v = 0; v < static_cast<NodeId>(h.rows()); ++v) {
        double* dst = out.row(v);
        const double* self = h.row(v);
        const double cv = norm[v];
        for (std::size_t j = 0; j < h.cols(); ++j) dst[j] = cv * cv * self[j];
        for (NodeId u : view.neighbors(v)) {
            const double* src = h.row(u);
            const double w = cv * norm[u];
            for (std::size_t j = 0; j < h.cols(); ++j) dst[j] += w * src[j];
        }
    }
    return out;
}

void check_layer_shapes(const Matrix& h_in, const GnnLayerParams& params) {
    if (h_in.cols() != params.w_neigh.value.rows()) {
        throw ValidationError("layer input width " + std::to_string(h_in.cols()) +
                              " does not match weight rows " +
                              std::to_string(params.w_neigh.value.rows()));
    }
    if (params.kind == LayerKind::SageMean &&
        !params.w_self.value.same_shape(params.w_neigh.value)) {
        throw ValidationError("sage layer W_self and W_neigh shapes differ");
    }
}

Matrix glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    return Matrix::random_uniform(fan_in, fan_out, rng, -bound, bound);
}

// Everything the analytic backward pass needs from one training forward.
struct LayerTrace {
    Matrix aggregated;      // agg(h_in), the factor multiplying w_neigh
    Matrix pre_activation;  // before ReLU (none applied on the last layer)
    Matrix dropout_mask;    // empty when dropout is off or layer is last
};

struct ForwardTrace {
    std::vector<std::vector<LayerTrace>> layers;     // views × L
    std::vector<std::vector<Matrix>> activations;    // views × (L+1), [0] = X
    std::vector<Matrix> view_logits;                 // r of n×k
    Matrix integrated_logits;
};

Matrix layer_forward_with_trace(const Csr& view, const Matrix& h_in,
                                const GnnLayerParams& params, LayerTrace& trace) {
    check_layer_shapes(h_in, params);
    Matrix out;
    if (params.kind == LayerKind::SageMean) {
        trace.aggregated = agg_mean(view, h_in);
        out = numkit::matmul(h_in, params.w_self.value);
        numkit::add_inplace(out, numkit::matmul(trace.aggregated, params.w_neigh.value));
    } else {
        trace.aggregated = agg_gcn(view, h_in);
        out = numkit::matmul(trace.aggregated, params.w_neigh.value);
    }
    add_bias_rows(out, params.bias.value);
    return out;
}

ForwardTrace forward_trace(const TeacherModel& model, const MultiplexGraph& g, double dropout,
                           Rng* dropout_rng) {
    if (g.d != model.in_dim) {
        throw ValidationError("graph feature dim " + std::to_string(g.d) +
                              " does not match model input dim " + std::to_string(model.in_dim));
    }
    if (g.r != model.views) {
        throw ValidationError("graph view count does not match model");
    }
    ForwardTrace trace;
    trace.layers.resize(model.views);
    trace.activations.resize(model.views);
    const std::vector<double> alpha = model.alpha();
    for (int view = 0; view < model.views; ++view) {
        trace.activations[view].push_back(g.x);
        trace.layers[view].resize(model.layers);
        for (int layer = 0; layer < model.layers; ++layer) {
            LayerTrace& lt = trace.layers[view][layer];
            Matrix pre = layer_forward_with_trace(g.views[view],
                                                  trace.activations[view].back(),
                                                  model.stacks[view][layer], lt);
            lt.pre_activation = pre;
            Matrix act;
            if (layer + 1 < model.layers) {
                act = numkit::relu_map(pre);
                if (dropout > 0.0 && dropout_rng) {
                    lt.dropout_mask = Matrix(act.rows(), act.cols());
                    const double keep = 1.0 - dropout;
                    for (std::size_t i = 0; i < act.size(); ++i) {
                        const double m = dropout_rng->uniform() < dropout ? 0.0 : 1.0 / keep;
                        lt.dropout_mask.values()[i] = m;
                        act.values()[i] *= m;
                    }
                }
            } else {
                act = std::move(pre);
            }
            trace.activations[view].push_back(std::move(act));
        }
        trace.view_logits.push_back(
            numkit::matmul(trace.activations[view].back(), model.classifier.value));
    }
    trace.integrated_logits = Matrix(g.n, model.classes);
    for (int view = 0; view < model.views; ++view) {
        numkit::axpy_inplace(trace.integrated_logits, alpha[view], trace.view_logits[view]);
    }
    return trace;
}

// Accumulates gradients of a scalar loss into the model given dL/d(integrated
// logits). Mirrors forward_trace exactly.
void backward_trace(TeacherModel& model, const MultiplexGraph& g, const ForwardTrace& trace,
                    const Matrix& d_integrated) {
    const std::vector<double> alpha = model.alpha();
    std::vector<double> d_alpha(model.views, 0.0);
    for (int view = 0; view < model.views; ++view) {
        const Matrix& embedding = trace.activations[view].back();

        // integrated = Σ α_i · (E_i · classifier)
        d_alpha[view] = numkit::dot(d_integrated, trace.view_logits[view]);
        Matrix d_logits = d_integrated;
        numkit::scale_inplace(d_logits, alpha[view]);
        numkit::add_inplace(model.classifier.grad, numkit::matmul_at_b(embedding, d_logits));
        Matrix d_act = numkit::matmul_a_bt(d_logits, model.classifier.value);

        for (int layer = model.layers - 1; layer >= 0; --layer) {
            const LayerTrace& lt = trace.layers[view][layer];
            GnnLayerParams& params = model.stacks[view][layer];
            Matrix d_pre;
            if (layer + 1 < model.layers) {
                if (lt.dropout_mask.size() > 0) {
                    for (std::size_t i = 0; i < d_act.size(); ++i) {
                        d_act.values()[i] *= lt.dropout_mask.values()[i];
                    }
                }
                d_pre = numkit::relu_backward(lt.pre_activation, d_act);
            } else {
                d_pre = std::move(d_act);
            }
            numkit::add_inplace(params.bias.grad, numkit::col_sum(d_pre));
            numkit::add_inplace(params.w_neigh.grad,
                                numkit::matmul_at_b(lt.aggregated, d_pre));
            const Matrix& h_in = trace.activations[view][layer];
            if (params.kind == LayerKind::SageMean) {
                numkit::add_inplace(params.w_self.grad, numkit::matmul_at_b(h_in, d_pre));
                d_act = numkit::matmul_a_bt(d_pre, params.w_self.value);
                numkit::add_inplace(
                    d_act, agg_mean_adjoint(g.views[view],
                                            numkit::matmul_a_bt(d_pre, params.w_neigh.value)));
            } else {
                d_act = agg_gcn(g.views[view],
                                numkit::matmul_a_bt(d_pre, params.w_neigh.value));
            }
        }
    }
    if (model.integration == Integration::Learned) {
        Matrix alpha_row(1, model.views);
        Matrix d_alpha_row(1, model.views);
        for (int i = 0; i < model.views; ++i) {
            alpha_row(0, i) = alpha[i];
            d_alpha_row(0, i) = d_alpha[i];
        }
        numkit::add_inplace(model.alpha_logits.grad,
                            numkit::row_softmax_backward(alpha_row, d_alpha_row));
    }
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

double subset_accuracy(const std::vector<NodeId>& pred, const std::vector<NodeId>& truth,
                       std::span<const NodeId> subset) {
    std::int64_t correct = 0;
    for (NodeId i : subset) {
        if (pred[i] == truth[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(subset.size());
}

Matrix one_hot_labels(const std::vector<NodeId>& y, int k) {
    Matrix labels(y.size(), k);
    for (std::size_t i = 0; i < y.size(); ++i) labels(i, y[i]) = 1.0;
    return labels;
}

}  // namespace

std::string to_string(LayerKind k) {
    return k == LayerKind::SageMean ? "sage-mean" : "gcn";
}

std::string to_string(Integration i) { return i == Integration::Mean ? "mean" : "learned"; }

LayerKind layer_kind_from_string(const std::string& s) {
    if (s == "sage-mean") return LayerKind::SageMean;
    if (s == "gcn") return LayerKind::Gcn;
    throw ValidationError("unknown layer kind '" + s + "' (expected sage-mean or gcn)");
}

Integration integration_from_string(const std::string& s) {
    if (s == "mean") return Integration::Mean;
    if (s == "learned") return Integration::Learned;
    throw ValidationError("unknown integration '" + s + "' (expected mean or learned)");
}

void TeacherConfig::validate() const {
    if (layers < 1) throw ValidationError("teacher needs at least one layer");
    if (hidden < 1) throw ValidationError("teacher hidden dim must be positive");
    if (epochs < 0) throw ValidationError("teacher epochs must be non-negative");
    if (!(dropout >= 0.0 && dropout < 1.0)) {
        throw ValidationError("dropout must lie in [0,1)");
    }
    adam.validate();
}

std::vector<double> TeacherModel::alpha() const {
    std::vector<double> a(views);
    if (integration == Integration::Mean) {
        std::fill(a.begin(), a.end(), 1.0 / static_cast<double>(views));
        return a;
    }
    Matrix soft = numkit::row_softmax(alpha_logits.value);
    for (int i = 0; i < views; ++i) a[i] = soft(0, i);
    return a;
}

std::vector<ParamTensor*> TeacherModel::parameters() {
    std::vector<ParamTensor*> out;
    for (auto& stack : stacks) {
        for (GnnLayerParams& layer : stack) {
            if (layer.kind == LayerKind::SageMean) out.push_back(&layer.w_self);
            out.push_back(&layer.w_neigh);
            out.push_back(&layer.bias);
        }
    }
    out.push_back(&classifier);
    if (integration == Integration::Learned) out.push_back(&alpha_logits);
    return out;
}

TeacherModel init_teacher(int in_dim, int classes, int views, const TeacherConfig& cfg) {
    cfg.validate();
    if (in_dim < 1 || classes < 2 || views < 1) {
        throw ValidationError("teacher needs in_dim >= 1, classes >= 2, views >= 1");
    }
    TeacherModel model;
    model.kind = cfg.kind;
    model.integration = cfg.integration;
    model.layers = cfg.layers;
    model.hidden = cfg.hidden;
    model.in_dim = in_dim;
    model.classes = classes;
    model.views = views;

    Rng rng(mix_seed(cfg.seed, 0x7e4c));
    model.stacks.resize(views);
    for (int view = 0; view < views; ++view) {
        for (int layer = 0; layer < cfg.layers; ++layer) {
            const std::size_t fan_in = layer == 0 ? in_dim : cfg.hidden;
            const std::size_t fan_out = cfg.hidden;
            GnnLayerParams p;
            p.kind = cfg.kind;
            if (cfg.kind == LayerKind::SageMean) {
                p.w_self = ParamTensor(glorot(fan_in, fan_out, rng));
            }
            p.w_neigh = ParamTensor(glorot(fan_in, fan_out, rng));
            p.bias = ParamTensor(Matrix(1, fan_out));
            model.stacks[view].push_back(std::move(p));
        }
    }
    model.classifier = ParamTensor(glorot(cfg.hidden, classes, rng));
    if (cfg.integration == Integration::Learned) {
        model.alpha_logits = ParamTensor(Matrix(1, views));  // softmax(0) = uniform start
    }
    return model;
}

Matrix sage_layer_forward(const Csr& view, const Matrix& h_in, const GnnLayerParams& params) {
    if (params.kind != LayerKind::SageMean) {
        throw ValidationError("sage_layer_forward called with non-sage parameters");
    }
    LayerTrace unused;
    return layer_forward_with_trace(view, h_in, params, unused);
}

Matrix gcn_layer_forward(const Csr& view, const Matrix& h_in, const GnnLayerParams& params) {
    if (params.kind != LayerKind::Gcn) {
        throw ValidationError("gcn_layer_forward called with non-gcn parameters");
    }
    LayerTrace unused;
    return layer_forward_with_trace(view, h_in, params, unused);
}

TeacherOutputs teacher_forward(const TeacherModel& model, const MultiplexGraph& g) {
    ForwardTrace trace = forward_trace(model, g, 0.0, nullptr);
    TeacherOutputs out;
    out.view_logits = std::move(trace.view_logits);
    out.integrated_logits = std::move(trace.integrated_logits);
    for (const Matrix& z : out.view_logits) out.probs.push_back(numkit::row_softmax(z));
    out.probs.push_back(numkit::row_softmax(out.integrated_logits));
    return out;
}

double teacher_loss_and_grads(TeacherModel& model, const MultiplexGraph& g,
                              const Matrix& labels_onehot,
                              std::span<const NodeId> train_rows) {
    for (ParamTensor* p : model.parameters()) p->zero_grad();
    ForwardTrace trace = forward_trace(model, g, 0.0, nullptr);
    auto ce = numkit::cross_entropy_masked(trace.integrated_logits, labels_onehot, train_rows);
    backward_trace(model, g, trace, ce.grad);
    return ce.value;
}

TeacherTrainResult train_teacher(const MultiplexGraph& g, const mgraph::SplitSpec& splits,
                                 const TeacherConfig& cfg) {
    cfg.validate();
    splits.validate(g.n);
    TeacherModel model = init_teacher(g.d, g.k, g.r, cfg);
    const Matrix labels = one_hot_labels(g.y, g.k);
    const std::vector<ParamTensor*> params = model.parameters();

    TeacherTrainResult result;
    TeacherModel best = model;
    double best_acc = -1.0;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double loss;
        if (cfg.dropout > 0.0) {
            for (ParamTensor* p : params) p->zero_grad();
            Rng dropout_rng(mix_seed(cfg.seed, 0xd120, static_cast<std::uint64_t>(epoch)));
            ForwardTrace trace = forward_trace(model, g, cfg.dropout, &dropout_rng);
            auto ce = numkit::cross_entropy_masked(trace.integrated_logits, labels, splits.train);
            backward_trace(model, g, trace, ce.grad);
            loss = ce.value;
        } else {
            loss = teacher_loss_and_grads(model, g, labels, splits.train);
        }
        if (!std::isfinite(loss)) {
            throw RuntimeFailure("non-finite teacher loss at epoch " + std::to_string(epoch));
        }
        numkit::adam_step(params, cfg.adam);

        ForwardTrace eval = forward_trace(model, g, 0.0, nullptr);
        const double val_acc =
            subset_accuracy(argmax_rows(eval.integrated_logits), g.y, splits.val);
        result.log.push_back({epoch, loss, val_acc});
        if (val_acc > best_acc) {
            best_acc = val_acc;
            best = model;
        }
    }
    result.model = cfg.epochs > 0 ? std::move(best) : std::move(model);
    return result;
}

SoftLabelBundle export_soft_labels(const TeacherModel& model, const MultiplexGraph& g,
                                   std::span<const NodeId> scope) {
    TeacherOutputs out = teacher_forward(model, g);
    SoftLabelBundle bundle;
    bundle.scope.assign(scope.begin(), scope.end());
    for (const Matrix& probs : out.probs) {
        Matrix rows(scope.size(), model.classes);
        for (std::size_t i = 0; i < scope.size(); ++i) {
            const NodeId node = scope[i];
            if (node < 0 || node >= g.n) throw ValidationError("scope node out of range");
            std::copy(probs.row(node), probs.row(node) + model.classes, rows.row(i));
        }
        bundle.teacher_probs.push_back(std::move(rows));
    }
    bundle.validate(model.classes);
    return bundle;
}

std::string teacher_to_json(const TeacherModel& model) {
    nlohmann::json doc;
    doc["format"] = "mgfd-teacher-v1";
    doc["arch"] = {{"kind", to_string(model.kind)},
                   {"integration", to_string(model.integration)},
                   {"layers", model.layers},
                   {"hidden", model.hidden},
                   {"in_dim", model.in_dim},
                   {"classes", model.classes},
                   {"views", model.views}};
    nlohmann::json params = nlohmann::json::object();
    for (int view = 0; view < model.views; ++view) {
        for (int layer = 0; layer < model.layers; ++layer) {
            const std::string prefix =
                "view" + std::to_string(view) + ".layer" + std::to_string(layer) + ".";
            const GnnLayerParams& p = model.stacks[view][layer];
            if (p.kind == LayerKind::SageMean) {
                params[prefix + "w_self"] = detail::matrix_to_json(p.w_self.value);
            }
            params[prefix + "w_neigh"] = detail::matrix_to_json(p.w_neigh.value);
            params[prefix + "bias"] = detail::matrix_to_json(p.bias.value);
        }
    }
    params["classifier"] = detail::matrix_to_json(model.classifier.value);
    if (model.integration == Integration::Learned) {
        params["alpha_logits"] = detail::matrix_to_json(model.alpha_logits.value);
    }
    doc["params"] = std::move(params);
    return doc.dump(2) + "\n";
}

TeacherModel teacher_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed teacher checkpoint: " + std::string(e.what()));
    }
    if (!doc.contains("format") || doc["format"] != "mgfd-teacher-v1") {
        throw ValidationError("not a teacher checkpoint (unknown format field)");
    }
    const nlohmann::json& arch = doc.at("arch");
    TeacherConfig cfg;
    cfg.kind = layer_kind_from_string(arch.at("kind").get<std::string>());
    cfg.integration = integration_from_string(arch.at("integration").get<std::string>());
    cfg.layers = arch.at("layers").get<int>();
    cfg.hidden = arch.at("hidden").get<int>();
    cfg.epochs = 0;
    TeacherModel model = init_teacher(arch.at("in_dim").get<int>(),
                                      arch.at("classes").get<int>(),
                                      arch.at("views").get<int>(), cfg);
    const nlohmann::json& params = doc.at("params");
    for (int view = 0; view < model.views; ++view) {
        for (int layer = 0; layer < model.layers; ++layer) {
            const std::string prefix =
                "view" + std::to_string(view) + ".layer" + std::to_string(layer) + ".";
            GnnLayerParams& p = model.stacks[view][layer];
            const std::size_t fan_in = layer == 0 ? model.in_dim : model.hidden;
            if (p.kind == LayerKind::SageMean) {
                p.w_self.value = detail::matrix_from_json(
                    detail::checkpoint_param(params, prefix + "w_self"), prefix + "w_self",
                    fan_in, model.hidden);
            }
            p.w_neigh.value =
                detail::matrix_from_json(detail::checkpoint_param(params, prefix + "w_neigh"),
                                         prefix + "w_neigh", fan_in, model.hidden);
            p.bias.value =
                detail::matrix_from_json(detail::checkpoint_param(params, prefix + "bias"),
                                         prefix + "bias", 1, model.hidden);
        }
    }
    model.classifier.value =
        detail::matrix_from_json(detail::checkpoint_param(params, "classifier"), "classifier",
                                 model.hidden, model.classes);
    if (model.integration == Integration::Learned) {
        model.alpha_logits.value =
            detail::matrix_from_json(detail::checkpoint_param(params, "alpha_logits"),
                                     "alpha_logits", 1, model.views);
    }
    return model;
}

void save_teacher(const std::filesystem::path& path, const TeacherModel& model) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeFailure("cannot write checkpoint: " + path.string());
    out << teacher_to_json(model);
    if (!out) throw RuntimeFailure("checkpoint write failed: " + path.string());
}

TeacherModel load_teacher(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("missing checkpoint file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return teacher_from_json(ss.str());
}

}  // namespace mgfd::teacher
