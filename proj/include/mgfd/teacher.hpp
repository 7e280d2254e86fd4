#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mgfd/mgraph.hpp"
#include "mgfd/numkit.hpp"
#include "mgfd/softlabels.hpp"
#include "mgfd/trainlog.hpp"

namespace mgfd::teacher {

enum class LayerKind { SageMean, Gcn };
enum class Integration { Mean, Learned };

std::string to_string(LayerKind k);
std::string to_string(Integration i);
LayerKind layer_kind_from_string(const std::string& s);
Integration integration_from_string(const std::string& s);

/// One message-passing layer. sage-mean uses both weights
/// (self transform + mean-aggregated neighbor transform); gcn uses only
/// w_neigh on the symmetrically normalized aggregate.
struct GnnLayerParams {
    LayerKind kind = LayerKind::SageMean;
    numkit::ParamTensor w_self;   // d_in×d_out (sage only; empty for gcn)
    numkit::ParamTensor w_neigh;  // d_in×d_out
    numkit::ParamTensor bias;     // 1×d_out
};

struct TeacherConfig {
    LayerKind kind = LayerKind::SageMean;
    Integration integration = Integration::Mean;
    int layers = 2;
    int hidden = 128;
    int epochs = 100;
    double dropout = 0.0;  // applied to hidden activations during training only
    numkit::AdamConfig adam;
    std::uint64_t seed = 0;

    void validate() const;
};

/// r view-specific stacks, an integration rule over per-view logits, and one
/// classifier head shared across views so the integrated logits decompose
/// exactly as the weighted sum of per-view logits.
struct TeacherModel {
    LayerKind kind = LayerKind::SageMean;
    Integration integration = Integration::Mean;
    int layers = 0;
    int hidden = 0;
    int in_dim = 0;
    int classes = 0;
    int views = 0;

    std::vector<std::vector<GnnLayerParams>> stacks;  // views × layers
    numkit::ParamTensor classifier;                   // hidden×classes
    numkit::ParamTensor alpha_logits;                 // 1×views (learned mode only)

    /// Integration weights: exactly 1/r each in mean mode, softmax(alpha_logits)
    /// in learned mode.
    std::vector<double> alpha() const;
    std::vector<numkit::ParamTensor*> parameters();
};

TeacherModel init_teacher(int in_dim, int classes, int views, const TeacherConfig& cfg);

/// H_out[v] = H_in[v]·W_self + mean_{u in N(v)} H_in[u]·W_neigh + bias.
/// Isolated nodes contribute a zero neighbor term. No activation applied.
numkit::Matrix sage_layer_forward(const mgraph::Csr& view, const numkit::Matrix& h_in,
                                  const GnnLayerParams& params);

/// H_out = Â·H_in·W_neigh + bias with Â = D̃^{-1/2}(A+I)D̃^{-1/2}.
numkit::Matrix gcn_layer_forward(const mgraph::Csr& view, const numkit::Matrix& h_in,
                                 const GnnLayerParams& params);

struct TeacherOutputs {
    std::vector<numkit::Matrix> view_logits;  // r matrices n×k
    numkit::Matrix integrated_logits;         // n×k, Σ_i α_i·view_logits[i]
    std::vector<numkit::Matrix> probs;        // r+1 softmax rows, last = integrated
};

TeacherOutputs teacher_forward(const TeacherModel& model, const mgraph::MultiplexGraph& g);

/// Zeroes every parameter gradient, runs one forward/backward pass of the
/// training objective (cross-entropy of the integrated logits over train_rows),
/// and returns the loss. This is train_teacher's per-epoch step, exposed so
/// gradients can be finite-difference checked end to end.
double teacher_loss_and_grads(TeacherModel& model, const mgraph::MultiplexGraph& g,
                              const numkit::Matrix& labels_onehot,
                              std::span<const mgraph::NodeId> train_rows);

struct TeacherTrainResult {
    TeacherModel model;  // parameters of the best-validation-accuracy epoch
    std::vector<EpochLogRow> log;
};

/// Full-batch training of cross-entropy on the integrated logits over the
/// train split, Adam updates, model selection by best validation accuracy.
/// Deterministic per cfg.seed. Throws RuntimeFailure on a non-finite loss.
TeacherTrainResult train_teacher(const mgraph::MultiplexGraph& g,
                                 const mgraph::SplitSpec& splits, const TeacherConfig& cfg);

/// Per-view + integrated probabilities for the scope rows, computed on exactly
/// the graph passed in (callers pass the training-time graph in inductive runs).
SoftLabelBundle export_soft_labels(const TeacherModel& model, const mgraph::MultiplexGraph& g,
                                   std::span<const mgraph::NodeId> scope);

/// Single-JSON checkpoint: {format, arch, params with shapes}. Loaders reject
/// unknown formats and shape mismatches.
std::string teacher_to_json(const TeacherModel& model);
TeacherModel teacher_from_json(const std::string& text);
void save_teacher(const std::filesystem::path& path, const TeacherModel& model);
TeacherModel load_teacher(const std::filesystem::path& path);

}  // namespace mgfd::teacher
