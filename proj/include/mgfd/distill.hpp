#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mgfd/mgraph.hpp"
#include "mgfd/numkit.hpp"
#include "mgfd/softlabels.hpp"
#include "mgfd/trainlog.hpp"

namespace mgfd::distill {

using mgraph::NodeId;

/// Distillation objectives: KL to the integrated teacher only (mgfnn),
/// node-wise weighted KL to all teachers with learned low-rank coefficients
/// (mgfnn-plus), or the view-wise ablations with one shared weight vector
/// (mean = fixed uniform, para = learned via softmax).
enum class Mode { Mgfnn, MgfnnPlus, Mean, Para };

std::string to_string(Mode m);
Mode mode_from_string(const std::string& s);

/// Plain MLP: ReLU between hidden layers, linear output. Inference reads
/// features only — no adjacency structure appears anywhere in this module.
struct MlpParams {
    int layers = 0;
    int in_dim = 0;
    int hidden = 0;
    int out_dim = 0;
    std::vector<numkit::ParamTensor> weights;
    std::vector<numkit::ParamTensor> biases;

    std::vector<numkit::ParamTensor*> parameters();
};

/// Low-rank factorization of the n×(r+1) coefficient matrix:
/// C = row_softmax(tanh(H·W)·T), so only h×m + m×(r+1) values are learned.
struct CoeffFactors {
    numkit::ParamTensor w;  // hidden×rank
    numkit::ParamTensor t;  // rank×teachers
    int rank = 1;
};

struct DistillConfig {
    Mode mode = Mode::MgfnnPlus;
    double lambda = 0.0;  // CE weight; 1-lambda scales the distillation term
    double gamma = 0.01;  // mean-entropy regularizer weight (mgfnn-plus only)
    int rank = 2;         // m of the low-rank factorization
    int layers = 2;
    int hidden = 128;
    int epochs = 200;
    std::uint64_t seed = 0;
    numkit::AdamConfig adam;

    void validate() const;
};

MlpParams init_mlp(int in_dim, int hidden, int out_dim, int layers, std::uint64_t seed);

/// Factors start uniform in ±0.01 so early training sits near the
/// uniform-coefficient regime before node-wise specialization kicks in.
CoeffFactors init_coeff_factors(int hidden, int rank, int teachers, std::uint64_t seed);

struct MlpForward {
    numkit::Matrix hidden;  // post-activation output of the last hidden layer
    numkit::Matrix logits;  // n×k
};

/// For single-layer students the hidden representation is defined as the raw
/// input (no hidden layer exists); documented degenerate case.
MlpForward mlp_forward(const MlpParams& params, const numkit::Matrix& x);

/// C = row_softmax(tanh(H·W)·T): one coefficient row per input row, each on
/// the probability simplex. W = 0 collapses every row to exactly uniform.
numkit::Matrix coefficients(const numkit::Matrix& h, const CoeffFactors& factors);

struct LossResult {
    double value = 0.0;
    numkit::Matrix d_logits;  // same shape as the logits argument
};

/// lambda·CE(train_rows) + (1-lambda)·mean-KL(integrated teacher ‖ student)
/// over the bundle scope. Throws if lambda > 0 with an empty train set.
LossResult mgfnn_loss(const numkit::Matrix& logits, const numkit::Matrix& labels_onehot,
                      std::span<const NodeId> train_rows, const SoftLabelBundle& bundle,
                      double lambda);

struct ViewwiseLossResult {
    double value = 0.0;
    numkit::Matrix d_logits;
    std::vector<double> d_weights;  // per-teacher mean KL, the gradient w.r.t. weights
};

/// Σ_i weights[i] · mean-KL(teacher_i ‖ student) over the bundle scope.
/// weights must lie on the simplex within 1e-8.
ViewwiseLossResult viewwise_loss(const numkit::Matrix& logits, const SoftLabelBundle& bundle,
                                 std::span<const double> weights);

struct PlusLossResult {
    double value = 0.0;
    numkit::Matrix d_logits;
    numkit::Matrix d_hidden;  // gradient through the coefficient network only
};

/// lambda·CE + (1-lambda)·( (1/|scope|)·Σ_v Σ_i C_vi·KL_vi − gamma·H(mean C) ).
/// Coefficient-factor gradients accumulate into factors.w.grad / factors.t.grad;
/// the returned d_hidden covers the H→C path (the H→logits path flows through
/// d_logits in the caller's MLP backward).
PlusLossResult mgfnn_plus_loss(const numkit::Matrix& logits, const numkit::Matrix& hidden,
                               CoeffFactors& factors, const SoftLabelBundle& bundle,
                               double lambda, double gamma,
                               const numkit::Matrix& labels_onehot,
                               std::span<const NodeId> train_rows);

struct StudentModel {
    Mode mode = Mode::Mgfnn;
    MlpParams mlp;
    std::optional<CoeffFactors> factors;            // mgfnn-plus
    std::optional<numkit::ParamTensor> para_logits; // para: 1×teachers weight logits
};

/// One full training step: zeroes gradients, runs the configured objective,
/// accumulates all gradients (MLP, factors, para logits), returns the loss.
/// Exposed so the whole composite gradient can be finite-difference checked.
double student_loss_and_grads(StudentModel& student, const numkit::Matrix& x,
                              const numkit::Matrix& labels_onehot,
                              std::span<const NodeId> train_rows,
                              const SoftLabelBundle& bundle, const DistillConfig& cfg);

struct StudentTrainResult {
    StudentModel model;  // parameters of the best-validation-accuracy epoch
    std::vector<EpochLogRow> log;
};

/// Adam over the configured loss with best-validation-accuracy selection,
/// deterministic per seed. Consumes features only.
StudentTrainResult train_student(const numkit::Matrix& x, const std::vector<NodeId>& y,
                                 const mgraph::SplitSpec& splits, const SoftLabelBundle& bundle,
                                 const DistillConfig& cfg);

/// CSV "node,c_1,...,c_{r+1}" for the requested nodes (ids index rows of h).
/// Unknown node ids are a ValidationError.
std::string export_coefficients(const numkit::Matrix& h, const CoeffFactors& factors,
                                std::span<const NodeId> nodes);

std::string student_to_json(const StudentModel& model);
StudentModel student_from_json(const std::string& text);
void save_student(const std::filesystem::path& path, const StudentModel& model);
StudentModel load_student(const std::filesystem::path& path);

}  // namespace mgfd::distill
