#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mgfd/distill.hpp"
#include "mgfd/mgraph.hpp"
#include "mgfd/numkit.hpp"
#include "mgfd/teacher.hpp"

namespace mgfd::evalbench {

using mgraph::NodeId;

/// Fraction of subset nodes whose predicted class equals the true class.
/// The subset must be non-empty and index into both vectors.
double accuracy(std::span<const NodeId> predicted, std::span<const NodeId> truth,
                std::span<const NodeId> subset);

/// ind_weight·ind_acc + (1−ind_weight)·tran_acc, the production-setting score.
double prod_interpolate(double ind_acc, double tran_acc, double ind_weight = 0.2);

/// A node counts as correct iff ANY of the prediction vectors matches its true
/// class — the upper bound an oracle model selector could reach.
double ideal_ensemble_accuracy(const std::vector<std::vector<NodeId>>& per_teacher_predictions,
                               std::span<const NodeId> truth, std::span<const NodeId> subset);

std::vector<NodeId> argmax_classes(const numkit::Matrix& logits);

/// Per-view, integrated, and ideal-ensemble accuracy of a trained teacher on
/// one node subset, computed on the graph as given (full edges for deployment
/// numbers, cut edges for training-time numbers).
struct TeacherEval {
    std::vector<double> per_teacher_accs;  // views then, last, the integrated model
    double integrated_acc = 0.0;
    double ideal_acc = 0.0;
};

TeacherEval evaluate_teacher(const teacher::TeacherModel& model,
                             const mgraph::MultiplexGraph& g, std::span<const NodeId> subset);

struct EvalRow {
    std::uint64_t seed = 0;
    double tran_acc = 0.0;
    double ind_acc = 0.0;
    double prod_acc = 0.0;
    double ind_weight = 0.0;  // 0 whenever the inductive set is empty
};

struct EvalReport {
    std::vector<EvalRow> rows;
};

struct Summary {
    double mean = 0.0;
    double stddev = 0.0;  // population standard deviation
};

Summary summarize(std::span<const double> values);

std::string eval_report_csv(const EvalReport& report);
std::string eval_summary_json(const EvalReport& report);

/// Teacher side of one production run: cross edges to the inductive set are
/// removed before training (asserted to zero), and soft labels cover exactly
/// the nodes the teacher may see — everything outside the inductive set.
struct ProductionSeedRun {
    teacher::TeacherModel model;
    SoftLabelBundle bundle;
    mgraph::MultiplexGraph train_graph;
};

ProductionSeedRun production_teacher_run(const mgraph::MultiplexGraph& g,
                                         const mgraph::ProductionSplit& split,
                                         teacher::TeacherConfig tcfg, std::uint64_t seed);

/// Student side: distills on the full feature matrix (its forward reads rows
/// independently, so inductive rows leak nothing), then scores transductive
/// accuracy on obs, inductive on ind, and the production interpolation.
EvalRow production_student_row(const ProductionSeedRun& run, const mgraph::MultiplexGraph& g,
                               const mgraph::ProductionSplit& split,
                               distill::DistillConfig scfg, std::uint64_t seed);

/// One row per seed. Teacher and student derive distinct per-seed streams, so
/// reruns with the same seed list are bit-identical.
EvalReport run_production_eval(const mgraph::MultiplexGraph& g,
                               const mgraph::ProductionSplit& split,
                               const teacher::TeacherConfig& tcfg,
                               const distill::DistillConfig& scfg,
                               std::span<const std::uint64_t> seeds);

struct BenchConfig {
    int fanout = 10;
    int repeats = 20;   // timed repeats per method (median reported)
    int warmups = 3;
    std::uint64_t seed = 0;  // drives the neighbor-sampled fetch

    void validate() const;
};

struct BenchMethod {
    std::string name;
    std::int64_t fetched_nodes = 0;
    double median_ms = 0.0;
    double speedup_vs_teacher = 1.0;
};

struct BenchReport {
    BenchMethod full_teacher;     // L-hop fetch + stack forward
    BenchMethod sampled_teacher;  // neighbor-sampled fetch + stack forward
    BenchMethod student;          // feature-row gather + MLP forward
    int repeats = 0;
};

/// Times the per-request deployment path for the given target nodes: each
/// repetition fetches from scratch and runs inference end to end. Fetched-node
/// counts are deterministic per seed; only wall times vary between runs.
BenchReport bench_inference(const mgraph::MultiplexGraph& g,
                            const teacher::TeacherModel& teacher_model,
                            const distill::MlpParams& student,
                            std::span<const NodeId> targets, const BenchConfig& cfg = {});

std::string bench_report_csv(const BenchReport& report);
std::string bench_summary_json(const BenchReport& report);

}  // namespace mgfd::evalbench
