#include "mgfd/evalbench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <utility>

#include <nlohmann/json.hpp>

#include "mgfd/errors.hpp"
#include "mgfd/rng.hpp"

namespace mgfd::evalbench {

namespace {

using numkit::Matrix;

std::string format_real(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void check_subset(std::span<const NodeId> subset, std::size_t n, const char* what) {
    if (subset.empty()) throw ValidationError(std::string(what) + " over an empty node set");
    for (NodeId id : subset) {
        if (id < 0 || static_cast<std::size_t>(id) >= n) {
            throw ValidationError(std::string(what) + ": node " + std::to_string(id) +
                                  " outside [0," + std::to_string(n) + ")");
        }
    }
}

double median_of(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const std::size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

// Keeps the optimizer from eliding the timed work.
volatile double g_sink = 0.0;

template <typename F>
double timed_median_ms(const BenchConfig& cfg, F&& body) {
    for (int i = 0; i < cfg.warmups; ++i) g_sink = g_sink + body();
    std::vector<double> times;
    times.reserve(cfg.repeats);
    for (int i = 0; i < cfg.repeats; ++i) {
        const auto start = std::chrono::steady_clock::now();
        g_sink = g_sink + body();
        const auto stop = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double, std::milli>(stop - start).count());
    }
    return median_of(std::move(times));
}

double checksum_rows(const Matrix& m, std::span<const NodeId> rows) {
    double acc = 0.0;
    for (NodeId r : rows) {
        const double* p = m.row(r);
        for (std::size_t j = 0; j < m.cols(); ++j) acc += p[j];
    }
    return acc;
}

}  // namespace

double accuracy(std::span<const NodeId> predicted, std::span<const NodeId> truth,
                std::span<const NodeId> subset) {
    if (predicted.size() != truth.size()) {
        throw ValidationError("prediction and truth vectors differ in length");
    }
    check_subset(subset, truth.size(), "accuracy");
    std::int64_t correct = 0;
    for (NodeId id : subset) {
        if (predicted[id] == truth[id]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(subset.size());
}

double prod_interpolate(double ind_acc, double tran_acc, double ind_weight) {
    if (!(ind_weight >= 0.0 && ind_weight <= 1.0)) {
        throw ValidationError("ind_weight must lie in [0,1]");
    }
    return ind_weight * ind_acc + (1.0 - ind_weight) * tran_acc;
}

double ideal_ensemble_accuracy(const std::vector<std::vector<NodeId>>& per_teacher_predictions,
                               std::span<const NodeId> truth, std::span<const NodeId> subset) {
    if (per_teacher_predictions.empty()) {
        throw ValidationError("ideal ensemble needs at least one prediction vector");
    }
    for (const auto& preds : per_teacher_predictions) {
        if (preds.size() != truth.size()) {
            throw ValidationError("a prediction vector does not cover every node");
        }
    }
    check_subset(subset, truth.size(), "ideal ensemble");
    std::int64_t correct = 0;
    for (NodeId id : subset) {
        for (const auto& preds : per_teacher_predictions) {
            if (preds[id] == truth[id]) {
                ++correct;
                break;
            }
        }
    }
    return static_cast<double>(correct) / static_cast<double>(subset.size());
}

std::vector<NodeId> argmax_classes(const Matrix& logits) {
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

TeacherEval evaluate_teacher(const teacher::TeacherModel& model,
                             const mgraph::MultiplexGraph& g, std::span<const NodeId> subset) {
    const auto outputs = teacher::teacher_forward(model, g);
    std::vector<std::vector<NodeId>> predictions;
    for (const Matrix& logits : outputs.view_logits) {
        predictions.push_back(argmax_classes(logits));
    }
    predictions.push_back(argmax_classes(outputs.integrated_logits));

    TeacherEval eval;
    for (const auto& preds : predictions) {
        eval.per_teacher_accs.push_back(accuracy(preds, g.y, subset));
    }
    eval.integrated_acc = eval.per_teacher_accs.back();
    eval.ideal_acc = ideal_ensemble_accuracy(predictions, g.y, subset);
    return eval;
}

Summary summarize(std::span<const double> values) {
    Summary s;
    if (values.empty()) return s;
    for (double v : values) s.mean += v;
    s.mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(var / static_cast<double>(values.size()));
    return s;
}

std::string eval_report_csv(const EvalReport& report) {
    std::string csv = "seed,tran_acc,ind_acc,prod_acc,ind_weight\n";
    for (const EvalRow& row : report.rows) {
        csv += std::to_string(row.seed) + "," + format_real(row.tran_acc) + "," +
               format_real(row.ind_acc) + "," + format_real(row.prod_acc) + "," +
               format_real(row.ind_weight) + "\n";
    }
    return csv;
}

std::string eval_summary_json(const EvalReport& report) {
    std::vector<double> tran, ind, prod;
    for (const EvalRow& row : report.rows) {
        tran.push_back(row.tran_acc);
        ind.push_back(row.ind_acc);
        prod.push_back(row.prod_acc);
    }
    nlohmann::json doc;
    doc["seeds"] = report.rows.size();
    const std::pair<const char*, Summary> parts[] = {{"tran_acc", summarize(tran)},
                                                     {"ind_acc", summarize(ind)},
                                                     {"prod_acc", summarize(prod)}};
    for (const auto& [name, summary] : parts) {
        doc[name] = {{"mean", summary.mean}, {"std", summary.stddev}};
    }
    return doc.dump(2) + "\n";
}

ProductionSeedRun production_teacher_run(const mgraph::MultiplexGraph& g,
                                         const mgraph::ProductionSplit& split,
                                         teacher::TeacherConfig tcfg, std::uint64_t seed) {
    ProductionSeedRun run;
    run.train_graph = mgraph::remove_cross_edges(g, split.ind);
    if (mgraph::count_cross_edges(run.train_graph, split.ind) != 0) {
        throw RuntimeFailure("cross edges survived the training-graph cut");
    }
    tcfg.seed = mix_seed(seed, 0x7ea);
    run.model = teacher::train_teacher(run.train_graph, split.base, tcfg).model;

    std::vector<char> is_ind(g.n, 0);
    for (NodeId id : split.ind) is_ind[id] = 1;
    std::vector<NodeId> scope;
    scope.reserve(g.n - split.ind.size());
    for (NodeId id = 0; id < g.n; ++id) {
        if (!is_ind[id]) scope.push_back(id);
    }
    run.bundle = teacher::export_soft_labels(run.model, run.train_graph, scope);
    return run;
}

EvalRow production_student_row(const ProductionSeedRun& run, const mgraph::MultiplexGraph& g,
                               const mgraph::ProductionSplit& split,
                               distill::DistillConfig scfg, std::uint64_t seed) {
    scfg.seed = mix_seed(seed, 0x57a);
    std::vector<NodeId> labels(g.y.begin(), g.y.end());
    const auto trained = distill::train_student(g.x, labels, split.base, run.bundle, scfg);
    const auto fwd = distill::mlp_forward(trained.model.mlp, g.x);
    const std::vector<NodeId> pred = argmax_classes(fwd.logits);

    EvalRow row;
    row.seed = seed;
    row.tran_acc = accuracy(pred, g.y, split.obs);
    if (split.ind.empty()) {
        row.ind_acc = 0.0;
        row.ind_weight = 0.0;
    } else {
        row.ind_acc = accuracy(pred, g.y, split.ind);
        row.ind_weight = split.ind_fraction;
    }
    row.prod_acc = prod_interpolate(row.ind_acc, row.tran_acc, row.ind_weight);
    return row;
}

EvalReport run_production_eval(const mgraph::MultiplexGraph& g,
                               const mgraph::ProductionSplit& split,
                               const teacher::TeacherConfig& tcfg,
                               const distill::DistillConfig& scfg,
                               std::span<const std::uint64_t> seeds) {
    if (seeds.empty()) throw ValidationError("need at least one evaluation seed");
    EvalReport report;
    for (std::uint64_t seed : seeds) {
        const ProductionSeedRun run = production_teacher_run(g, split, tcfg, seed);
        report.rows.push_back(production_student_row(run, g, split, scfg, seed));
    }
    return report;
}

void BenchConfig::validate() const {
    if (fanout < 1) throw ValidationError("bench fanout must be positive");
    if (repeats < 20) throw ValidationError("benchmark medians need at least 20 repeats");
    if (warmups < 0) throw ValidationError("warmups must be non-negative");
}

BenchReport bench_inference(const mgraph::MultiplexGraph& g,
                            const teacher::TeacherModel& teacher_model,
                            const distill::MlpParams& student,
                            std::span<const NodeId> targets, const BenchConfig& cfg) {
    cfg.validate();
    check_subset(targets, static_cast<std::size_t>(g.n), "bench targets");
    const int layers = teacher_model.layers;

    BenchReport report;
    report.repeats = cfg.repeats;

    report.full_teacher.name = "teacher-full";
    report.full_teacher.fetched_nodes = mgraph::count_fetched_nodes(g, targets, layers);
    report.full_teacher.median_ms = timed_median_ms(cfg, [&] {
        const auto fetched = mgraph::fetch_full_subgraph(g, targets, layers);
        const auto out = teacher::teacher_forward(teacher_model, fetched.sub);
        return checksum_rows(out.integrated_logits, fetched.target_pos);
    });

    report.sampled_teacher.name = "teacher-ns";
    {
        const auto fetched = mgraph::fetch_sampled_subgraph(g, targets, layers, cfg.fanout,
                                                            cfg.seed);
        report.sampled_teacher.fetched_nodes = static_cast<std::int64_t>(fetched.nodes.size());
    }
    report.sampled_teacher.median_ms = timed_median_ms(cfg, [&] {
        const auto fetched =
            mgraph::fetch_sampled_subgraph(g, targets, layers, cfg.fanout, cfg.seed);
        const auto out = teacher::teacher_forward(teacher_model, fetched.sub);
        return checksum_rows(out.integrated_logits, fetched.target_pos);
    });

    report.student.name = "student-mlp";
    report.student.fetched_nodes = static_cast<std::int64_t>(targets.size());
    report.student.median_ms = timed_median_ms(cfg, [&] {
        Matrix rows(targets.size(), g.x.cols());
        for (std::size_t i = 0; i < targets.size(); ++i) {
            const double* src = g.x.row(targets[i]);
            std::copy(src, src + g.x.cols(), rows.row(i));
        }
        const auto fwd = distill::mlp_forward(student, rows);
        double acc = 0.0;
        for (double v : fwd.logits.values()) acc += v;
        return acc;
    });

    const double teacher_ms = report.full_teacher.median_ms;
    for (BenchMethod* m :
         {&report.full_teacher, &report.sampled_teacher, &report.student}) {
        m->speedup_vs_teacher = m->median_ms > 0.0 ? teacher_ms / m->median_ms
                                                   : std::numeric_limits<double>::infinity();
    }
    return report;
}

std::string bench_report_csv(const BenchReport& report) {
    std::string csv = "method,fetched_nodes,median_ms,speedup_vs_teacher\n";
    for (const BenchMethod* m :
         {&report.full_teacher, &report.sampled_teacher, &report.student}) {
        csv += m->name + "," + std::to_string(m->fetched_nodes) + "," +
               format_real(m->median_ms) + "," + format_real(m->speedup_vs_teacher) + "\n";
    }
    return csv;
}

std::string bench_summary_json(const BenchReport& report) {
    nlohmann::json doc;
    doc["repeats"] = report.repeats;
    for (const BenchMethod* m :
         {&report.full_teacher, &report.sampled_teacher, &report.student}) {
        doc["methods"][m->name] = {{"fetched_nodes", m->fetched_nodes},
                                   {"median_ms", m->median_ms},
                                   {"speedup_vs_teacher", m->speedup_vs_teacher}};
    }
    return doc.dump(2) + "\n";
}

}  // namespace mgfd::evalbench
