// Command-line front door: datasets, teacher training, distillation,
// evaluation, and latency benchmarks as reproducible subcommands driven by one
// JSON config with flag overrides.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mgfd/errors.hpp"
#include "mgfd/evalbench.hpp"
#include "mgfd/runconfig.hpp"
#include "mgfd/trainlog.hpp"

namespace fs = std::filesystem;
using mgfd::RunConfig;
using mgfd::mgraph::NodeId;

namespace {

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config, "run config JSON file")->required();
    cmd->add_option("--seed", flags.seed, "override every seed in the config");
    cmd->add_option("--out", flags.out, "output directory (overrides config)");
}

RunConfig resolve_config(const CommonFlags& flags) {
    RunConfig cfg = mgfd::load_run_config(flags.config);
    if (flags.seed) cfg.apply_seed(*flags.seed);
    if (!flags.out.empty()) cfg.out = flags.out;
    return cfg;
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw mgfd::RuntimeFailure("cannot write " + path.string());
    out << content;
    if (!out) throw mgfd::RuntimeFailure("write failed: " + path.string());
}

double best_val_acc(const std::vector<mgfd::EpochLogRow>& log) {
    double best = 0.0;
    for (const auto& row : log) best = std::max(best, row.val_acc);
    return best;
}

void cmd_gen_data(const CommonFlags& flags) {
    RunConfig cfg = resolve_config(flags);
    cfg.validate();
    if (!cfg.sbm && !cfg.heterophilous) {
        throw mgfd::ValidationError("gen-data needs a generator spec, not a dataset path");
    }
    const auto dataset = mgfd::materialize_dataset(cfg);
    fs::create_directories(cfg.out);
    mgfd::mgraph::save_dataset(cfg.out, dataset.graph, dataset.splits);
    std::cout << "dataset written to " << cfg.out.string() << "\n"
              << "  n=" << dataset.graph.n << " r=" << dataset.graph.r
              << " d=" << dataset.graph.d << " k=" << dataset.graph.k << "\n";
    for (int v = 0; v < dataset.graph.r; ++v) {
        std::cout << "  view " << v + 1 << " (" << dataset.graph.view_names[v]
                  << "): " << dataset.graph.views[v].undirected_edge_count()
                  << " undirected edges\n";
    }
}

void cmd_train_teacher(const CommonFlags& flags) {
    RunConfig cfg = resolve_config(flags);
    cfg.validate();
    const auto dataset = mgfd::materialize_dataset(cfg);
    const auto result = mgfd::teacher::train_teacher(dataset.graph, dataset.splits, cfg.teacher);
    fs::create_directories(cfg.out);
    mgfd::teacher::save_teacher(cfg.out / "teacher.json", result.model);
    write_text(cfg.out / "teacher_log.csv", mgfd::training_log_csv(result.log));
    std::cout << "teacher checkpoint: " << (cfg.out / "teacher.json").string() << "\n"
              << "best validation accuracy: " << best_val_acc(result.log) << "\n";
}

void cmd_distill(const CommonFlags& flags, const std::string& teacher_path,
                 const std::string& mode_override) {
    RunConfig cfg = resolve_config(flags);
    if (!mode_override.empty()) cfg.distill.mode = mgfd::distill::mode_from_string(mode_override);
    cfg.validate();
    const auto dataset = mgfd::materialize_dataset(cfg);
    const auto model = mgfd::teacher::load_teacher(teacher_path);

    std::vector<NodeId> scope(dataset.graph.n);
    for (NodeId i = 0; i < dataset.graph.n; ++i) scope[i] = i;
    const auto bundle = mgfd::teacher::export_soft_labels(model, dataset.graph, scope);
    const auto result = mgfd::distill::train_student(dataset.graph.x, dataset.graph.y,
                                                     dataset.splits, bundle, cfg.distill);
    fs::create_directories(cfg.out);
    mgfd::distill::save_student(cfg.out / "student.json", result.model);
    write_text(cfg.out / "student_log.csv", mgfd::training_log_csv(result.log));
    std::cout << "student checkpoint: " << (cfg.out / "student.json").string() << "\n"
              << "mode: " << mgfd::distill::to_string(cfg.distill.mode) << "\n"
              << "best validation accuracy: " << best_val_acc(result.log) << "\n";
}

void cmd_eval(const CommonFlags& flags, const std::string& mode_override,
              std::optional<double> ind_fraction) {
    RunConfig cfg = resolve_config(flags);
    if (!mode_override.empty()) cfg.distill.mode = mgfd::distill::mode_from_string(mode_override);
    if (ind_fraction) cfg.ind_fraction = *ind_fraction;
    cfg.validate();
    const auto dataset = mgfd::materialize_dataset(cfg);
    const auto split = mgfd::mgraph::make_production_split(dataset.splits, cfg.ind_fraction,
                                                           cfg.seeds.front());
    const auto report = mgfd::evalbench::run_production_eval(dataset.graph, split, cfg.teacher,
                                                             cfg.distill, cfg.seeds);
    fs::create_directories(cfg.out);
    write_text(cfg.out / "eval_report.csv", mgfd::evalbench::eval_report_csv(report));
    write_text(cfg.out / "eval_summary.json", mgfd::evalbench::eval_summary_json(report));
    std::vector<double> prods;
    for (const auto& row : report.rows) prods.push_back(row.prod_acc);
    const auto s = mgfd::evalbench::summarize(prods);
    std::cout << "eval report: " << (cfg.out / "eval_report.csv").string() << "\n"
              << "prod accuracy over " << report.rows.size() << " seeds: " << s.mean
              << " +/- " << s.stddev << "\n";
}

void cmd_bench(const CommonFlags& flags, const std::string& teacher_path,
               const std::string& student_path, std::optional<int> fanout) {
    RunConfig cfg = resolve_config(flags);
    if (fanout) cfg.fanout = *fanout;
    cfg.validate();
    const auto dataset = mgfd::materialize_dataset(cfg);
    const auto teacher_model = mgfd::teacher::load_teacher(teacher_path);
    const auto student_model = mgfd::distill::load_student(student_path);

    if (dataset.graph.n < static_cast<NodeId>(cfg.bench_targets)) {
        throw mgfd::ValidationError("bench needs at least as many nodes as targets");
    }
    // distinct random targets, deterministic per seed
    mgfd::Rng rng(mgfd::mix_seed(cfg.seeds.front(), 0xbe9c));
    std::vector<NodeId> pool(dataset.graph.n);
    for (NodeId i = 0; i < dataset.graph.n; ++i) pool[i] = i;
    for (int i = 0; i < cfg.bench_targets; ++i) {
        const std::size_t j = i + rng.uniform_index(pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    std::vector<NodeId> targets(pool.begin(), pool.begin() + cfg.bench_targets);

    mgfd::evalbench::BenchConfig bench_cfg;
    bench_cfg.fanout = cfg.fanout;
    bench_cfg.repeats = cfg.bench_repeats;
    bench_cfg.seed = mgfd::mix_seed(cfg.seeds.front(), 0x5a11);
    const auto report = mgfd::evalbench::bench_inference(dataset.graph, teacher_model,
                                                         student_model.mlp, targets, bench_cfg);
    fs::create_directories(cfg.out);
    write_text(cfg.out / "bench_report.csv", mgfd::evalbench::bench_report_csv(report));
    write_text(cfg.out / "bench_summary.json", mgfd::evalbench::bench_summary_json(report));
    std::cout << "bench report: " << (cfg.out / "bench_report.csv").string() << "\n"
              << "threads: 1\n"
              << "student speedup vs full teacher: " << report.student.speedup_vs_teacher
              << "x (fetched " << report.full_teacher.fetched_nodes << " vs "
              << report.student.fetched_nodes << " nodes)\n";
}

void cmd_export_coefs(const CommonFlags& flags, const std::string& student_path,
                      const std::vector<int>& nodes) {
    RunConfig cfg = resolve_config(flags);
    cfg.validate();
    if (nodes.empty()) throw mgfd::ValidationError("--nodes must list at least one node id");
    const auto dataset = mgfd::materialize_dataset(cfg);
    const auto student_model = mgfd::distill::load_student(student_path);
    if (!student_model.factors) {
        throw mgfd::ValidationError(
            "student checkpoint has no coefficient factors (train with mode mgfnn-plus)");
    }
    const auto fwd = mgfd::distill::mlp_forward(student_model.mlp, dataset.graph.x);
    std::vector<NodeId> ids(nodes.begin(), nodes.end());
    const std::string csv =
        mgfd::distill::export_coefficients(fwd.hidden, *student_model.factors, ids);
    fs::create_directories(cfg.out);
    write_text(cfg.out / "coefficients.csv", csv);
    std::cout << "coefficients for " << ids.size() << " nodes: "
              << (cfg.out / "coefficients.csv").string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    // The core is single-threaded by construction; MGFD_THREADS=1 (the only
    // meaningful value) is therefore always honored.
    if (const char* threads = std::getenv("MGFD_THREADS");
        threads && std::string(threads) != "1") {
        std::cerr << "note: MGFD_THREADS=" << threads
                  << " requested, running single-threaded\n";
    }

    CLI::App app{"multiplex-graph knowledge distillation toolkit"};
    app.require_subcommand(1);

    CommonFlags gen_flags;
    add_common(app.add_subcommand("gen-data", "generate a synthetic dataset"), gen_flags);

    CommonFlags teach_flags;
    add_common(app.add_subcommand("train-teacher", "train the multiplex GNN teacher"),
               teach_flags);

    CommonFlags distill_flags;
    std::string distill_teacher, distill_mode;
    auto* distill_cmd =
        app.add_subcommand("distill", "distill a trained teacher into an MLP student");
    add_common(distill_cmd, distill_flags);
    distill_cmd->add_option("--teacher", distill_teacher, "teacher checkpoint JSON")
        ->required();
    distill_cmd->add_option("--mode", distill_mode,
                            "objective: mgfnn, mgfnn-plus, mean, or para");

    CommonFlags eval_flags;
    std::string eval_mode;
    std::optional<double> eval_ind_fraction;
    auto* eval_cmd =
        app.add_subcommand("eval", "run the production (tran+ind) evaluation over seeds");
    add_common(eval_cmd, eval_flags);
    eval_cmd->add_option("--mode", eval_mode, "objective: mgfnn, mgfnn-plus, mean, or para");
    eval_cmd->add_option("--ind-fraction", eval_ind_fraction,
                         "fraction of test nodes held out inductively");

    CommonFlags bench_flags;
    std::string bench_teacher, bench_student;
    std::optional<int> bench_fanout;
    auto* bench_cmd =
        app.add_subcommand("bench", "time teacher vs student inference on random targets");
    add_common(bench_cmd, bench_flags);
    bench_cmd->add_option("--teacher", bench_teacher, "teacher checkpoint JSON")->required();
    bench_cmd->add_option("--student", bench_student, "student checkpoint JSON")->required();
    bench_cmd->add_option("--fanout", bench_fanout, "neighbor-sampling fanout");

    CommonFlags coef_flags;
    std::string coef_student;
    std::vector<int> coef_nodes;
    auto* coef_cmd =
        app.add_subcommand("export-coefs", "export per-node ensemble coefficients");
    add_common(coef_cmd, coef_flags);
    coef_cmd->add_option("--student", coef_student, "student checkpoint JSON")->required();
    coef_cmd->add_option("--nodes", coef_nodes, "comma-separated node ids")
        ->required()
        ->delimiter(',');

    try {
        app.parse(argc, argv);
        if (app.got_subcommand("gen-data")) cmd_gen_data(gen_flags);
        if (app.got_subcommand("train-teacher")) cmd_train_teacher(teach_flags);
        if (app.got_subcommand("distill")) cmd_distill(distill_flags, distill_teacher,
                                                       distill_mode);
        if (app.got_subcommand("eval")) cmd_eval(eval_flags, eval_mode, eval_ind_fraction);
        if (app.got_subcommand("bench")) cmd_bench(bench_flags, bench_teacher, bench_student,
                                                   bench_fanout);
        if (app.got_subcommand("export-coefs")) cmd_export_coefs(coef_flags, coef_student,
                                                                 coef_nodes);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;  // --help exits 0; bad flags are validation failures
    } catch (const mgfd::ValidationError& e) {
        std::cerr << "validation error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
