#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "mgfd/distill.hpp"
#include "mgfd/mgraph.hpp"
#include "mgfd/teacher.hpp"

namespace mgfd {

/// One declarative JSON file describing a full run: where the data comes from
/// (a directory on disk or a generator spec), how to train teacher and
/// student, the production split fraction, seeds, and the output directory.
/// Command-line flags override individual fields after parsing.
struct RunConfig {
    std::filesystem::path dataset_path;                    // empty when generating
    std::optional<mgraph::SbmSpec> sbm;                    // "generator": "sbm"
    std::optional<mgraph::HeterophilousSpec> heterophilous;  // "generator": "heterophilous"

    teacher::TeacherConfig teacher;
    distill::DistillConfig distill;

    double ind_fraction = 0.2;
    int fanout = 10;
    int bench_repeats = 20;
    int bench_targets = 10;

    std::vector<std::uint64_t> seeds = {0};
    std::filesystem::path out = "out";

    /// Exactly one dataset source, non-empty seeds, an existing dataset path
    /// when one is referenced, and all nested configs valid.
    void validate() const;

    /// Pushes one seed into every seeded sub-config (generator, teacher,
    /// student) so `--seed` overrides the whole run coherently.
    void apply_seed(std::uint64_t seed);
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::filesystem::path& file);

/// Loads the dataset directory or runs the configured generator.
mgraph::Dataset materialize_dataset(const RunConfig& cfg);

}  // namespace mgfd
