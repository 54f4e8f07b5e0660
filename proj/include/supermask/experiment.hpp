#pragma once

#include "supermask/analysis.hpp"
#include "supermask/checkpoint.hpp"
#include "supermask/config.hpp"
#include "supermask/data.hpp"
#include "supermask/model.hpp"
#include "supermask/trainer.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace supermask {

struct RunData {
    Dataset train;
    std::optional<Dataset> test;
};

/// Loads or generates the dataset selected by the config.
RunData load_run_data(const RunConfig& cfg);

/// Untrained model for the config and the given data geometry.
Model build_model(const RunConfig& cfg, const Dataset& train);

struct RunResult {
    Model model;
    TrainHistory history;
    Checkpoint checkpoint;
};

/// Builds, trains and snapshots one run in memory.
RunResult run_config(const RunConfig& cfg, const RunData& data, const EpochCallback& on_epoch = {});

struct TrainArtifacts {
    std::filesystem::path checkpoint;
    std::filesystem::path history;
    std::string checkpoint_sha256;
    TrainHistory history_rows;
};

/// Writes <out_dir>/model.snfg and <out_dir>/history.csv.
TrainArtifacts run_train(const RunConfig& cfg, const std::filesystem::path& out_dir,
                         const EpochCallback& on_epoch = {});

/// Masks of each checkpoint; throws InvalidArgument when architectures differ.
SimilarityReport compare_checkpoints(const std::vector<std::filesystem::path>& paths, Metric metric);

struct CompareArtifacts {
    std::filesystem::path rows;
    std::filesystem::path matrix;
    std::filesystem::path layers;
};

/// similarity_<metric>.csv, matrix_<metric>.csv, layers_<metric>.csv in out_dir.
CompareArtifacts write_compare_report(const SimilarityReport& report, const std::filesystem::path& out_dir);

struct NormReport {
    std::vector<std::string> layer_names;
    std::vector<NormSplit> rows;
};

/// Kept/pruned norms of the reconstructed theta under the stored masks.
NormReport norm_report(const Checkpoint& ckpt);
void write_norm_report(const NormReport& report, const std::filesystem::path& path);

/// key=value overrides applied on top of a config (later entries win).
RunConfig with_overrides(const RunConfig& base, const std::vector<std::pair<std::string, std::string>>& overrides);

struct SweepAxis {
    std::string key;
    std::vector<std::string> values;
};

/// Runs the Cartesian product of the axes, one subdirectory per run, and
/// writes <out_dir>/sweep.csv with final metrics and checkpoint hashes.
std::filesystem::path run_sweep(const RunConfig& base, const std::vector<SweepAxis>& axes,
                                const std::filesystem::path& out_dir);

} // namespace supermask
