#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "slt/checkpoint.hpp"
#include "slt/config.hpp"
#include "slt/dataset_io.hpp"

namespace slt {

/// Corpus section of a run config, as stored in dataset headers.
nlohmann::json corpus_json(const RunConfig& config);

DatasetFile make_dataset_file(const RunConfig& config, std::vector<Sample> samples);

/// Writes train/dev/test split files into `dir`.
void write_corpus(const RunConfig& config, const Corpus& corpus, const std::filesystem::path& dir);

/// Reads the three split files of `dir`; they must share one corpus config.
/// Returns the corpus and that config section.
std::pair<Corpus, nlohmann::json> read_corpus(const std::filesystem::path& dir);

struct TrainOutcome {
  /// Mean of the last `train.average_last` saved checkpoints.
  ModelCheckpoint averaged;
  ModelCheckpoint last;
  std::vector<StepMetrics> metrics;
  std::size_t rejected_steps = 0;
  double seconds = 0.0;
};

/// Trains a float model on `corpus.train`. When `out_dir` is non-empty it
/// receives metrics.jsonl, config.json, the rolling window of step
/// checkpoints (ckpt-<step>.sltc) and averaged.sltc. Progress lines go to
/// `log` every train.log_every steps when given.
TrainOutcome run_training(const RunConfig& config, const Corpus& corpus, const std::filesystem::path& out_dir,
                          std::ostream* log);

/// Rebuilds the float model a checkpoint describes.
std::unique_ptr<Model<float>> model_from_checkpoint(const ModelCheckpoint& ckpt, RunConfig* config_out = nullptr);

/// One evaluation record: WER with substitution/deletion/insertion counts,
/// BLEU-1..4, and the exact run config.
nlohmann::json eval_record(const RunConfig& config, const EvalReport& report, const std::string& split,
                           const std::string& checkpoint_digest);

std::string metrics_line(const StepMetrics& m);

struct CellResult {
  std::string grid;
  std::string cell;
  std::string digest;
  std::filesystem::path dir;
  nlohmann::json report;
};

/// Trains and evaluates (dev split) every cell of `grid`. Each cell's config
/// is `base` plus the cell overrides; its artifacts go to
/// out_dir/<grid>/<cell digest>/ with report.jsonl holding one record.
std::vector<CellResult> run_ablation(const nlohmann::json& base, const AblationGrid& grid,
                                     const std::filesystem::path& out_dir, std::ostream* log);

}  // namespace slt
