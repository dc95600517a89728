#include "slt/experiment.hpp"

#include <chrono>
#include <deque>
#include <fstream>
#include <iomanip>

#include "slt/binary_io.hpp"

namespace slt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kSplits[] = {"train", "dev", "test"};

std::string split_file(const char* split) { return std::string(split) + ".sltd"; }

void write_text(const fs::path& path, const std::string& text) { write_file(path.string(), text); }

}  // namespace

json corpus_json(const RunConfig& config) { return to_json(config).at("corpus"); }

DatasetFile make_dataset_file(const RunConfig& config, std::vector<Sample> samples) {
  DatasetFile f;
  f.rng_name = kRngName;
  const json cj = corpus_json(config);
  f.config_json = canonical_json(cj);
  f.config_digest = config_digest(cj);
  f.feature_dim = config.corpus.feature_dim;
  f.samples = std::move(samples);
  return f;
}

void write_corpus(const RunConfig& config, const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir);
  const std::vector<Sample>* splits[] = {&corpus.train, &corpus.dev, &corpus.test};
  for (int k = 0; k < 3; ++k) save_dataset(make_dataset_file(config, *splits[k]), (dir / split_file(kSplits[k])).string());
}

std::pair<Corpus, json> read_corpus(const fs::path& dir) {
  Corpus corpus;
  std::vector<Sample>* splits[] = {&corpus.train, &corpus.dev, &corpus.test};
  std::string config_text;
  for (int k = 0; k < 3; ++k) {
    const fs::path p = dir / split_file(kSplits[k]);
    DatasetFile f = load_dataset(p.string());
    if (f.rng_name != kRngName) {
      throw FormatError(p.string() + ": generated with '" + f.rng_name + "', this build uses '" + std::string(kRngName) + "'");
    }
    if (k == 0) {
      config_text = f.config_json;
    } else if (f.config_json != config_text) {
      throw FormatError(p.string() + ": corpus config differs from " + (dir / split_file(kSplits[0])).string());
    }
    *splits[k] = std::move(f.samples);
  }
  json cj = json::parse(config_text, nullptr, false);
  if (cj.is_discarded()) throw FormatError((dir / split_file(kSplits[0])).string() + ": corpus config is not JSON");
  return {std::move(corpus), std::move(cj)};
}

std::string metrics_line(const StepMetrics& m) {
  json j = {{"step", m.step}, {"lr", m.lr}, {"ctc_loss", m.ctc_loss}, {"ce_loss", m.ce_loss}, {"total", m.total}};
  if (!m.accepted) j["rejected"] = m.rejection;
  return j.dump();
}

TrainOutcome run_training(const RunConfig& config, const Corpus& corpus, const fs::path& out_dir, std::ostream* log) {
  config.validate();
  const json cj = to_json(config);
  const std::string config_text = canonical_json(cj);
  const std::uint64_t digest = config_digest(cj);
  const bool persist = !out_dir.empty();
  std::ofstream metrics;
  if (persist) {
    fs::create_directories(out_dir);
    write_text(out_dir / "config.json", cj.dump(2) + "\n");
    metrics.open(out_dir / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw IoError("cannot write " + (out_dir / "metrics.jsonl").string());
  }

  Model<float> model(config.model_config(), config.model_seed);
  Adam<float> optimizer(model.params(), config.train.adam);
  TrainOutcome out;
  std::deque<ModelCheckpoint> window;
  std::deque<fs::path> window_files;
  const auto t0 = std::chrono::steady_clock::now();

  auto on_step = [&](const StepMetrics& m) {
    out.metrics.push_back(m);
    if (!m.accepted) ++out.rejected_steps;
    if (persist) metrics << metrics_line(m) << '\n';
    if (log && config.train.log_every && (m.step % config.train.log_every == 0 || !m.accepted)) {
      const double sec = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      *log << "step " << m.step << " lr " << std::setprecision(3) << m.lr << " ctc " << m.ctc_loss << " ce "
           << m.ce_loss << " total " << m.total << " (" << std::fixed << std::setprecision(0) << sec << "s)"
           << std::defaultfloat << (m.accepted ? "" : " rejected: " + m.rejection) << '\n';
    }
  };
  auto on_checkpoint = [&](std::size_t step) {
    window.push_back(capture_checkpoint<float>(model, &optimizer, step, digest, config_text));
    if (persist) {
      const fs::path p = out_dir / ("ckpt-" + std::to_string(step) + ".sltc");
      save_checkpoint(window.back(), p.string());
      window_files.push_back(p);
    }
    while (window.size() > config.train.average_last) {
      window.pop_front();
      if (persist) {
        fs::remove(window_files.front());
        window_files.pop_front();
      }
    }
  };
  train_loop<float>(model, optimizer, corpus.train, config.train, on_step, on_checkpoint);
  if (window.empty()) on_checkpoint(optimizer.steps());
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out.last = window.back();
  const std::vector<ModelCheckpoint> recent(window.begin(), window.end());
  out.averaged = average_checkpoints(recent);
  if (persist) save_checkpoint(out.averaged, (out_dir / "averaged.sltc").string());
  return out;
}

std::unique_ptr<Model<float>> model_from_checkpoint(const ModelCheckpoint& ckpt, RunConfig* config_out) {
  json cj = json::parse(ckpt.config_json, nullptr, false);
  if (cj.is_discarded()) throw FormatError("checkpoint: embedded config is not JSON");
  RunConfig rc = run_config_from_json(cj);
  auto model = std::make_unique<Model<float>>(rc.model_config(), rc.model_seed);
  restore_checkpoint(ckpt, *model);
  if (config_out) *config_out = std::move(rc);
  return model;
}

json eval_record(const RunConfig& config, const EvalReport& r, const std::string& split,
                 const std::string& checkpoint_digest) {
  const ErrorCounts& e = r.recognition;
  const BleuScores& b = r.translation;
  return json{{"split", split},
              {"checkpoint", checkpoint_digest},
              {"samples", r.samples},
              {"wer", e.wer()},
              {"substitutions", e.substitutions},
              {"deletions", e.deletions},
              {"insertions", e.insertions},
              {"reference_glosses", e.reference_length},
              {"del_rate", e.deletion_rate()},
              {"ins_rate", e.insertion_rate()},
              {"bleu1", b.bleu[0]},
              {"bleu2", b.bleu[1]},
              {"bleu3", b.bleu[2]},
              {"bleu4", b.bleu[3]},
              {"brevity_penalty", b.brevity_penalty},
              {"config", to_json(config)}};
}

std::vector<CellResult> run_ablation(const json& base, const AblationGrid& grid, const fs::path& out_dir,
                                     std::ostream* log) {
  std::vector<CellResult> results;
  for (const AblationCell& cell : grid.cells) {
    json cj = base;
    cj["ablation"]["grids"] = json::object();
    for (const auto& [key, value] : cell.overrides.items()) apply_override(cj, key, value);
    RunConfig rc = run_config_from_json(cj);
    rc.validate();
    CellResult res;
    res.grid = grid.name;
    res.cell = cell.name;
    res.digest = digest_hex(config_digest(to_json(rc)));
    res.dir = out_dir / grid.name / res.digest;
    if (log) *log << "[" << grid.name << "] " << cell.name << " -> " << res.dir.string() << '\n';
    const Corpus corpus = generate_corpus(rc.corpus);
    TrainOutcome t = run_training(rc, corpus, res.dir, log);
    auto model = model_from_checkpoint(t.averaged);
    const EvalReport er = evaluate_model<float>(*model, corpus.dev, rc.decode);
    res.report = eval_record(rc, er, "dev", digest_hex(fnv1a64(encode_checkpoint(t.averaged))));
    res.report["grid"] = grid.name;
    res.report["cell"] = cell.name;
    write_text(res.dir / "report.jsonl", res.report.dump() + "\n");
    results.push_back(std::move(res));
  }
  return results;
}

}  // namespace slt
