// Command-line entry point: corpus generation, training, evaluation,
// decoding, gradient checks, ablation grids and checkpoint averaging.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "slt/binary_io.hpp"
#include "slt/experiment.hpp"
#include "slt/gradcheck_suite.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace slt;

namespace {

// User-facing failure: exit status 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
};

// Base config (file or built-in defaults) with --section.key=value overrides.
json build_config(const Common& c) {
  json j = c.config_path.empty() ? to_json(RunConfig{}) : to_json(load_run_config(c.config_path));
  for (const std::string& arg : c.overrides) {
    if (arg.rfind("--", 0) != 0) throw UsageError("unexpected argument '" + arg + "'");
    const std::size_t eq = arg.find('=');
    if (eq == std::string::npos) throw UsageError("override '" + arg + "' needs the form --section.key=value");
    apply_override(j, arg.substr(2, eq - 2), arg.substr(eq + 1));
  }
  RunConfig rc = run_config_from_json(j);
  rc.validate();
  return to_json(rc);
}

std::string default_data_dir() {
  const char* root = std::getenv("SLT_DATA_ROOT");
  return root ? root : "";
}

std::string require_data_dir(const std::string& flag) {
  const std::string d = flag.empty() ? default_data_dir() : flag;
  if (d.empty()) throw UsageError("no data directory: pass --data or set SLT_DATA_ROOT");
  if (!fs::is_directory(d)) throw UsageError("data directory '" + d + "' does not exist");
  return d;
}

const std::vector<Sample>& pick_split(const Corpus& c, const std::string& split) {
  if (split == "train") return c.train;
  if (split == "dev") return c.dev;
  if (split == "test") return c.test;
  throw UsageError("unknown split '" + split + "' (train, dev, test)");
}

void emit(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
  } else {
    write_file(path, text);
  }
}

// Decode settings may be changed at evaluation time; everything else comes
// from the checkpoint.
RunConfig with_decode_overrides(RunConfig rc, const std::vector<std::string>& overrides) {
  json j = to_json(rc);
  for (const std::string& arg : overrides) {
    const std::size_t eq = arg.find('=');
    if (arg.rfind("--decode.", 0) != 0 || eq == std::string::npos) {
      throw UsageError("only --decode.<key>=value overrides apply here, got '" + arg + "'");
    }
    apply_override(j, arg.substr(2, eq - 2), arg.substr(eq + 1));
  }
  RunConfig out = run_config_from_json(j);
  out.validate();
  return out;
}

int cmd_generate(const Common& common, const std::string& out) {
  const RunConfig rc = run_config_from_json(build_config(common));
  const std::string dir = out.empty() ? require_data_dir("") : out;
  write_corpus(rc, generate_corpus(rc.corpus), dir);
  std::cerr << "wrote " << rc.corpus.train_size << "/" << rc.corpus.dev_size << "/" << rc.corpus.test_size
            << " samples to " << dir << '\n';
  return 0;
}

int cmd_train(const Common& common, const std::string& data, const std::string& out) {
  json j = build_config(common);
  Corpus corpus;
  if (!data.empty() || !default_data_dir().empty()) {
    auto [c, corpus_cfg] = read_corpus(require_data_dir(data));
    corpus = std::move(c);
    j["corpus"] = corpus_cfg;  // the data on disk defines the corpus
  }
  const RunConfig rc = run_config_from_json(j);
  rc.validate();
  if (corpus.train.empty()) corpus = generate_corpus(rc.corpus);
  const TrainOutcome t = run_training(rc, corpus, out, &std::cerr);
  std::cerr << "trained " << rc.train.steps << " steps in " << t.seconds << "s";
  if (t.rejected_steps) std::cerr << " (" << t.rejected_steps << " rejected)";
  std::cerr << "; checkpoints in " << out << '\n';
  return 0;
}

int cmd_evaluate(const std::string& ckpt_path, const std::string& data, const std::string& split,
                 const std::string& report, const std::vector<std::string>& overrides) {
  const std::string bytes = read_file(ckpt_path);
  const ModelCheckpoint ckpt = decode_checkpoint(bytes, ckpt_path);
  RunConfig rc;
  auto model = model_from_checkpoint(ckpt, &rc);
  rc = with_decode_overrides(rc, overrides);
  Corpus corpus;
  if (!data.empty() || !default_data_dir().empty()) {
    auto [c, cfg] = read_corpus(require_data_dir(data));
    if (cfg != to_json(rc).at("corpus")) throw UsageError("data was generated with a different corpus config than the checkpoint");
    corpus = std::move(c);
  } else {
    corpus = generate_corpus(rc.corpus);
  }
  const EvalReport r = evaluate_model<float>(*model, pick_split(corpus, split), rc.decode);
  emit(report, eval_record(rc, r, split, digest_hex(fnv1a64(bytes))).dump() + "\n");
  return 0;
}

int cmd_decode(const std::string& ckpt_path, const std::string& data, const std::string& split,
               const std::string& out, const std::vector<std::string>& overrides) {
  const ModelCheckpoint ckpt = load_checkpoint(ckpt_path);
  RunConfig rc;
  auto model = model_from_checkpoint(ckpt, &rc);
  rc = with_decode_overrides(rc, overrides);
  Corpus corpus;
  if (!data.empty() || !default_data_dir().empty()) {
    corpus = read_corpus(require_data_dir(data)).first;
  } else {
    corpus = generate_corpus(rc.corpus);
  }
  const std::vector<Sample>& samples = pick_split(corpus, split);
  std::string text = json{{"config", to_json(rc)}, {"split", split}}.dump() + "\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const SampleOutput o = decode_sample<float>(*model, samples[i], rc.decode);
    text += json{{"index", i}, {"glosses", o.glosses}, {"words", o.words}, {"score", o.translation_score}}.dump() + "\n";
  }
  emit(out, text);
  return 0;
}

int cmd_gradcheck(std::uint64_t seed) {
  bool all = true;
  for (const GradcheckOutcome& o : run_gradcheck_suite(seed)) {
    std::cout << (o.passed ? "PASS " : "FAIL ") << o.module << "  max_rel_error=" << o.max_error << '\n';
    if (!o.passed) std::cout << o.detail;
    all = all && o.passed;
  }
  return all ? 0 : 2;
}

int cmd_ablate(const Common& common, const std::string& grid_name, const std::string& out) {
  if (out.empty()) throw UsageError("ablate needs --out");
  const json base = build_config(common);
  const RunConfig rc = run_config_from_json(base);
  if (rc.grids.empty()) throw UsageError("config has no ablation grids");
  bool found = false;
  fs::create_directories(out);
  std::ofstream summary(fs::path(out) / "summary.jsonl", std::ios::trunc);
  for (const AblationGrid& g : rc.grids) {
    if (!grid_name.empty() && g.name != grid_name) continue;
    found = true;
    for (const CellResult& r : run_ablation(base, g, out, &std::cerr)) {
      summary << json{{"grid", r.grid}, {"cell", r.cell}, {"dir", r.dir.string()}, {"wer", r.report["wer"]},
                      {"bleu4", r.report["bleu4"]}}.dump()
              << '\n';
      std::cout << r.grid << " / " << r.cell << ": WER " << r.report["wer"].get<double>() << "  BLEU-4 "
                << r.report["bleu4"].get<double>() << '\n';
    }
  }
  if (!found) throw UsageError("no ablation grid named '" + grid_name + "'");
  return 0;
}

int cmd_average(const std::vector<std::string>& inputs, const std::string& out) {
  std::vector<ModelCheckpoint> cks;
  for (const std::string& p : inputs) cks.push_back(load_checkpoint(p));
  save_checkpoint(average_checkpoints(cks), out);
  std::cerr << "averaged " << cks.size() << " checkpoints into " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Joint sign recognition and translation experiments"};
  app.require_subcommand(1);

  Common common;
  std::string data, out, ckpt, split = "dev", report, grid;
  std::vector<std::string> inputs;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "JSON run config (defaults: built-in toy recipe)")
        ->check(CLI::ExistingFile);
    sub->allow_extras();
  };

  CLI::App* gen = app.add_subcommand("generate-data", "Write train/dev/test corpus files");
  add_common(gen);
  gen->add_option("--out", out, "Output directory (default: $SLT_DATA_ROOT)");

  CLI::App* train = app.add_subcommand("train", "Train a model; writes checkpoints and metrics.jsonl");
  add_common(train);
  train->add_option("--data", data, "Corpus directory (default: $SLT_DATA_ROOT, else regenerate from config)");
  train->add_option("--out", out, "Run directory")->required();

  CLI::App* eval = app.add_subcommand("evaluate", "WER and BLEU report for a checkpoint");
  eval->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data, "Corpus directory (default: $SLT_DATA_ROOT, else regenerate)");
  eval->add_option("--split", split, "train, dev or test");
  eval->add_option("--report", report, "Report file (default: stdout)");
  eval->allow_extras();

  CLI::App* dec = app.add_subcommand("decode", "Write gloss and word hypotheses");
  dec->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
  dec->add_option("--data", data);
  dec->add_option("--split", split);
  dec->add_option("--out", out, "Hypotheses file (default: stdout)");
  dec->allow_extras();

  CLI::App* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks per module");
  gc->add_option("--seed", seed);

  CLI::App* abl = app.add_subcommand("ablate", "Train and evaluate every cell of the config's ablation grids");
  add_common(abl);
  abl->add_option("--grid", grid, "Run only this grid");
  abl->add_option("--out", out, "Output directory")->required();

  CLI::App* avg = app.add_subcommand("average-ckpt", "Parameter-wise mean of checkpoints");
  avg->add_option("inputs", inputs)->required();
  avg->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    common.overrides = sub->remaining();
    if (sub == gen) return cmd_generate(common, out);
    if (sub == train) return cmd_train(common, data, out);
    if (sub == eval) return cmd_evaluate(ckpt, data, split, report, sub->remaining());
    if (sub == dec) return cmd_decode(ckpt, data, split, out, sub->remaining());
    if (sub == gc) return cmd_gradcheck(seed);
    if (sub == abl) return cmd_ablate(common, grid, out);
    if (sub == avg) return cmd_average(inputs, out);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
