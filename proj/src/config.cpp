#include "slt/config.hpp"

#include <cstdio>
#include <fstream>

#include "slt/binary_io.hpp"

namespace slt {

using nlohmann::json;

namespace {

// Reads j[key] into `out` if present, recording the key as consumed.
template <typename V>
void take(const json& section, const char* key, V& out, std::vector<std::string>& seen) {
  seen.emplace_back(key);
  if (section.contains(key)) out = section.at(key).get<V>();
}

void reject_unknown(const json& section, const std::string& name, const std::vector<std::string>& seen) {
  for (const auto& [key, value] : section.items()) {
    if (std::find(seen.begin(), seen.end(), key) == seen.end()) {
      throw ConfigError("config: unknown key '" + name + "." + key + "'");
    }
  }
}

const json& section(const json& j, const char* name) {
  static const json empty = json::object();
  if (!j.contains(name)) return empty;
  if (!j.at(name).is_object()) throw ConfigError(std::string("config: section '") + name + "' must be an object");
  return j.at(name);
}

}  // namespace

ModelConfig RunConfig::model_config() const {
  ModelConfig m = model;
  m.input_dim = corpus.feature_dim;
  m.gloss_vocab = corpus.glosses;
  m.word_vocab = corpus.word_vocab();
  return m;
}

void RunConfig::validate() const {
  const ModelConfig m = model_config();
  m.validate();
  const GatherConfig& gc = m.cptcn.gathering;
  corpus.validate(gc.variant == GatherVariant::None ? 1 : static_cast<std::size_t>(gc.clip_length()));
  if (train.batch_size == 0) throw ConfigError("config: train.batch_size must be positive");
  if (train.average_last == 0) throw ConfigError("config: train.average_last must be positive");
  if (decode.translation.beam_width == 0) throw ConfigError("config: decode.beam must be >= 1");
  if (decode.translation.alpha < 0.0 || decode.translation.alpha > 2.0) {
    throw ConfigError("config: decode.alpha must be in [0, 2]");
  }
  if (decode.translation.max_len == 0) throw ConfigError("config: decode.max_len must be >= 1");
}

json to_json(const RunConfig& c) {
  json j;
  j["corpus"] = {{"seed", c.corpus.seed},
                 {"glosses", c.corpus.glosses},
                 {"train_size", c.corpus.train_size},
                 {"dev_size", c.corpus.dev_size},
                 {"test_size", c.corpus.test_size},
                 {"min_glosses", c.corpus.min_glosses},
                 {"max_glosses", c.corpus.max_glosses},
                 {"min_frames", c.corpus.min_frames},
                 {"max_frames", c.corpus.max_frames},
                 {"feature_dim", c.corpus.feature_dim},
                 {"noise", c.corpus.noise},
                 {"reorder", c.corpus.reorder}};
  j["model"] = {{"seed", c.model_seed},
                {"d_model", c.model.d_model},
                {"heads", c.model.heads},
                {"encoder_layers", c.model.encoder_layers},
                {"decoder_layers", c.model.decoder_layers},
                {"ff_dim", c.model.ff_dim},
                {"dropout", c.model.dropout},
                {"lambda_recognition", c.model.lambda_recognition},
                {"lambda_translation", c.model.lambda_translation},
                {"cptcn_all_layers", c.model.cptcn_all_layers}};
  const GatherConfig& gc = c.model.cptcn.gathering;
  j["gathering"] = {{"variant", to_string(gc.variant)}, {"l", gc.window}, {"gamma", gc.gamma}};
  j["cptcn"] = {{"pe", to_string(c.model.cptcn.position)},
                {"residual", c.model.cptcn.residual},
                {"layernorm", c.model.cptcn.layer_norm},
                {"qkv", to_string(c.model.cptcn.qkv)}};
  j["attention"] = {{"sites_with_drpe", c.model.drpe_sites.str()},
                    {"terms", c.model.terms.str()},
                    {"max_distance", c.model.max_distance}};
  j["train"] = {{"steps", c.train.steps},
                {"batch_size", c.train.batch_size},
                {"peak_lr", c.train.schedule.peak},
                {"warmup", c.train.schedule.warmup},
                {"beta1", c.train.adam.beta1},
                {"beta2", c.train.adam.beta2},
                {"eps", c.train.adam.eps},
                {"seed", c.train.seed},
                {"log_every", c.train.log_every},
                {"checkpoint_every", c.train.checkpoint_every},
                {"average_last", c.train.average_last}};
  j["decode"] = {{"ctc_beam", c.decode.ctc_beam},
                 {"beam", c.decode.translation.beam_width},
                 {"alpha", c.decode.translation.alpha},
                 {"max_len", c.decode.translation.max_len}};
  json grids = json::object();
  for (const AblationGrid& g : c.grids) {
    json cells = json::array();
    for (const AblationCell& cell : g.cells) cells.push_back({{"name", cell.name}, {"overrides", cell.overrides}});
    grids[g.name] = cells;
  }
  j["ablation"] = {{"grids", grids}};
  return j;
}

RunConfig run_config_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be an object");
  static const std::vector<std::string> sections{"corpus", "model",  "gathering", "cptcn",
                                                 "attention", "train", "decode", "ablation"};
  reject_unknown(j, "<root>", sections);
  RunConfig c;
  try {
    std::vector<std::string> seen;
    const json& co = section(j, "corpus");
    take(co, "seed", c.corpus.seed, seen);
    take(co, "glosses", c.corpus.glosses, seen);
    take(co, "train_size", c.corpus.train_size, seen);
    take(co, "dev_size", c.corpus.dev_size, seen);
    take(co, "test_size", c.corpus.test_size, seen);
    take(co, "min_glosses", c.corpus.min_glosses, seen);
    take(co, "max_glosses", c.corpus.max_glosses, seen);
    take(co, "min_frames", c.corpus.min_frames, seen);
    take(co, "max_frames", c.corpus.max_frames, seen);
    take(co, "feature_dim", c.corpus.feature_dim, seen);
    take(co, "noise", c.corpus.noise, seen);
    take(co, "reorder", c.corpus.reorder, seen);
    reject_unknown(co, "corpus", seen);

    seen.clear();
    const json& mo = section(j, "model");
    take(mo, "seed", c.model_seed, seen);
    take(mo, "d_model", c.model.d_model, seen);
    take(mo, "heads", c.model.heads, seen);
    take(mo, "encoder_layers", c.model.encoder_layers, seen);
    take(mo, "decoder_layers", c.model.decoder_layers, seen);
    take(mo, "ff_dim", c.model.ff_dim, seen);
    take(mo, "dropout", c.model.dropout, seen);
    take(mo, "lambda_recognition", c.model.lambda_recognition, seen);
    take(mo, "lambda_translation", c.model.lambda_translation, seen);
    take(mo, "cptcn_all_layers", c.model.cptcn_all_layers, seen);
    reject_unknown(mo, "model", seen);

    seen.clear();
    const json& ga = section(j, "gathering");
    GatherConfig& gc = c.model.cptcn.gathering;
    std::string variant = to_string(gc.variant);
    take(ga, "variant", variant, seen);
    gc.variant = parse_gather_variant(variant);
    take(ga, "l", gc.window, seen);
    take(ga, "gamma", gc.gamma, seen);
    reject_unknown(ga, "gathering", seen);

    seen.clear();
    const json& cp = section(j, "cptcn");
    std::string pe = to_string(c.model.cptcn.position), qkv = to_string(c.model.cptcn.qkv);
    take(cp, "pe", pe, seen);
    take(cp, "residual", c.model.cptcn.residual, seen);
    take(cp, "layernorm", c.model.cptcn.layer_norm, seen);
    take(cp, "qkv", qkv, seen);
    c.model.cptcn.position = parse_clip_position(pe);
    c.model.cptcn.qkv = parse_qkv_source(qkv);
    reject_unknown(cp, "cptcn", seen);

    seen.clear();
    const json& at = section(j, "attention");
    std::string sites = c.model.drpe_sites.str(), terms = c.model.terms.str();
    take(at, "sites_with_drpe", sites, seen);
    take(at, "terms", terms, seen);
    take(at, "max_distance", c.model.max_distance, seen);
    c.model.drpe_sites = DrpeSites::parse(sites);
    c.model.terms = TermSet::parse(terms);
    reject_unknown(at, "attention", seen);

    seen.clear();
    const json& tr = section(j, "train");
    take(tr, "steps", c.train.steps, seen);
    take(tr, "batch_size", c.train.batch_size, seen);
    take(tr, "peak_lr", c.train.schedule.peak, seen);
    take(tr, "warmup", c.train.schedule.warmup, seen);
    take(tr, "beta1", c.train.adam.beta1, seen);
    take(tr, "beta2", c.train.adam.beta2, seen);
    take(tr, "eps", c.train.adam.eps, seen);
    take(tr, "seed", c.train.seed, seen);
    take(tr, "log_every", c.train.log_every, seen);
    take(tr, "checkpoint_every", c.train.checkpoint_every, seen);
    take(tr, "average_last", c.train.average_last, seen);
    reject_unknown(tr, "train", seen);

    seen.clear();
    const json& de = section(j, "decode");
    take(de, "ctc_beam", c.decode.ctc_beam, seen);
    take(de, "beam", c.decode.translation.beam_width, seen);
    take(de, "alpha", c.decode.translation.alpha, seen);
    take(de, "max_len", c.decode.translation.max_len, seen);
    reject_unknown(de, "decode", seen);

    seen.clear();
    const json& ab = section(j, "ablation");
    json grids = json::object();
    take(ab, "grids", grids, seen);
    reject_unknown(ab, "ablation", seen);
    for (const auto& [name, cells] : grids.items()) {
      AblationGrid g;
      g.name = name;
      for (const json& cell : cells) {
        AblationCell ac;
        ac.name = cell.at("name").get<std::string>();
        if (cell.contains("overrides")) ac.overrides = cell.at("overrides");
        if (!ac.overrides.is_object()) throw ConfigError("config: grid '" + name + "' cell overrides must be an object");
        g.cells.push_back(std::move(ac));
      }
      c.grids.push_back(std::move(g));
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return c;
}

void apply_override(json& config, const std::string& dotted_key, const json& value) {
  const std::size_t dot = dotted_key.find('.');
  if (dot == std::string::npos) throw ConfigError("override '" + dotted_key + "' must look like section.key");
  const std::string sec = dotted_key.substr(0, dot), key = dotted_key.substr(dot + 1);
  if (!config.contains(sec) || !config[sec].is_object() || !config[sec].contains(key)) {
    throw ConfigError("unknown config key '" + dotted_key + "'");
  }
  json& slot = config[sec][key];
  const bool slot_number = slot.is_number(), value_number = value.is_number();
  if (slot.type() != value.type() && !(slot_number && value_number)) {
    throw ConfigError("config key '" + dotted_key + "' expects " + std::string(slot.type_name()) + ", got " +
                      std::string(value.type_name()));
  }
  if (slot.is_number_unsigned() && value.is_number_integer() && value.get<std::int64_t>() < 0) {
    throw ConfigError("config key '" + dotted_key + "' must be non-negative");
  }
  if (slot.is_number_integer() && value.is_number_float()) {
    throw ConfigError("config key '" + dotted_key + "' expects an integer");
  }
  slot = value;
}

void apply_override(json& config, const std::string& dotted_key, const std::string& value) {
  json parsed = json::parse(value, nullptr, false);
  if (parsed.is_discarded()) parsed = value;
  // A bare word that happens to parse (true/false/numbers) stays typed; string
  // slots still accept it as text.
  const std::size_t dot = dotted_key.find('.');
  if (dot != std::string::npos) {
    const std::string sec = dotted_key.substr(0, dot), key = dotted_key.substr(dot + 1);
    if (config.contains(sec) && config[sec].is_object() && config[sec].contains(key) && config[sec][key].is_string()) {
      parsed = value;
    }
  }
  apply_override(config, dotted_key, parsed);
}

std::string canonical_json(const json& j) { return j.dump(); }

std::uint64_t config_digest(const json& j) { return fnv1a64(canonical_json(j)); }

std::string digest_hex(std::uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  json j = json::parse(in, nullptr, false, true);
  if (j.is_discarded()) throw ConfigError("config '" + path + "' is not valid JSON");
  return run_config_from_json(j);
}

}  // namespace slt
