// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/app/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <thread>

#include "zebra/seq/sequence.hpp"

namespace zebra::app {

namespace {

using nlohmann::json;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

const char* kind(const json& j) {
  if (j.is_boolean()) return "boolean";
  if (j.is_number_integer()) return "integer";
  if (j.is_number()) return "number";
  if (j.is_string()) return "string";
  if (j.is_array()) return "array";
  if (j.is_object()) return "object";
  return "null";
}

bool compatible(const json& base, const json& value) {
  if (base.is_number_float()) return value.is_number();
  if (base.is_number_integer()) return value.is_number_integer();
  return std::string(kind(base)) == kind(value);
}

void merge_strict(json& base, const json& patch, const std::string& path) {
  if (!patch.is_object()) throw ConfigError("config " + (path.empty() ? "root" : "'" + path + "'") + " must be an object", path);
  for (const auto& [key, value] : patch.items()) {
    const auto where = join(path, key);
    if (!base.contains(key)) throw ConfigError("unknown config key '" + where + "'", where);
    auto& slot = base[key];
    if (slot.is_object()) {
      merge_strict(slot, value, where);
    } else if (!compatible(slot, value)) {
      throw ConfigError("config key '" + where + "' expects " + kind(slot) + ", got " + kind(value), where);
    } else {
      slot = value;
    }
  }
}

bool has_path(const json& j, std::initializer_list<const char*> keys) {
  const json* cur = &j;
  for (const char* k : keys) {
    if (!cur->is_object() || !cur->contains(k)) return false;
    cur = &(*cur)[k];
  }
  return true;
}

json vq_train_json(const vq::VqTrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"warmup_steps", c.warmup_steps},
          {"seed", c.seed},
          {"max_val_frames", c.max_val_frames},
          {"target_recon", c.target_recon},
          {"target_usage", c.target_usage}};
}

vq::VqTrainConfig vq_train_from(const json& j) {
  vq::VqTrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.lr = j.at("lr").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.warmup_steps = j.at("warmup_steps").get<std::int64_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.max_val_frames = j.at("max_val_frames").get<std::int64_t>();
  c.target_recon = j.at("target_recon").get<double>();
  c.target_usage = j.at("target_usage").get<double>();
  if (c.epochs < 1) throw ConfigError("vq_train.epochs must be >= 1", "vq_train.epochs");
  if (c.batch_size < 1) throw ConfigError("vq_train.batch_size must be >= 1", "vq_train.batch_size");
  if (!(c.lr > 0)) throw ConfigError("vq_train.lr must be > 0", "vq_train.lr");
  return c;
}

json lm_train_json(const lm::LmTrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"grad_accum", c.grad_accum},
          {"lr", c.lr},
          {"weight_decay", c.weight_decay},
          {"clip", c.clip},
          {"warmup_steps", c.warmup_steps},
          {"seed", c.seed},
          {"sequences_per_epoch", c.sequences_per_epoch},
          {"log_every", c.log_every},
          {"augment", c.augment}};
}

lm::LmTrainConfig lm_train_from(const json& j) {
  lm::LmTrainConfig c;
  c.epochs = j.at("epochs").get<int>();
  c.batch_size = j.at("batch_size").get<int>();
  c.grad_accum = j.at("grad_accum").get<int>();
  c.lr = j.at("lr").get<double>();
  c.weight_decay = j.at("weight_decay").get<double>();
  c.clip = j.at("clip").get<double>();
  c.warmup_steps = j.at("warmup_steps").get<std::int64_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.sequences_per_epoch = j.at("sequences_per_epoch").get<std::int64_t>();
  c.log_every = j.at("log_every").get<std::int64_t>();
  c.augment = j.at("augment").get<bool>();
  if (c.epochs < 1) throw ConfigError("lm_train.epochs must be >= 1", "lm_train.epochs");
  if (c.batch_size < 1) throw ConfigError("lm_train.batch_size must be >= 1", "lm_train.batch_size");
  if (c.grad_accum < 1) throw ConfigError("lm_train.grad_accum must be >= 1", "lm_train.grad_accum");
  if (!(c.lr > 0)) throw ConfigError("lm_train.lr must be > 0", "lm_train.lr");
  return c;
}

// Runs `fn`, turning library validation errors into ConfigErrors on `section`.
template <typename F>
auto section(const std::string& name, F&& fn) {
  try {
    return fn();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("config section '" + name + "': " + e.what(), name);
  }
}

}  // namespace

int RunConfig::resolved_threads() const {
  if (threads > 0) return threads;
  return std::max(1u, std::thread::hardware_concurrency());
}

json RunConfig::to_json() const {
  json j;
  j["family"] = pde::family_name(family);
  j["profile"] = profile;
  j["seed"] = seed;
  j["threads"] = threads;
  j["dataset"] = dataset.to_json();
  j["vq"] = vq.to_json();
  j["vq_train"] = vq_train_json(vq_train);
  j["lm"] = lm.to_json();
  j["lm_train"] = lm_train_json(lm_train);
  j["context"] = {{"n_max", context.n_max}, {"m", context.m}, {"val_windows", context.val_windows}};
  j["infer"] = {{"mode", infer::mode_name(infer.mode)},
                {"observed", infer.observed},
                {"n_context", infer.n_context},
                {"target_frames", infer.target_frames},
                {"temperature", infer.temperature},
                {"samples", infer.samples},
                {"env", infer.env},
                {"traj", infer.traj}};
  j["eval"] = {{"window", eval.window},
               {"temperature", eval.temperature},
               {"context_sizes", eval.context_sizes},
               {"seeds", eval.seeds},
               {"uq_temperatures", eval.uq_temperatures},
               {"uq_samples", eval.uq_samples},
               {"gen_samples", eval.gen_samples},
               {"gen_temperature", eval.gen_temperature}};
  return j;
}

int max_examples(std::int64_t max_context, std::int64_t m, std::int64_t tokens_per_frame) {
  return static_cast<int>((max_context - 2) / (m * tokens_per_frame + 2));
}

RunConfig default_config(pde::Family family, const std::string& profile) {
  RunConfig c;
  c.family = family;
  c.profile = profile;
  c.dataset = pde::make_profile(family, profile);
  c.vq = vq::vq_preset(family, profile);
  c.lm = lm::lm_preset(family, profile, c.vq.codebook_size);
  const bool two_d = pde::spatial_dims(family) == 2;

  c.vq_train.lr = 3e-4;
  c.vq_train.epochs = two_d ? 300 : 1000;
  c.lm_train.lr = 1e-4;
  c.lm_train.epochs = two_d ? 30 : 100;
  c.lm_train.batch_size = two_d ? 2 : 4;
  c.lm_train.grad_accum = two_d ? 4 : 1;
  if (profile == "desk") {
    c.vq_train.epochs = 30;
    c.vq_train.lr = 2e-3;
    c.lm_train.epochs = 32;
    c.lm_train.batch_size = 2;
    c.lm_train.grad_accum = 1;
    c.lm_train.lr = 1e-3;
    c.lm_train.augment = true;
  } else if (profile == "tiny") {
    c.vq_train.epochs = 2;
    c.vq_train.lr = 2e-3;
    c.vq_train.batch_size = 8;
    c.vq_train.max_val_frames = 16;
    c.lm_train.epochs = 2;
    c.lm_train.batch_size = 2;
    c.lm_train.grad_accum = 1;
    c.lm_train.lr = 2e-3;
    c.context.val_windows = 4;
    c.eval.seeds = {0};
    c.eval.context_sizes = {1, 2};
    c.eval.uq_temperatures = {0.1, 1.0};
    c.eval.uq_samples = 3;
    c.eval.gen_samples = 3;
  }
  c.context.n_max = std::min(seq::kMaxContext, max_examples(c.lm.max_context, c.context.m, c.vq.tokens_per_frame()));
  return c;
}

json parse_config_text(const std::string& text, const std::string& source) {
  if (std::all_of(text.begin(), text.end(), [](unsigned char ch) { return std::isspace(ch); })) return json::object();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // e.byte is the 1-based offset just past the offending character.
    const std::size_t at = e.byte == 0 ? 0 : std::min<std::size_t>(e.byte - 1, text.size());
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i < at; ++i) {
      if (text[i] == '\n') ++line, col = 1;
      else ++col;
    }
    std::string msg = e.what();
    if (const auto p = msg.find("; "); p != std::string::npos) msg = msg.substr(p + 2);
    throw ConfigError(source + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + msg);
  }
}

json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

RunConfig resolve_config(const json& file, const json& overrides) {
  if (!file.is_object()) throw ConfigError("config root must be an object");
  auto pick = [&](const char* key, const std::string& fallback) {
    for (const json* src : {&overrides, &file})
      if (src->contains(key)) {
        if (!(*src)[key].is_string()) throw ConfigError(std::string("config key '") + key + "' expects string", key);
        return (*src)[key].get<std::string>();
      }
    return fallback;
  };
  const auto family = section("family", [&] { return pde::parse_family(pick("family", "advection")); });
  const auto profile = pick("profile", "desk");
  const auto defaults = section("profile", [&] { return default_config(family, profile); });

  json merged = defaults.to_json();
  merge_strict(merged, file, "");
  merge_strict(merged, overrides, "");

  auto user_set = [&](std::initializer_list<const char*> keys) { return has_path(file, keys) || has_path(overrides, keys); };

  RunConfig c;
  c.family = family;
  c.profile = profile;
  c.seed = merged.at("seed").get<std::uint64_t>();
  c.threads = merged.at("threads").get<int>();
  if (c.threads < 0) throw ConfigError("threads must be >= 0", "threads");
  c.dataset = section("dataset", [&] { return pde::DatasetProfile::from_json(merged.at("dataset")); });

  // The tokenizer grid follows the dataset grid and the vocabulary follows
  // the codebook unless set explicitly.
  if (!user_set({"vq", "grid"})) merged["vq"]["grid"] = c.dataset.grid;
  if (!user_set({"vq", "tokens_per_frame"})) merged["vq"].erase("tokens_per_frame");
  c.vq = section("vq", [&] { return vq::VqConfig::from_json(merged.at("vq")); });
  if (c.vq.grid != c.dataset.grid) throw ConfigError("vq.grid must equal dataset.grid", "vq.grid");
  if (!user_set({"vq", "seed"})) c.vq.seed = c.seed;

  auto& lmj = merged["lm"];
  if (!user_set({"lm", "content_vocab"})) lmj["content_vocab"] = c.vq.codebook_size;
  if (!user_set({"lm", "vocab"})) lmj["vocab"] = c.vq.codebook_size + seq::Vocabulary::kSpecials;
  c.lm = section("lm", [&] { return lm::LmConfig::from_json(lmj); });
  if (c.lm.content_vocab != c.vq.codebook_size)
    throw ConfigError("lm.content_vocab must equal vq.codebook_size", "lm.content_vocab");
  if (c.lm.vocab != c.vq.codebook_size + seq::Vocabulary::kSpecials)
    throw ConfigError("lm.vocab must equal vq.codebook_size + 8", "lm.vocab");
  if (!user_set({"lm", "seed"})) c.lm.seed = c.seed;

  c.vq_train = section("vq_train", [&] { return vq_train_from(merged.at("vq_train")); });
  c.lm_train = section("lm_train", [&] { return lm_train_from(merged.at("lm_train")); });
  if (!user_set({"vq_train", "seed"})) c.vq_train.seed = c.seed;
  if (!user_set({"lm_train", "seed"})) c.lm_train.seed = c.seed;

  const auto& cj = merged.at("context");
  c.context.m = cj.at("m").get<std::int64_t>();
  c.context.val_windows = cj.at("val_windows").get<std::int64_t>();
  const int fit = max_examples(c.lm.max_context, c.context.m, c.vq.tokens_per_frame());
  c.context.n_max = user_set({"context", "n_max"}) ? cj.at("n_max").get<int>() : std::min(seq::kMaxContext, fit);
  if (c.context.m < 1 || c.context.m > c.dataset.frames)
    throw ConfigError("context.m must lie in [1, dataset.frames]", "context.m");
  if (c.context.n_max < 1 || c.context.n_max > std::min(seq::kMaxContext, fit))
    throw ConfigError("context.n_max must lie in [1, " + std::to_string(std::min(seq::kMaxContext, fit)) +
                          "] for this context size",
                      "context.n_max");

  const auto& ij = merged.at("infer");
  c.infer.mode = section("infer.mode", [&] { return infer::parse_mode(ij.at("mode").get<std::string>()); });
  c.infer.observed = ij.at("observed").get<int>();
  c.infer.n_context = ij.at("n_context").get<int>();
  c.infer.target_frames = ij.at("target_frames").get<std::int64_t>();
  c.infer.temperature = ij.at("temperature").get<double>();
  c.infer.samples = ij.at("samples").get<int>();
  c.infer.env = ij.at("env").get<std::int64_t>();
  c.infer.traj = ij.at("traj").get<std::int64_t>();
  if (c.infer.temperature < 0) throw ConfigError("infer.temperature must be >= 0", "infer.temperature");
  if (c.infer.samples < 1) throw ConfigError("infer.samples must be >= 1", "infer.samples");
  if (c.infer.n_context < 0 || c.infer.n_context > seq::kMaxContext)
    throw ConfigError("infer.n_context must lie in [0, 6]", "infer.n_context");

  const auto& ej = merged.at("eval");
  section("eval", [&] {
    c.eval.window = ej.at("window").get<std::int64_t>();
    c.eval.temperature = ej.at("temperature").get<double>();
    c.eval.context_sizes = ej.at("context_sizes").get<std::vector<int>>();
    c.eval.seeds = ej.at("seeds").get<std::vector<std::uint64_t>>();
    c.eval.uq_temperatures = ej.at("uq_temperatures").get<std::vector<double>>();
    c.eval.uq_samples = ej.at("uq_samples").get<int>();
    c.eval.gen_samples = ej.at("gen_samples").get<int>();
    c.eval.gen_temperature = ej.at("gen_temperature").get<double>();
    return 0;
  });
  if (c.eval.window < 2 || c.eval.window > c.dataset.frames)
    throw ConfigError("eval.window must lie in [2, dataset.frames]", "eval.window");
  for (int n : c.eval.context_sizes)
    if (n < 1 || n > seq::kMaxContext) throw ConfigError("eval.context_sizes entries must lie in [1, 6]", "eval.context_sizes");
  if (c.eval.uq_samples < 2) throw ConfigError("eval.uq_samples must be >= 2", "eval.uq_samples");
  if (c.eval.gen_samples < 2) throw ConfigError("eval.gen_samples must be >= 2", "eval.gen_samples");
  return c;
}

void set_override(json& overrides, const std::string& dotted_key, const std::string& value) {
  json parsed;
  try {
    parsed = json::parse(value);
  } catch (const json::parse_error&) {
    parsed = value;
  }
  json* cur = &overrides;
  std::string rest = dotted_key;
  for (std::size_t dot; (dot = rest.find('.')) != std::string::npos; rest = rest.substr(dot + 1)) {
    auto& next = (*cur)[rest.substr(0, dot)];
    if (next.is_null()) next = json::object();
    cur = &next;
  }
  (*cur)[rest] = parsed;
}

}  // namespace zebra::app
