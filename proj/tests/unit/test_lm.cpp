#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "zebra/lm/generate.hpp"
#include "zebra/lm/model.hpp"
#include "zebra/lm/train.hpp"
#include "zebra/num/ops.hpp"
#include "zebra/num/rng.hpp"

using namespace zebra;
using namespace zebra::lm;

namespace {

LmConfig small_config(std::int32_t K = 24, std::uint64_t seed = 3) {
  LmConfig c;
  c.content_vocab = K;
  c.vocab = K + seq::Vocabulary::kSpecials;
  c.hidden = 32;
  c.depth = 2;
  c.heads = 4;
  c.max_context = 96;
  c.seed = seed;
  return c;
}

std::vector<std::int32_t> random_ids(std::int64_t n, std::int32_t V, num::Rng& rng) {
  std::vector<std::int32_t> ids;
  for (std::int64_t i = 0; i < n; ++i) ids.push_back(static_cast<std::int32_t>(rng.uniform_int(0, V - 1)));
  return ids;
}

std::vector<float> full_logits(const LmModel& m, const std::vector<std::int32_t>& ids) {
  num::NoGradGuard g;
  const auto t = m.forward(ids, 1, static_cast<std::int64_t>(ids.size()));
  return {t.data().begin(), t.data().end()};
}

seq::PackedWindow single_sequence_window(std::int64_t frames, std::int64_t tpf, std::int64_t window,
                                         const seq::Vocabulary& v, num::Rng& rng) {
  seq::TokenTrajectory t{0, 0, {}};
  for (std::int64_t i = 0; i < frames * tpf; ++i) t.tokens.push_back(static_cast<std::int32_t>(rng.uniform_int(0, v.K - 1)));
  const auto s = seq::build_context_sequence({&t}, 0, frames, tpf, v);
  return seq::pack_training_stream({s.ids}, window, v).at(0);
}

}  // namespace

TEST_CASE("parameter count closed form") {
  // V*C + depth*(2C + 4C^2 + 3CF) + C + C*V, worked by hand.
  auto desk = lm_preset(pde::Family::advection, "desk", 256);
  CHECK(parameter_count(desk) == 1117312);
  auto paper = lm_preset(pde::Family::advection, "paper", 256);
  CHECK(parameter_count(paper) == 8528128);
  CHECK(paper.max_context == 2048);
  CHECK(paper.vocab == 264);
  auto vort = lm_preset(pde::Family::vorticity2d, "paper", 2048);
  CHECK(vort.hidden == 384);
  CHECK(vort.vocab == 2056);
  CHECK(vort.max_context == 8192);
  CHECK(lm_preset(pde::Family::wave2d, "paper", 2048).hidden == 512);

  for (const auto& cfg : {desk, small_config()}) {
    LmModel m(cfg);
    std::int64_t total = 0;
    for (const auto& p : m.parameters()) total += p.numel();
    CHECK(total == parameter_count(cfg));
  }
}

TEST_CASE("config validation") {
  auto c = small_config();
  c.heads = 5;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config();
  c.vocab = 30;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = small_config();
  CHECK(LmConfig::from_json(c.to_json()).to_json() == c.to_json());
}

TEST_CASE("forward shape and causality") {
  LmModel m(small_config());
  num::Rng rng(11);
  const std::int64_t n = 40;
  auto ids = random_ids(n, m.config().vocab, rng);
  const auto base = full_logits(m, ids);
  CHECK(static_cast<std::int64_t>(base.size()) == n * m.config().vocab);
  const auto V = static_cast<std::size_t>(m.config().vocab);
  for (std::int64_t i : {0, 7, 20, 38}) {
    auto changed = ids;
    for (std::int64_t j = i + 1; j < n; ++j) changed[j] = static_cast<std::int32_t>(rng.uniform_int(0, m.config().vocab - 1));
    const auto other = full_logits(m, changed);
    double worst = 0;
    for (std::size_t r = 0; r <= static_cast<std::size_t>(i); ++r)
      for (std::size_t c = 0; c < V; ++c) worst = std::max(worst, std::abs(double(base[r * V + c]) - other[r * V + c]));
    CHECK(worst <= 1e-6);
  }
  CHECK_THROWS_AS(m.forward(random_ids(97, m.config().vocab, rng), 1, 97), std::length_error);
}

TEST_CASE("segment mask isolates packed sequences") {
  auto cfg = small_config();
  LmModel m(cfg);
  const seq::Vocabulary v{cfg.content_vocab};
  num::Rng rng(5);
  auto a = random_ids(10, v.K, rng), b = random_ids(12, v.K, rng), a2 = random_ids(10, v.K, rng);
  auto build = [&](const std::vector<std::int32_t>& first) {
    std::vector<std::int32_t> ids = {v.bos()};
    ids.insert(ids.end(), first.begin(), first.end());
    ids.push_back(v.eos());
    ids.push_back(v.bos());
    ids.insert(ids.end(), b.begin(), b.end());
    return ids;
  };
  const auto x = build(a), y = build(a2);
  const auto sx = seq::segment_ids(x, v), sy = seq::segment_ids(y, v);
  num::NoGradGuard g;
  const auto lx = m.forward(x, 1, static_cast<std::int64_t>(x.size()), sx);
  const auto ly = m.forward(y, 1, static_cast<std::int64_t>(y.size()), sy);
  const auto V = static_cast<std::size_t>(cfg.vocab);
  double worst = 0;
  for (std::size_t r = 12; r < x.size(); ++r)
    for (std::size_t c = 0; c < V; ++c) worst = std::max(worst, std::abs(double(lx.data()[r * V + c]) - ly.data()[r * V + c]));
  CHECK(worst <= 1e-6);
}

TEST_CASE("kv cache matches the full forward") {
  LmModel m(small_config());
  num::Rng rng(21);
  const auto ids = random_ids(60, m.config().vocab, rng);
  const auto full = full_logits(m, ids);
  const auto V = static_cast<std::size_t>(m.config().vocab);

  Session one(m);
  double worst = 0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto row = one.feed(std::span(&ids[i], 1));
    for (std::size_t c = 0; c < V; ++c) worst = std::max(worst, std::abs(double(row[c]) - full[i * V + c]));
  }
  CHECK(worst <= 1e-4);
  CHECK(one.length() == 60);

  Session chunked(m);
  worst = 0;
  std::size_t pos = 0;
  for (std::size_t len : {1u, 17u, 5u, 37u}) {
    const auto rows = chunked.feed(std::span(ids).subspan(pos, len));
    for (std::size_t i = 0; i < len; ++i)
      for (std::size_t c = 0; c < V; ++c) worst = std::max(worst, std::abs(double(rows[i * V + c]) - full[(pos + i) * V + c]));
    pos += len;
  }
  CHECK(worst <= 1e-4);

  Session fork = chunked;
  CHECK_THROWS_AS(fork.feed(random_ids(40, m.config().vocab, rng)), std::length_error);
}

TEST_CASE("generation determinism") {
  LmModel m(small_config(24, 9));
  num::Rng rng(2);
  const auto prompt = random_ids(8, 24, rng);
  SampleOptions greedy;
  greedy.temperature = 0.0;
  num::Rng r1(1), r2(2), r3(3);
  const auto a = generate_tokens(m, prompt, 50, greedy, r1);
  const auto b = generate_tokens(m, prompt, 50, greedy, r2);
  const auto c = generate_tokens_uncached(m, prompt, 50, greedy, r3);
  CHECK(a == b);
  CHECK(a == c);

  SampleOptions warm;
  warm.temperature = 0.1;
  num::Rng s1(77), s2(77);
  CHECK(generate_tokens(m, prompt, 40, warm, s1) == generate_tokens(m, prompt, 40, warm, s2));

  warm.temperature = 1.0;
  const auto one = generate_samples(m, prompt, 30, warm, 123, 5, 1);
  const auto three = generate_samples(m, prompt, 30, warm, 123, 5, 3);
  CHECK(one == three);
  CHECK(one[0] != one[1]);
  for (const auto& s : one)
    for (auto id : s) CHECK(id < 24);

  CHECK_THROWS_AS(generate_tokens(m, prompt, 89, greedy, r1), std::length_error);
  CHECK_THROWS_AS(generate_samples(m, prompt, 89, greedy, 1, 2), std::length_error);
  CHECK_THROWS_AS(generate_tokens(m, std::vector<std::int32_t>{}, 3, greedy, r1), std::invalid_argument);
}

TEST_CASE("temperature sampling") {
  const std::vector<float> two = {3.0f, -2.0f};
  SampleOptions hot;
  hot.temperature = 1e6;
  hot.forbid_specials = false;
  num::Rng rng(4);
  const int draws = 20000;
  int zeros = 0;
  for (int i = 0; i < draws; ++i) zeros += sample_token(two, 2, hot, rng) == 0;
  const double e = draws / 2.0;
  const double chi2 = (zeros - e) * (zeros - e) / e + (draws - zeros - e) * (draws - zeros - e) / e;
  CHECK(chi2 < 10.83);  // p = 0.001, one degree of freedom

  // Small temperatures collapse onto the argmax.
  const std::vector<float> logits = {0.1f, 0.7f, 0.65f, -1.0f};
  SampleOptions cold;
  cold.temperature = 1e-3;
  cold.forbid_specials = false;
  for (int i = 0; i < 1000; ++i) CHECK(sample_token(logits, 4, cold, rng) == 1);

  // Specials are never drawn when forbidden, even if they dominate.
  const std::vector<float> special_heavy = {0.0f, 0.0f, 50.0f, 50.0f};
  SampleOptions opt;
  for (int i = 0; i < 200; ++i) CHECK(sample_token(special_heavy, 2, opt, rng) < 2);
  opt.temperature = 0.0;
  CHECK(sample_token(special_heavy, 2, opt, rng) < 2);
  opt.forbid_specials = false;
  CHECK(sample_token(special_heavy, 2, opt, rng) == 2);
  opt.temperature = -1.0;
  CHECK_THROWS_AS(sample_token(special_heavy, 2, opt, rng), std::invalid_argument);

  // Empirical frequencies follow softmax(l / tau).
  SampleOptions mid;
  mid.temperature = 0.5;
  mid.forbid_specials = false;
  std::vector<int> counts(4, 0);
  const int n = 40000;
  for (int i = 0; i < n; ++i) counts[sample_token(logits, 4, mid, rng)]++;
  double z = 0;
  std::vector<double> p;
  for (float l : logits) p.push_back(std::exp(l / 0.5)), z += p.back();
  double stat = 0;
  for (int i = 0; i < 4; ++i) {
    const double expect = n * p[i] / z;
    stat += (counts[i] - expect) * (counts[i] - expect) / expect;
  }
  CHECK(stat < 16.27);  // p = 0.001, three degrees of freedom
}

TEST_CASE("loss masking and initial loss") {
  auto cfg = lm_preset(pde::Family::advection, "desk", 256);
  cfg.max_context = 512;
  LmModel m(cfg);
  const seq::Vocabulary v{256};
  num::Rng rng(8);
  const auto w = single_sequence_window(9, 32, 512, v, rng);
  const auto r = lm_loss(m, {&w});
  REQUIRE_FALSE(r.skipped);
  // <bos> <bot> 288 <eot> <eos>: every target after the first id counts, specials included.
  CHECK(r.counted == 291);
  CHECK(std::abs(r.loss.item() - std::log(264.0)) < 0.5);

  auto no_specials = cfg;
  no_specials.loss_on_specials = false;
  LmModel m2(no_specials);
  CHECK(lm_loss(m2, {&w}).counted == 288);

  seq::PackedWindow pads{std::vector<std::int32_t>(512, v.pad()), std::vector<std::uint8_t>(512, 0)};
  CHECK(lm_loss(m, {&pads}).skipped);
  // A padded partner does not change the loss of a real window.
  const auto both = lm_loss(m, {&w, &pads});
  CHECK(both.counted == 291);
  CHECK(std::abs(both.loss.item() - r.loss.item()) < 1e-5);
}

TEST_CASE("overfit one window in the desk configuration") {
  auto cfg = lm_preset(pde::Family::advection, "desk", 256);
  LmModel m(cfg);
  const seq::Vocabulary v{256};
  num::Rng rng(13);
  const auto w = single_sequence_window(9, 32, cfg.max_context, v, rng);
  const auto t0 = std::chrono::steady_clock::now();
  const auto losses = overfit_lm(m, w, 2000, 1e-3, 0.01);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  MESSAGE("overfit steps " << losses.size() << " final " << losses.back() << " in " << secs << " s");
  CHECK(losses.front() > 5.0);
  CHECK(losses.back() < 0.01);
  CHECK(losses.size() <= 2000);
}

TEST_CASE("train_lm smoke run, log and checkpoint") {
  auto cfg = small_config(16, 4);
  cfg.max_context = 128;
  LmModel m(cfg);
  const seq::Vocabulary v{16};
  num::Rng rng(6);
  // Each environment repeats a fixed token pattern shifted per trajectory.
  std::vector<seq::TokenTrajectory> pool;
  for (std::int64_t e = 0; e < 3; ++e)
    for (std::int64_t j = 0; j < 4; ++j) {
      seq::TokenTrajectory t{e, j, {}};
      for (std::int64_t f = 0; f < 6; ++f)
        for (std::int64_t p = 0; p < 4; ++p) t.tokens.push_back(static_cast<std::int32_t>((e * 5 + j + f * (e + 1) + p) % 16));
      pool.push_back(t);
    }
  seq::ContextSampler sampler(pool, 4, v, 3, 3);
  num::Rng vr(99);
  const auto val = sample_windows(sampler, 12, cfg.max_context, v, vr);
  const double before = evaluate_loss(m, val);

  LmTrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 2;
  tc.grad_accum = 2;
  tc.lr = 3e-3;
  tc.sequences_per_epoch = 40;
  tc.log_every = 1;
  tc.seed = 1;
  const auto dir = std::filesystem::temp_directory_path() / "zebra_lm_smoke";
  std::filesystem::remove_all(dir);
  const auto res = train_lm(m, sampler, val, tc, dir);
  REQUIRE(res.epochs.size() == 3);
  CHECK(res.epochs[0].val_loss < before);
  CHECK(res.epochs[2].val_loss < res.epochs[0].val_loss);

  std::ifstream log(dir / "train_log.jsonl");
  std::string line;
  int lines = 0, epoch_lines = 0;
  while (std::getline(log, line)) {
    const auto j = nlohmann::json::parse(line);
    CHECK(j.contains("step"));
    if (lines == 0) {
      CHECK(j.at("epoch") == 0);
      CHECK(j.at("val_loss").get<double>() == doctest::Approx(res.initial_val_loss));
    } else {
      CHECK(j.contains("lr"));
      CHECK(j.contains("loss"));
      epoch_lines += j.contains("val_loss");
    }
    ++lines;
  }
  CHECK(res.initial_val_loss == doctest::Approx(before).epsilon(1e-4));
  CHECK(epoch_lines == 3);
  CHECK(lines > 3);

  nlohmann::json meta;
  const auto loaded = LmModel::load(dir / "checkpoint", &meta);
  CHECK(meta.at("epoch") == 3);
  num::Rng ir(1);
  const auto ids = random_ids(20, cfg.vocab, ir);
  CHECK(full_logits(loaded, ids) == full_logits(m, ids));

  // A poisoned weight aborts with a training error.
  m.parameters()[0].data()[0] = std::numeric_limits<float>::quiet_NaN();
  tc.epochs = 1;
  CHECK_THROWS_AS(train_lm(m, sampler, val, tc, dir / "nan"), TrainingError);
  std::filesystem::remove_all(dir);
}
