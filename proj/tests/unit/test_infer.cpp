#include <filesystem>
#include <memory>

#include "doctest.h"
#include "zebra/infer/engine.hpp"
#include "zebra/num/rng.hpp"
#include "zebra/pde/dataset.hpp"

using namespace zebra;
using namespace zebra::infer;

namespace {

std::vector<std::int32_t> content(std::int64_t n, int K, std::uint64_t seed) {
  num::Rng rng(seed);
  std::vector<std::int32_t> ids;
  for (std::int64_t i = 0; i < n; ++i) ids.push_back(static_cast<std::int32_t>(rng.uniform_int(0, K - 1)));
  return ids;
}

PromptSpec spec_of(Mode mode, int observed, std::int64_t target = 8) {
  PromptSpec s;
  s.mode = mode;
  s.observed = observed;
  s.target_frames = target;
  return s;
}

Engine tiny_engine(std::uint64_t seed = 1) {
  auto vq_cfg = vq::vq_preset(pde::Family::advection, "tiny");
  auto tok = std::make_shared<vq::Tokenizer>(vq::VqModel(vq_cfg), 0.5);
  auto lm_cfg = lm::lm_preset(pde::Family::advection, "tiny", vq_cfg.codebook_size);
  lm_cfg.seed = seed;
  return Engine(tok, std::make_shared<lm::LmModel>(lm_cfg));
}

std::vector<float> smooth_frames(std::int64_t frames, std::int64_t n, double phase) {
  std::vector<float> out;
  for (std::int64_t t = 0; t < frames; ++t)
    for (std::int64_t i = 0; i < n; ++i) out.push_back(static_cast<float>(std::sin(0.05 * i + phase + 0.3 * t)));
  return out;
}

}  // namespace

TEST_CASE("prompt lengths follow the grammar") {
  const seq::Vocabulary v{256};
  const auto ctx = content(9 * 32, 256, 1);
  const auto two = content(2 * 32, 256, 2);
  const auto ic = content(32, 256, 3);
  // <bos><bot> + 2 frames
  CHECK(build_prompt(spec_of(Mode::temporal, 2), {}, two, 32, v).size() == 66);
  // <bos> + <bot> 288 <eot> + <bot> + 32
  CHECK(build_prompt(spec_of(Mode::adaptive, 1), {ctx}, ic, 32, v).size() == 324);
  CHECK(build_prompt(spec_of(Mode::adaptive_temporal, 2), {ctx}, two, 32, v).size() == 356);
  CHECK(build_prompt(spec_of(Mode::generative, 0), {ctx}, {}, 32, v).size() == 292);

  const std::vector<std::span<const std::int32_t>> six(6, std::span<const std::int32_t>(ctx));
  const auto p = build_prompt(spec_of(Mode::adaptive, 1), six, ic, 32, v);
  CHECK(p.size() == 1 + 6 * 290 + 1 + 32);
  check_budget(static_cast<std::int64_t>(p.size()), 8 * 32, 2048);
  try {
    check_budget(static_cast<std::int64_t>(p.size()), 9 * 32, 2048);
    FAIL("expected overflow");
  } catch (const PromptOverflow& e) {
    CHECK(e.required() == 1774 + 288);
    CHECK(e.available() == 2048);
  }
}

TEST_CASE("every prompt parses") {
  const seq::Vocabulary v{64};
  num::Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const Mode mode = static_cast<Mode>(rng.uniform_int(0, 3));
    const int n = mode == Mode::temporal ? 0 : static_cast<int>(rng.uniform_int(1, 6));
    const int observed = mode == Mode::generative ? 0 : mode == Mode::adaptive ? 1 : static_cast<int>(rng.uniform_int(1, 4));
    std::vector<std::vector<std::int32_t>> ctx;
    for (int c = 0; c < n; ++c) ctx.push_back(content(rng.uniform_int(1, 5) * 8, 64, rng.uniform_int(0, 1 << 30)));
    const std::vector<std::span<const std::int32_t>> spans(ctx.begin(), ctx.end());
    const auto obs = content(observed * 8, 64, trial);
    const auto p = build_prompt(spec_of(mode, observed), spans, obs, 8, v);
    seq::ParseOptions opt;
    opt.allow_open_tail = true;
    const auto parsed = seq::parse_sequence(p, 8, v, opt);
    CHECK(parsed.has_bos);
    CHECK(parsed.open_tail);
    REQUIRE(parsed.spans.size() == static_cast<std::size_t>(n + 1));
    CHECK(parsed.spans.back().length() == observed * 8);
  }
}

TEST_CASE("prompt validation") {
  const seq::Vocabulary v{16};
  const auto ctx = content(16, 16, 1), ic = content(8, 16, 2);
  CHECK_THROWS_AS(build_prompt(spec_of(Mode::adaptive, 1), {}, ic, 8, v), std::invalid_argument);
  CHECK_THROWS_AS(build_prompt(spec_of(Mode::temporal, 1), {ctx}, ic, 8, v), std::invalid_argument);
  CHECK_THROWS_AS(build_prompt(spec_of(Mode::adaptive, 2), {ctx}, content(16, 16, 3), 8, v), std::invalid_argument);
  CHECK_THROWS_AS(build_prompt(spec_of(Mode::temporal, 2), {}, ic, 8, v), std::invalid_argument);
  CHECK_THROWS_AS(build_prompt(spec_of(Mode::adaptive, 1), {ctx}, std::vector<std::int32_t>(8, 17), 8, v),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_prompt(spec_of(Mode::generative, 0), {content(12, 16, 4)}, {}, 8, v), std::invalid_argument);
  CHECK(parse_mode("adaptive+temporal") == Mode::adaptive_temporal);
  CHECK_THROWS_AS(parse_mode("oneshot"), std::invalid_argument);
}

TEST_CASE("rollout shapes and determinism") {
  const auto engine = tiny_engine();
  const auto fs = engine.frame_size();
  const auto tpf = engine.tokens_per_frame();
  const auto ctx = smooth_frames(9, fs, 0.0);
  const auto ic = smooth_frames(1, fs, 1.0);

  auto spec = spec_of(Mode::adaptive, 1, 5);
  spec.temperature = 0.0;
  const auto a = engine.rollout_physical(spec, {ctx}, ic);
  const auto b = engine.rollout_physical(spec, {ctx}, ic);
  REQUIRE(a.frames.size() == 1);
  CHECK(a.frames[0].size() == static_cast<std::size_t>(5 * fs));
  CHECK(a.tokens[0].size() == static_cast<std::size_t>(5 * tpf));
  CHECK(a.frames == b.frames);

  const auto ctx_ids = engine.tokenizer().tokenize(ctx);
  const auto ic_ids = engine.tokenizer().tokenize(ic);
  const auto c = engine.rollout(spec, {ctx_ids}, ic_ids);
  CHECK(c.tokens == a.tokens);

  spec.temperature = 1.0;
  spec.samples = 3;
  const auto s1 = engine.rollout(spec, {ctx_ids}, ic_ids, 1);
  const auto s2 = engine.rollout(spec, {ctx_ids}, ic_ids, 2);
  CHECK(s1.tokens == s2.tokens);
  CHECK(s1.tokens[0] != s1.tokens[1]);
  for (const auto& t : s1.tokens)
    for (auto id : t) CHECK(engine.vocab().is_content(id));

  spec.target_frames = 80;
  CHECK_THROWS_AS(engine.rollout(spec, {ctx_ids}, ic_ids), PromptOverflow);
}

TEST_CASE("free generation returns S distinct trajectories") {
  const auto engine = tiny_engine(7);
  const auto fs = engine.frame_size();
  const auto ctx_ids = engine.tokenizer().tokenize(smooth_frames(9, fs, 0.4));
  const auto r = engine.sample_new_trajectories(ctx_ids, 9, 10, 1.0, 5);
  REQUIRE(r.frames.size() == 10);
  for (const auto& f : r.frames) CHECK(f.size() == static_cast<std::size_t>(9 * fs));
  for (std::size_t i = 0; i < r.frames.size(); ++i)
    for (std::size_t j = i + 1; j < r.frames.size(); ++j) {
      double d = 0;
      for (std::int64_t x = 0; x < fs; ++x) d += std::abs(r.frames[i][x] - r.frames[j][x]);
      CHECK(d > 0);
    }
  CHECK(r.prompt.size() == 1 + 1 + ctx_ids.size() + 1 + 1);
}

TEST_CASE("split tokenization and token pools") {
  const auto dir = std::filesystem::temp_directory_path() / "zebra_infer_pool";
  std::filesystem::remove_all(dir);
  pde::generate_dataset(pde::Family::advection, pde::make_profile(pde::Family::advection, "tiny"), 3, dir / "data");
  const auto data = pde::Dataset::open(dir / "data");
  const auto engine = tiny_engine();
  const auto one = tokenize_split(engine.tokenizer(), data, data.test(), 1);
  const auto two = tokenize_split(engine.tokenizer(), data, data.test(), 2);
  REQUIRE(one.size() == data.test().envs.size() * static_cast<std::size_t>(data.test().traj_count()));
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(one[i].tokens == two[i].tokens);
    CHECK(one[i].tokens.size() == static_cast<std::size_t>(data.frames() * engine.tokens_per_frame()));
  }
  write_token_pool(dir / "pool.bin", one, engine.tokens_per_frame(), {{"split", "test"}});
  nlohmann::json header;
  const auto back = read_token_pool(dir / "pool.bin", &header);
  CHECK(header.at("split") == "test");
  REQUIRE(back.size() == one.size());
  for (std::size_t i = 0; i < one.size(); ++i) {
    CHECK(back[i].env == one[i].env);
    CHECK(back[i].traj == one[i].traj);
    CHECK(back[i].tokens == one[i].tokens);
  }
  std::filesystem::remove_all(dir);
}
