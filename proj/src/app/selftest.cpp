// Copyright (c) 2026 The Zebra Authors.
// SPDX-License-Identifier: Apache-2.0

#include "zebra/app/selftest.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <numbers>
#include <set>

#include "zebra/lm/generate.hpp"
#include "zebra/lm/model.hpp"
#include "zebra/num/gradcheck.hpp"
#include "zebra/num/ops.hpp"
#include "zebra/num/rng.hpp"
#include "zebra/pde/solvers.hpp"
#include "zebra/seq/sequence.hpp"
#include "zebra/vq/tokenizer.hpp"

namespace zebra::app {

namespace {

using num::Tensor64;
constexpr double kPi = std::numbers::pi;

class Recorder {
 public:
  explicit Recorder(std::string name) : start_(std::chrono::steady_clock::now()) { group_.name = std::move(name); }

  // Passes when value < bound (strict unless inclusive).
  void below(std::string name, double value, double bound, bool inclusive = false, std::string detail = {}) {
    const bool ok = std::isfinite(value) && (inclusive ? value <= bound : value < bound);
    group_.checks.push_back({std::move(name), ok, value, bound, std::move(detail)});
  }
  void expect(std::string name, bool ok, std::string detail = {}) {
    group_.checks.push_back({std::move(name), ok, ok ? 0.0 : 1.0, 0.0, std::move(detail)});
  }
  CheckGroup finish() {
    group_.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return std::move(group_);
  }

 private:
  CheckGroup group_;
  std::chrono::steady_clock::time_point start_;
};

double rel_l2(const double* a, const double* b, std::size_t n) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < n; ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

pde::DatasetProfile profile_1d(int frames, double t_final, double length) {
  pde::DatasetProfile p;
  p.name = "oracle";
  p.frames = frames;
  p.grid = {256};
  p.t_final = t_final;
  p.length = length;
  return p;
}

constexpr double kGradBound = 1e-4;

void grad(Recorder& r, const std::string& name, const num::ScalarFn& f, const std::vector<Tensor64>& in) {
  const auto g = num::check_gradients(f, in);
  r.below("grad " + name, g.max_rel_err, kGradBound, false,
          "input " + std::to_string(g.worst_input) + " index " + std::to_string(g.worst_index));
}

}  // namespace

bool CheckGroup::passed() const {
  return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

const CheckResult* CheckGroup::worst() const {
  const CheckResult* w = nullptr;
  double ratio = -1;
  for (const auto& c : checks) {
    if (!c.passed) return &c;
    if (c.bound > 0 && c.value / c.bound > ratio) ratio = c.value / c.bound, w = &c;
  }
  return w;
}

CheckGroup gradient_oracles() {
  using namespace num;
  Recorder r("gradients");
  std::uint64_t seed = 10;
  for (const Shape& s : {Shape{3}, Shape{2, 5}, Shape{2, 3, 4}}) {
    const std::string tag = "[" + std::to_string(s.size()) + "d]";
    auto a = random_tensor(s, ++seed), b = random_tensor(s, ++seed);
    auto c = random_tensor(Shape(s.end() - 1, s.end()), ++seed);
    grad(r, "add" + tag, [](auto& in) { return probe(add(in[0], in[1])); }, {a, c});
    grad(r, "sub" + tag, [](auto& in) { return probe(sub(in[0], in[1])); }, {a, b});
    grad(r, "mul" + tag, [](auto& in) { return probe(mul(in[0], in[1])); }, {a, c});
    grad(r, "scale" + tag, [](auto& in) { return probe(scale(in[0], 0.7)); }, {a});
    grad(r, "silu" + tag, [](auto& in) { return probe(silu(in[0])); }, {a});
    grad(r, "gelu" + tag, [](auto& in) { return probe(gelu(in[0])); }, {a});
    grad(r, "softmax" + tag, [](auto& in) { return probe(softmax(in[0], -1)); }, {a});
    grad(r, "rms_norm" + tag, [](auto& in) { return probe(rms_norm(in[0], in[1])); }, {a, c});
    grad(r, "row_norm" + tag, [](auto& in) { return probe(row_norm(in[0])); }, {a});
    grad(r, "mean" + tag, [](auto& in) { return mean(mul(in[0], in[0])); }, {a});
    grad(r, "matmul" + tag, [](auto& in) { return probe(matmul(in[0], in[1])); }, {a, random_tensor({s.back(), 3}, ++seed)});
    if (s.size() >= 2) {
      grad(r, "transpose" + tag, [](auto& in) { return probe(transpose(in[0])); }, {a});
      grad(r, "slice" + tag, [](auto& in) { return probe(slice(in[0], 1, 1, in[0].dim(1) - 1)); }, {a});
      grad(r, "concat" + tag, [](auto& in) { return probe(concat<double>({in[0], in[1]}, 1)); }, {a, b});
    }
  }
  const std::vector<std::int32_t> ids{0, 3, 3, 6, 1};
  grad(r, "embedding", [&](auto& in) { return probe(embedding(in[0], ids, {5})); }, {random_tensor({7, 4}, 40)});
  const std::vector<std::int32_t> tgt{1, 0, 5, 2};
  const std::vector<std::uint8_t> mask{1, 0, 1, 1};
  grad(r, "cross_entropy", [&](auto& in) { return cross_entropy(in[0], tgt, mask); }, {random_tensor({4, 7}, 50)});

  {
    // The forward ignores z; the estimator must pass the upstream gradient through.
    auto z = random_tensor({2, 4}, 60), q = random_tensor({2, 4}, 70);
    z.set_requires_grad(true);
    auto st = straight_through(z, q);
    backward(probe(st, 7));
    const auto w = random_tensor(z.shape(), 7);
    r.expect("straight-through passes gradients", std::equal(z.grad().begin(), z.grad().end(), w.data().begin()) &&
                                                      std::equal(st.data().begin(), st.data().end(), q.data().begin()));
  }

  grad(r, "conv1d", [](auto& in) { return probe(conv1d(in[0], in[1], 1, 1)); },
       {random_tensor({2, 3, 8}, 80), random_tensor({4, 3, 3}, 81)});
  grad(r, "conv1d stride 2", [](auto& in) { return probe(conv1d(in[0], in[1], 2, 1)); },
       {random_tensor({1, 2, 8}, 82), random_tensor({3, 2, 4}, 83)});
  grad(r, "conv2d", [](auto& in) { return probe(conv2d(in[0], in[1], 1, 1)); },
       {random_tensor({1, 2, 6, 6}, 84), random_tensor({3, 2, 3, 3}, 85)});
  grad(r, "conv2d stride 2", [](auto& in) { return probe(conv2d(in[0], in[1], 2, 1)); },
       {random_tensor({2, 1, 8, 8}, 86), random_tensor({2, 1, 4, 4}, 87)});
  grad(r, "channel_bias", [](auto& in) { return probe(channel_bias(in[0], in[1])); },
       {random_tensor({2, 3, 4}, 88), random_tensor({3}, 89)});
  grad(r, "upsample2x 1d", [](auto& in) { return probe(upsample2x(in[0])); }, {random_tensor({2, 3, 4}, 90)});
  grad(r, "upsample2x 2d", [](auto& in) { return probe(upsample2x(in[0])); }, {random_tensor({1, 2, 3, 3}, 91)});

  auto x = random_tensor({1, 5, 2, 4}, 92);
  grad(r, "rope", [](auto& in) { return probe(rope(in[0], 3, 10000.0)); }, {x});
  auto q = random_tensor({2, 5, 2, 4}, 93), k = random_tensor({2, 5, 2, 4}, 94), v = random_tensor({2, 5, 2, 4}, 95);
  grad(r, "causal_attention", [](auto& in) { return probe(causal_attention(in[0], in[1], in[2])); }, {q, k, v});
  const std::vector<std::int32_t> seg{0, 0, 1, 1, 1, 0, 0, 0, 1, 1};
  grad(r, "causal_attention segments", [&](auto& in) { return probe(causal_attention(in[0], in[1], in[2], 0, seg)); },
       {q, k, v});
  grad(r, "causal_attention offset", [](auto& in) { return probe(causal_attention(in[0], in[1], in[2], 3)); },
       {random_tensor({2, 2, 2, 4}, 96), k, v});

  grad(r, "composite conv-norm-softmax-xent",
       [](auto& in) {
         auto h = rms_norm(conv1d(in[0], in[1], 1, 1), in[2]);
         return cross_entropy(reshape(softmax(h, -1), {10, 8}), std::vector<std::int32_t>{0, 1, 2, 3, 4, 5, 6, 7, 0, 1});
       },
       {random_tensor({2, 3, 8}, 100), random_tensor({5, 3, 3}, 101, 0.5), random_tensor({8}, 102)});

  // A one-layer transformer block end to end: embedding, norm, rotary
  // attention, gated MLP, head and next-token loss.
  const std::vector<std::int32_t> toks{1, 4, 2, 2, 5, 0};
  const std::vector<std::int32_t> next{4, 2, 2, 5, 0, 3};
  grad(r, "composite transformer block",
       [&](auto& in) {
         const std::int64_t T = 6, C = 4, H = 2;
         auto h = embedding(in[0], toks, {T});
         auto n = rms_norm(h, in[1]);
         auto qh = rope(reshape(matmul(n, in[2]), {1, T, H, C / H}), 0, 10000.0);
         auto kh = rope(reshape(matmul(n, in[3]), {1, T, H, C / H}), 0, 10000.0);
         auto vh = reshape(matmul(n, in[4]), {1, T, H, C / H});
         h = add(h, matmul(reshape(causal_attention(qh, kh, vh), {T, C}), in[5]));
         auto m = rms_norm(h, in[1]);
         h = add(h, matmul(mul(silu(matmul(m, in[6])), matmul(m, in[7])), in[8]));
         return cross_entropy(matmul(h, in[9]), next);
       },
       {random_tensor({6, 4}, 110), random_tensor({4}, 111), random_tensor({4, 4}, 112, 0.5),
        random_tensor({4, 4}, 113, 0.5), random_tensor({4, 4}, 114, 0.5), random_tensor({4, 4}, 115, 0.5),
        random_tensor({4, 6}, 116, 0.5), random_tensor({4, 6}, 117, 0.5), random_tensor({6, 4}, 118, 0.5),
        random_tensor({4, 6}, 119, 0.5)});
  return r.finish();
}

CheckGroup solver_oracles() {
  Recorder r("solvers");
  {
    const double L = 128.0;
    const auto prof = profile_1d(5, 100.0, L);
    std::vector<double> u0(256), exact(256);
    for (int i = 0; i < 256; ++i) u0[i] = std::sin(2 * kPi * i / 256.0);
    pde::EnvironmentSpec env;
    env.params["beta"] = 1.0;
    const auto tr = pde::solve_advection(env, u0, prof);
    for (int i = 0; i < 256; ++i) exact[i] = std::sin(2 * kPi * (L * i / 256 - 25.0) / L);
    r.below("advection vs characteristics", rel_l2(tr.frame(1), exact.data(), 256), 1e-10);
    env.params["beta"] = 0.93;
    const auto tr2 = pde::solve_advection(env, u0, prof);
    for (int i = 0; i < 256; ++i) exact[i] = std::sin(2 * kPi * (L * i / 256 - 0.93 * 100.0) / L);
    r.below("advection vs characteristics, off-grid shift", rel_l2(tr2.frame(4), exact.data(), 256), 1e-10);
  }
  {
    const double L = 16.0, beta = 0.1;
    const auto prof = profile_1d(5, 4.0, L);
    std::vector<double> u0(256), exact(256);
    for (int i = 0; i < 256; ++i) u0[i] = std::sin(2 * kPi * i / 256.0);
    pde::EnvironmentSpec env;
    env.family = pde::Family::combined;
    env.params = {{"alpha", 0.0}, {"beta", beta}, {"gamma", 0.0}};
    const auto tr = pde::solve_combined(env, u0, prof);
    const double decay = std::exp(-beta * std::pow(2 * kPi / L, 2) * 4.0);
    for (int i = 0; i < 256; ++i) exact[i] = decay * u0[i];
    r.below("heat eigenmode decay at t=4", rel_l2(tr.frame(4), exact.data(), 256), 1e-3);
  }
  {
    auto prof = pde::make_profile(pde::Family::vorticity2d, "tiny");
    const int n = static_cast<int>(prof.grid[0]);
    const double h = prof.length / n;
    auto env = pde::sample_environment(pde::Family::vorticity2d, 0, 1);
    env.params["nu"] = 0.0;
    const auto w0 = pde::sample_initial_condition(env, 21, prof);
    prof.frames = 2;
    prof.t_final = 0.1;  // 100 RK4 steps of 1e-3
    const auto tr = pde::solve_vorticity2d(env, w0, prof, 1e-3);
    const auto [e0, z0] = pde::vorticity_invariants(w0, n, h);
    const std::vector<double> w1(tr.frame(1), tr.frame(1) + tr.frame_size);
    const auto [e1, z1] = pde::vorticity_invariants(w1, n, h);
    r.below("inviscid Arakawa energy drift (100 steps)", std::abs(e1 - e0) / std::abs(e0), 1e-4);
    r.below("inviscid Arakawa enstrophy drift (100 steps)", std::abs(z1 - z0) / std::abs(z0), 1e-4);
  }
  {
    const auto prof = pde::make_profile(pde::Family::wave_b, "tiny");
    double dir = 0, neu = 0;
    for (int idx = 0; idx < 4; ++idx) {
      const auto env = pde::sample_environment(pde::Family::wave_b, idx, 2);
      const auto tr = pde::solve_wave1d_boundary(env, pde::sample_initial_condition(env, 8, prof), prof);
      const auto n = tr.frame_size;
      for (std::int64_t t = 0; t < tr.frames; ++t) {
        const double* u = tr.frame(t);
        if (env.left == pde::Boundary::dirichlet) dir = std::max(dir, std::abs(u[0]));
        else neu = std::max(neu, std::abs(u[1] - u[0]) / tr.dx);
        if (env.right == pde::Boundary::dirichlet) dir = std::max(dir, std::abs(u[n - 1]));
        else neu = std::max(neu, std::abs(u[n - 1] - u[n - 2]) / tr.dx);
      }
    }
    r.below("wave Dirichlet boundary values", dir, 1e-10);
    r.below("wave Neumann boundary derivative", neu, 1e-6);
  }
  {
    const int n = 32;
    const double h = 2 * kPi / n;
    num::Rng rng(4);
    std::vector<double> w(n * n), psi(n * n), lap(n * n), neg(n * n);
    double mean = 0;
    for (auto& v : w) mean += (v = rng.normal());
    for (auto& v : w) v -= mean / (n * n);
    pde::PoissonSolver poisson(n, h);
    poisson.solve(w.data(), psi.data());
    pde::laplacian5(psi.data(), lap.data(), n, h);
    for (int i = 0; i < n * n; ++i) neg[i] = -lap[i];
    r.below("FFT Poisson round trip", rel_l2(neg.data(), w.data(), w.size()), 1e-8);
  }
  return r.finish();
}

CheckGroup round_trip_oracles() {
  Recorder r("round trips");
  {
    vq::VqModel model(vq::vq_preset(pde::Family::advection, "tiny"));
    num::Rng rng(5);
    auto frames = [&](int count) {
      std::vector<float> out;
      for (int f = 0; f < count; ++f) {
        const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1), p = rng.uniform(0, 2 * kPi);
        for (int i = 0; i < 256; ++i) {
          const double x = 2 * kPi * i / 256;
          out.push_back(static_cast<float>(2.5 * (a * std::sin(x + p) + b * std::cos(2 * x + p))));
        }
      }
      return out;
    };
    const auto init = frames(8);
    {
      num::NoGradGuard no_grad;
      std::vector<float> scaled(init);
      for (auto& v : scaled) v /= 2.5f;
      const auto z = model.encode(num::Tensor({8, 1, 256}, scaled));
      num::Rng cr(1);
      model.codebook().init_from(z.data().data(), z.dim(0), cr);
    }
    const vq::Tokenizer tok(std::move(model), 2.5);
    const auto u = frames(9);
    const auto ids = tok.tokenize(u);
    auto grid = tok.encode(u);
    tok.quantize(grid);
    const auto direct = tok.decode(grid);
    const auto via = tok.detokenize(ids);
    r.expect("tokenize/detokenize == decode(quantize(encode)) bit-exact",
             grid.indices == ids && direct.size() == via.size() &&
                 std::memcmp(direct.data(), via.data(), direct.size() * sizeof(float)) == 0);
  }
  {
    num::Rng rng(7);
    int bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const int K = static_cast<int>(rng.uniform_int(2, 300));
      const seq::Vocabulary v{K};
      const auto tpf = rng.uniform_int(1, 8), m = rng.uniform_int(1, 9), n = rng.uniform_int(1, 6);
      const auto frames = m + rng.uniform_int(0, 3);
      std::vector<seq::TokenTrajectory> trajs;
      for (std::int64_t j = 0; j < n; ++j) {
        seq::TokenTrajectory t{0, j, {}};
        for (std::int64_t i = 0; i < frames * tpf; ++i) t.tokens.push_back(static_cast<std::int32_t>(rng.uniform_int(0, K - 1)));
        trajs.push_back(std::move(t));
      }
      std::vector<const seq::TokenTrajectory*> ptrs;
      for (auto& t : trajs) ptrs.push_back(&t);
      const auto t0 = rng.uniform_int(0, frames - m);
      const auto s = seq::build_context_sequence(ptrs, t0, m, tpf, v);
      const auto p = seq::parse_sequence(s.ids, tpf, v);
      bool ok = p.spans.size() == trajs.size();
      for (std::size_t i = 0; ok && i < p.spans.size(); ++i) {
        const auto& sp = p.spans[i];
        ok = sp.length() == m * tpf &&
             std::equal(s.ids.begin() + sp.begin, s.ids.begin() + sp.end, trajs[i].tokens.begin() + t0 * tpf);
      }
      bad += !ok;
    }
    r.below("sequence build/parse mismatches (1000 fuzzed)", bad, 0, true);
  }
  {
    num::Rng rng(5);
    const seq::Vocabulary v{256};
    int bad = 0;
    for (int trial = 0; trial < 1000; ++trial) {
      const auto window = rng.uniform_int(16, 300);
      std::vector<std::vector<std::int32_t>> seqs(static_cast<std::size_t>(rng.uniform_int(0, 12)));
      for (auto& s : seqs) {
        s.resize(static_cast<std::size_t>(rng.uniform_int(0, window - 2)));
        for (auto& id : s) id = static_cast<std::int32_t>(rng.uniform_int(0, 255));
        if (!s.empty() && rng.uniform() < 0.5) s.front() = v.bot(), s.back() = v.eot();
      }
      std::multiset<std::vector<std::int32_t>> in(seqs.begin(), seqs.end()), out;
      for (const auto& w : seq::pack_training_stream(seqs, window, v))
        for (auto& s : seq::unpack_window(w.ids, v)) out.insert(s);
      bad += in != out;
    }
    r.below("pack/unpack mismatches (1000 fuzzed)", bad, 0, true);
  }
  return r.finish();
}

CheckGroup token_arithmetic() {
  Recorder r("token arithmetic");
  const seq::Vocabulary v{256};
  num::Rng rng(1);
  int bad = 0;
  for (std::int64_t n = 1; n <= 6; ++n)
    for (std::int64_t m = 1; m <= 9; ++m)
      for (std::int64_t tpf : {4, 32}) {
        std::vector<seq::TokenTrajectory> trajs;
        for (std::int64_t j = 0; j < n; ++j) {
          seq::TokenTrajectory t{0, j, {}};
          for (std::int64_t i = 0; i < m * tpf; ++i) t.tokens.push_back(static_cast<std::int32_t>(rng.uniform_int(0, 255)));
          trajs.push_back(std::move(t));
        }
        std::vector<const seq::TokenTrajectory*> ptrs;
        for (auto& t : trajs) ptrs.push_back(&t);
        const auto built = static_cast<std::int64_t>(seq::build_context_sequence(ptrs, 0, m, tpf, v).ids.size());
        bad += built != n * (m * tpf + 2) || seq::sequence_length(n, m, tpf) != n * (m * tpf + 2);
      }
  r.below("length law n(m*tpf+2) violations", bad, 0, true);
  const auto tpf = vq::vq_preset(pde::Family::advection, "paper").tokens_per_frame();
  const auto ctx = lm::lm_preset(pde::Family::advection, "paper", 256).max_context;
  const auto len = seq::sequence_length(6, 9, tpf);
  r.below("n=6, m=9 1D sequence fits the context", static_cast<double>(len), static_cast<double>(ctx), true,
          std::to_string(len) + " of " + std::to_string(ctx));
  r.expect("1D sequence n=6, m=9 is 1740 tokens", len == 1740);
  return r.finish();
}

CheckGroup transformer_invariants() {
  Recorder r("transformer");
  auto cfg = lm::lm_preset(pde::Family::advection, "desk", 256);
  cfg.max_context = 512;
  const lm::LmModel model(cfg);
  const auto V = static_cast<std::size_t>(cfg.vocab);
  num::Rng rng(11);
  std::vector<std::int32_t> ids;
  for (int i = 0; i < 120; ++i) ids.push_back(static_cast<std::int32_t>(rng.uniform_int(0, cfg.vocab - 1)));
  auto logits = [&](const std::vector<std::int32_t>& x) {
    num::NoGradGuard g;
    const auto t = model.forward(x, 1, static_cast<std::int64_t>(x.size()));
    return std::vector<float>(t.data().begin(), t.data().end());
  };
  const auto base = logits(ids);
  double worst = 0;
  for (std::size_t cut : {0u, 17u, 64u, 118u}) {
    auto changed = ids;
    for (std::size_t j = cut + 1; j < ids.size(); ++j) changed[j] = static_cast<std::int32_t>(rng.uniform_int(0, cfg.vocab - 1));
    const auto other = logits(changed);
    for (std::size_t i = 0; i < (cut + 1) * V; ++i) worst = std::max(worst, std::abs(double(base[i]) - other[i]));
  }
  r.below("causality perturbation", worst, 1e-6, true);

  lm::SampleOptions greedy;
  greedy.temperature = 0.0;
  const std::vector<std::int32_t> prompt(ids.begin(), ids.begin() + 20);
  num::Rng r1(1), r2(2);
  const auto cached = lm::generate_tokens(model, prompt, 64, greedy, r1);
  const auto uncached = lm::generate_tokens_uncached(model, prompt, 64, greedy, r2);
  r.expect("cached == uncached greedy decoding", cached == uncached);

  const seq::Vocabulary v{256};
  seq::TokenTrajectory t{0, 0, {}};
  for (int i = 0; i < 9 * 32; ++i) t.tokens.push_back(static_cast<std::int32_t>(rng.uniform_int(0, 255)));
  const auto s = seq::build_context_sequence({&t}, 0, 9, 32, v);
  const auto w = seq::pack_training_stream({s.ids}, 512, v).at(0);
  num::NoGradGuard g;
  const double loss = lm::lm_loss(model, {&w}).loss.item();
  r.below("|init loss - ln 264|", std::abs(loss - std::log(264.0)), 0.5, true, "loss " + std::to_string(loss));
  return r.finish();
}

const std::vector<SelftestEntry>& selftest_groups() {
  static const std::vector<SelftestEntry> groups = {
      {"gradients", gradient_oracles},
      {"solvers", solver_oracles},
      {"round-trips", round_trip_oracles},
      {"token-arithmetic", token_arithmetic},
      {"transformer", transformer_invariants},
  };
  return groups;
}

}  // namespace zebra::app
