#include <algorithm>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "zebra/num/gradcheck.hpp"
#include "zebra/num/ops.hpp"
#include "zebra/num/optim.hpp"
#include "zebra/num/rng.hpp"

using namespace zebra::num;

namespace {

constexpr double kGradTol = 1e-4;

void expect_grad(const ScalarFn& f, const std::vector<Tensor64>& in) {
  auto r = check_gradients(f, in);
  INFO("input " << r.worst_input << " index " << r.worst_index << " analytic " << r.analytic
                << " numeric " << r.numeric);
  CHECK(r.max_rel_err < kGradTol);
}

std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace

TEST_CASE("elementwise basics") {
  Tensor a({2}, {1, 2}), b({2}, {3, 4});
  CHECK(values(add(a, b)) == std::vector<double>{4, 6});
  Tensor eye({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor m({3, 2}, {1, 2, 3, 4, 5, 6});
  CHECK(values(matmul(eye, m)) == values(m));
  Tensor c({3}, {2.5f, 2.5f, 2.5f});
  auto n = rms_norm(c, Tensor::full({3}, 1.0f), 0.0f);
  for (float v : n.data()) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("broadcast mismatch names both shapes") {
  Tensor a({2, 3}), b({2});
  try {
    add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("[2,3]") != std::string::npos);
    CHECK(std::string(e.what()).find("[2]") != std::string::npos);
  }
}

TEST_CASE("conv identities and errors") {
  Tensor x({1, 1, 4}, {1, 2, 3, 4});
  Tensor w({1, 1, 3}, {0, 1, 0});
  CHECK(values(conv1d(x, w, 1, 1)) == values(x));
  auto zero = conv1d(Tensor({2, 3, 8}), Tensor({4, 3, 4}, std::vector<float>(48, 0.3f)), 2, 1);
  for (float v : zero.data()) CHECK(v == 0.0f);
  CHECK_THROWS_AS(conv1d(Tensor({1, 1, 2}), Tensor({1, 1, 4}), 1, 0), ShapeError);

  Tensor x2({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor w2({1, 1, 3, 3}, {0, 0, 0, 0, 1, 0, 0, 0, 0});
  CHECK(values(conv2d(x2, w2, 1, 1)) == values(x2));
  auto z2 = conv2d(Tensor({1, 2, 4, 4}), Tensor({3, 2, 3, 3}, std::vector<float>(54, 1.0f)), 1, 1);
  for (float v : z2.data()) CHECK(v == 0.0f);
}

TEST_CASE("softmax values") {
  auto s = softmax(Tensor64({2}, {1, 1}), 0);
  CHECK(s.data()[0] == doctest::Approx(0.5));
  auto t = softmax(Tensor64({2}, {0, std::log(3.0)}), 0);
  CHECK(t.data()[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(t.data()[1] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(softmax(Tensor64({1}, std::vector<double>{-3.7}), 0).item() == 1.0);
  CHECK_THROWS_AS(softmax(Tensor64({2}, {0, std::nan("")}), 0), NumericError);

  auto x = random_tensor({5, 7}, 3, 4.0);
  auto y = softmax(x, 1);
  auto shifted = softmax(add(x, Tensor64::scalar(12.5)), 1);
  for (int r = 0; r < 5; ++r) {
    double total = 0;
    for (int c = 0; c < 7; ++c) {
      total += y.data()[r * 7 + c];
      CHECK(std::abs(y.data()[r * 7 + c] - shifted.data()[r * 7 + c]) < 1e-12);
    }
    CHECK(std::abs(total - 1.0) < 1e-6);
  }
}

TEST_CASE("cross entropy values") {
  const int v = 264;
  std::vector<std::int32_t> tgt{5, 17, 263};
  auto uniform = cross_entropy(Tensor64({3, v}), tgt);
  CHECK(uniform.item() == doctest::Approx(std::log(264.0)).epsilon(1e-12));

  Tensor64 sat({3, v});
  for (int r = 0; r < 3; ++r) sat.data()[r * v + tgt[r]] = 30.0;
  CHECK(cross_entropy(sat, tgt).item() < 1e-9);

  auto logits = random_tensor({3, v}, 5);
  std::vector<std::uint8_t> mask{0, 1, 0};
  auto one = cross_entropy(slice(logits, 0, 1, 1), std::vector<std::int32_t>{17});
  CHECK(cross_entropy(logits, tgt, mask).item() == doctest::Approx(one.item()).epsilon(1e-12));
  std::vector<std::uint8_t> none{0, 0, 0};
  CHECK_THROWS_AS(cross_entropy(logits, tgt, none), ShapeError);
  CHECK_THROWS_AS(cross_entropy(logits, std::vector<std::int32_t>{0, 1, 264}), ShapeError);
}

TEST_CASE("backward basics") {
  Tensor64 x({4}, {1, -2, 3, 0.5}, true);
  auto loss = sum(x);
  backward(loss);
  for (double g : x.grad()) CHECK(g == 1.0);
  CHECK_THROWS_AS(backward(loss), GraphError);

  Tensor64 y({3}, {1, -2, 3}, true);
  backward(sum(mul(y, y)));
  for (int i = 0; i < 3; ++i) CHECK(y.grad()[i] == 2 * y.data()[i]);
}

TEST_CASE("op gradients match finite differences") {
  const std::vector<Shape> shapes{{3}, {2, 5}, {2, 3, 4}};
  std::uint64_t seed = 10;
  for (const auto& s : shapes) {
    auto a = random_tensor(s, ++seed), b = random_tensor(s, ++seed);
    Shape suffix(s.end() - 1, s.end());
    auto c = random_tensor(suffix, ++seed);
    expect_grad([](auto& in) { return probe(add(in[0], in[1])); }, {a, c});
    expect_grad([](auto& in) { return probe(sub(in[0], in[1])); }, {a, b});
    expect_grad([](auto& in) { return probe(mul(in[0], in[1])); }, {a, c});
    expect_grad([](auto& in) { return probe(mul(in[0], in[0])); }, {a});
    expect_grad([](auto& in) { return probe(scale(in[0], 0.7)); }, {a});
    expect_grad([](auto& in) { return probe(silu(in[0])); }, {a});
    expect_grad([](auto& in) { return probe(gelu(in[0])); }, {a});
    expect_grad([](auto& in) { return probe(softmax(in[0], -1)); }, {a});
    expect_grad([](auto& in) { return probe(softmax(in[0], 0)); }, {a});
    expect_grad([](auto& in) { return probe(rms_norm(in[0], in[1])); }, {a, c});
    expect_grad([](auto& in) { return probe(reshape(in[0], {-1})); }, {a});
    expect_grad([](auto& in) { return probe(row_norm(in[0])); }, {a});
    expect_grad([](auto& in) { return mean(mul(in[0], in[0])); }, {a});
    auto w = random_tensor({s.back(), 3}, ++seed);
    expect_grad([](auto& in) { return probe(matmul(in[0], in[1])); }, {a, w});
    if (s.size() >= 2) {
      expect_grad([](auto& in) { return probe(transpose(in[0])); }, {a});
      expect_grad([](auto& in) { return probe(slice(in[0], 1, 1, in[0].dim(1) - 1)); }, {a});
      expect_grad([](auto& in) { return probe(concat<double>({in[0], in[1], in[0]}, 1)); }, {a, b});
    }
  }
}

TEST_CASE("embedding, cross entropy and straight-through gradients") {
  for (int trial = 0; trial < 3; ++trial) {
    auto table = random_tensor({7, 3 + trial}, 40 + trial);
    std::vector<std::int32_t> ids{0, 3, 3, 6, 1};
    expect_grad([&](auto& in) { return probe(embedding(in[0], ids, {5})); }, {table});
    auto logits = random_tensor({4, 6 + trial}, 50 + trial);
    std::vector<std::int32_t> tgt{1, 0, 5, 2};
    std::vector<std::uint8_t> mask{1, 0, 1, 1};
    expect_grad([&](auto& in) { return cross_entropy(in[0], tgt, mask); }, {logits});
    // The forward value ignores z, so finite differences see nothing; the
    // estimator must pass the upstream gradient through unchanged.
    auto z = random_tensor({2, 3 + trial}, 60 + trial);
    auto q = random_tensor({2, 3 + trial}, 70 + trial);
    z.set_requires_grad(true);
    auto st = straight_through(z, q);
    CHECK(std::equal(st.data().begin(), st.data().end(), q.data().begin()));
    backward(probe(st, 7));
    auto w = random_tensor(z.shape(), 7);
    CHECK(std::equal(z.grad().begin(), z.grad().end(), w.data().begin()));
  }
}

TEST_CASE("conv gradients") {
  struct C1 { Shape x, w; int stride, pad; };
  for (auto c : {C1{{2, 3, 8}, {4, 3, 3}, 1, 1}, C1{{1, 2, 8}, {3, 2, 4}, 2, 1}, C1{{2, 1, 5}, {2, 1, 3}, 1, 0}}) {
    auto x = random_tensor(c.x, 80), w = random_tensor(c.w, 81);
    expect_grad([&](auto& in) { return probe(conv1d(in[0], in[1], c.stride, c.pad)); }, {x, w});
  }
  struct C2 { Shape x, w; int stride, pad; };
  for (auto c : {C2{{1, 2, 6, 6}, {3, 2, 3, 3}, 1, 1}, C2{{2, 1, 8, 8}, {2, 1, 4, 4}, 2, 1}, C2{{1, 3, 5, 4}, {2, 3, 3, 3}, 1, 0}}) {
    auto x = random_tensor(c.x, 82), w = random_tensor(c.w, 83);
    expect_grad([&](auto& in) { return probe(conv2d(in[0], in[1], c.stride, c.pad)); }, {x, w});
  }
  for (Shape s : {Shape{2, 3, 4}, Shape{1, 2, 3, 3}, Shape{2, 2, 1, 5}}) {
    auto x = random_tensor(s, 84), b = random_tensor({s[1]}, 85);
    expect_grad([](auto& in) { return probe(channel_bias(in[0], in[1])); }, {x, b});
    expect_grad([](auto& in) { return probe(upsample2x(in[0])); }, {x});
  }
}

TEST_CASE("rope and attention gradients") {
  struct A { std::int64_t b, t, h, d; };
  for (auto a : {A{1, 5, 2, 4}, A{2, 3, 1, 6}, A{1, 7, 3, 2}}) {
    auto x = random_tensor({a.b, a.t, a.h, a.d}, 90);
    expect_grad([](auto& in) { return probe(rope(in[0], 3, 10000.0)); }, {x});
    auto q = random_tensor({a.b, a.t, a.h, a.d}, 91), k = random_tensor({a.b, a.t, a.h, a.d}, 92),
         v = random_tensor({a.b, a.t, a.h, a.d}, 93);
    expect_grad([](auto& in) { return probe(causal_attention(in[0], in[1], in[2])); }, {q, k, v});
    std::vector<std::int32_t> seg;
    for (std::int64_t b = 0; b < a.b; ++b)
      for (std::int64_t t = 0; t < a.t; ++t) seg.push_back(t < a.t / 2 ? 0 : 1);
    expect_grad([&](auto& in) { return probe(causal_attention(in[0], in[1], in[2], 0, seg)); }, {q, k, v});
    auto q2 = random_tensor({a.b, 2, a.h, a.d}, 94);
    expect_grad([&](auto& in) { return probe(causal_attention(in[0], in[1], in[2], a.t - 2)); }, {q2, k, v});
  }
}

TEST_CASE("blocked attention matches a dense reference across blocks and segments") {
  // Reference for one head: softmax(q k^T / sqrt(d) + mask) v from basic ops.
  const std::int64_t T = 300, D = 4;
  auto reference = [&](const Tensor64& q, const Tensor64& k, const Tensor64& v, std::int64_t off,
                       const std::vector<std::int32_t>& seg) {
    const std::int64_t tq = q.dim(1);
    auto s = scale(matmul(reshape(q, {tq, D}), transpose(reshape(k, {T, D}))), 1.0 / std::sqrt(double(D)));
    std::vector<double> mask(static_cast<std::size_t>(tq * T), 0.0);
    for (std::int64_t i = 0; i < tq; ++i)
      for (std::int64_t j = 0; j < T; ++j)
        if (j > off + i || (!seg.empty() && seg[j] != seg[off + i])) mask[i * T + j] = -1e300;
    auto p = softmax(add(s, Tensor64({tq, T}, mask)), -1);
    return reshape(matmul(p, reshape(v, {T, D})), {1, tq, 1, D});
  };
  std::vector<std::int32_t> packed, scattered;
  for (std::int64_t t = 0; t < T; ++t) packed.push_back(t < 70 ? 0 : t < 200 ? 1 : t < 201 ? 2 : 3);
  Rng rng(5);
  for (std::int64_t t = 0; t < T; ++t) scattered.push_back(static_cast<std::int32_t>(rng.uniform_int(0, 2)));
  scattered[0] = 0;
  for (const auto& sg : {std::vector<std::int32_t>{}, packed, scattered}) {
    for (std::int64_t off : {std::int64_t{0}, std::int64_t{140}}) {
      auto q = random_tensor({1, T - off, 1, D}, 200), k = random_tensor({1, T, 1, D}, 201),
           v = random_tensor({1, T, 1, D}, 202);
      for (auto* t : {&q, &k, &v}) t->set_requires_grad(true);
      auto w = random_tensor({1, T - off, 1, D}, 203);
      auto fast = sum(mul(causal_attention(q, k, v, off, sg), w));
      backward(fast);
      std::vector<std::vector<double>> g1;
      for (auto* t : {&q, &k, &v}) g1.emplace_back(t->grad().begin(), t->grad().end()), t->zero_grad();
      auto slow = sum(mul(reference(q, k, v, off, sg), w));
      backward(slow);
      CHECK(std::abs(fast.item() - slow.item()) < 1e-10);
      double worst = 0;
      int idx = 0;
      for (auto* t : {&q, &k, &v}) {
        for (std::size_t i = 0; i < g1[idx].size(); ++i) worst = std::max(worst, std::abs(g1[idx][i] - t->grad()[i]));
        ++idx;
      }
      CHECK(worst < 1e-10);
    }
  }
}

TEST_CASE("composite conv -> norm -> softmax -> cross entropy graph") {
  auto x = random_tensor({2, 3, 8}, 100);
  auto w = random_tensor({5, 3, 3}, 101, 0.5);
  auto g = random_tensor({8}, 102);
  auto r = check_gradients(
      [](auto& in) {
        auto h = conv1d(in[0], in[1], 1, 1);
        h = rms_norm(h, in[2]);
        auto p = softmax(h, -1);
        return cross_entropy(reshape(p, {10, 8}), std::vector<std::int32_t>{0, 1, 2, 3, 4, 5, 6, 7, 0, 1});
      },
      {x, w, g});
  CHECK(r.max_rel_err < kGradTol);
}

TEST_CASE("adam") {
  Tensor p({3}, {1, -2, 3}, true);
  AdamConfig cfg{.lr = 0.1, .weight_decay = 0.0};
  Adam opt({p}, cfg);
  p.mutable_grad();
  opt.step(0.1);
  CHECK(values(p) == std::vector<double>{1, -2, 3});

  Tensor q({2}, {1, 1}, true);
  Adam opt2({q}, cfg);
  auto gq = q.mutable_grad();
  gq[0] = 3.0f;
  gq[1] = -0.5f;
  opt2.step(0.1);
  CHECK(q.data()[0] == doctest::Approx(0.9).epsilon(1e-6));
  CHECK(q.data()[1] == doctest::Approx(1.1).epsilon(1e-6));

  Tensor x({1}, {1}, true);
  Adam opt3({x}, cfg);
  for (int i = 0; i < 100; ++i) {
    opt3.zero_grad();
    backward(sum(mul(x, x)));
    opt3.step(0.01);
  }
  CHECK(std::abs(x.data()[0]) < 1.0f);

  Tensor bad({1}, {1}, true);
  Adam opt4({bad}, cfg);
  bad.mutable_grad()[0] = std::nanf("");
  CHECK_FALSE(opt4.step(0.1));
  CHECK(bad.data()[0] == 1.0f);
  CHECK(opt4.skipped() == 1);
}

TEST_CASE("adam is bitwise deterministic") {
  auto run = [] {
    Rng rng(5);
    Tensor p({16});
    for (auto& v : p.data()) v = static_cast<float>(rng.normal());
    p.set_requires_grad(true);
    Adam opt({p}, {});
    for (int s = 0; s < 20; ++s) {
      opt.zero_grad();
      backward(sum(mul(p, p)));
      opt.step(1e-3);
    }
    return values(p);
  };
  CHECK(run() == run());
}

TEST_CASE("cosine schedule") {
  CHECK(cosine_lr(100, 1000, 1e-3, 100) == doctest::Approx(1e-3));
  CHECK(cosine_lr(1000, 1000, 1e-3, 100) == doctest::Approx(0.0));
  CHECK(cosine_lr(550, 1000, 1e-3, 100) == doctest::Approx(5e-4));
  CHECK(cosine_lr(50, 1000, 1e-3, 100) == doctest::Approx(5e-4));
  CHECK_THROWS(cosine_lr(0, 0, 1e-3, 0));
  for (int s = 0; s <= 1000; s += 7) CHECK(cosine_lr(s, 1000, 1e-3, 100) >= 0.0);
  CHECK(default_warmup(100000) == 1000);
  CHECK(default_warmup(5000) == 100);
  CHECK(default_warmup(300) == 30);
}
