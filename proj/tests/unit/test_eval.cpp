#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "zebra/eval/experiments.hpp"
#include "zebra/eval/metrics.hpp"
#include "zebra/num/rng.hpp"
#include "zebra/pde/solvers.hpp"

using namespace zebra;
using namespace zebra::eval;

namespace {

std::vector<float> random_field(std::size_t n, std::uint64_t seed) {
  num::Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

}  // namespace

TEST_CASE("relative l2") {
  const auto truth = random_field(500, 1);
  CHECK(relative_l2(truth, truth) == 0.0);
  std::vector<float> twice, zero(truth.size(), 0.0f);
  for (float x : truth) twice.push_back(2 * x);
  CHECK(relative_l2(twice, truth) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(relative_l2(zero, truth) == 1.0);
  num::Rng rng(2);
  for (int i = 0; i < 50; ++i) {
    const float c = static_cast<float>(rng.uniform(0.0, 3.0));
    std::vector<float> scaled;
    for (float x : truth) scaled.push_back(c * x);
    // float rounding of c * x bounds the agreement
    CHECK(std::abs(relative_l2(scaled, truth) - std::abs(c - 1.0)) < 1e-6);
  }
  CHECK_THROWS_AS(relative_l2(truth, zero), std::invalid_argument);
  CHECK_THROWS_AS(relative_l2(std::vector<float>(3, 1.0f), truth), std::invalid_argument);
}

TEST_CASE("uq statistics: degenerate and symmetric cases") {
  const auto truth = random_field(64, 3);
  std::vector<std::span<const float>> same(4, std::span<const float>(truth));
  auto st = uq_stats(same, truth);
  for (double s : st.std) CHECK(s == 0.0);
  CHECK(st.relative_std == 0.0);
  CHECK(st.confidence_level == 1.0);

  std::vector<float> up, down;
  for (float x : truth) up.push_back(x + 0.5f), down.push_back(x - 0.5f);
  st = uq_stats({up, down}, truth);
  for (std::size_t i = 0; i < truth.size(); ++i) CHECK(st.mean[i] == doctest::Approx(truth[i]).epsilon(1e-6));
  CHECK(st.confidence_level == 1.0);
  CHECK_THROWS_AS(uq_stats({up}, truth), std::invalid_argument);
}

TEST_CASE("uq statistics agree with a two-pass reference bit for bit") {
  const std::size_t S = 7, n = 300;
  std::vector<std::vector<float>> samples;
  for (std::size_t s = 0; s < S; ++s) samples.push_back(random_field(n, 10 + s));
  const auto truth = random_field(n, 99);
  const std::vector<std::span<const float>> views(samples.begin(), samples.end());
  const auto st = uq_stats(views, truth);
  for (std::size_t i = 0; i < n; ++i) {
    double m = 0;
    for (std::size_t s = 0; s < S; ++s) m += samples[s][i];
    m /= static_cast<double>(S);
    double v = 0;
    for (std::size_t s = 0; s < S; ++s) v += (samples[s][i] - m) * (samples[s][i] - m);
    CHECK(st.mean[i] == m);
    CHECK(st.std[i] == std::sqrt(v / static_cast<double>(S - 1)));
  }
  // Confidence is non-decreasing in the interval width.
  double last = 0;
  for (double w : {0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0}) {
    const double c = uq_stats(views, truth, w).confidence_level;
    CHECK(c >= last);
    last = c;
  }
}

TEST_CASE("uq confidence level matches the Gaussian 3-sigma mass") {
  // Samples and truth are independent draws from N(mu, 0.3^2) per point, so
  // truth - mean ~ N(0, 0.09 (1 + 1/S)) and coverage -> P(|Z| <= 3) = 0.99730.
  const std::size_t S = 10000, n = 3000;
  const auto mu = random_field(n, 5);
  std::vector<std::vector<float>> samples(S, std::vector<float>(n));
  num::Rng rng(6);
  for (auto& s : samples)
    for (std::size_t i = 0; i < n; ++i) s[i] = static_cast<float>(mu[i] + 0.3 * rng.normal());
  std::vector<float> truth(n);
  for (std::size_t i = 0; i < n; ++i) truth[i] = static_cast<float>(mu[i] + 0.3 * rng.normal());
  const std::vector<std::span<const float>> views(samples.begin(), samples.end());
  const auto st = uq_stats(views, truth);
  MESSAGE("confidence level " << st.confidence_level);
  CHECK(std::abs(st.confidence_level - 0.9973) < 0.002);
  for (std::size_t i = 0; i < n; i += 97) CHECK(std::abs(st.std[i] - 0.3) < 0.02);
}

TEST_CASE("fidelity and diversity") {
  auto profile = pde::make_profile(pde::Family::advection, "tiny");
  const auto env = pde::sample_environment(pde::Family::advection, 0, 1);
  const auto u0 = pde::sample_initial_condition(env, 42, profile);
  const auto sol = pde::solve(env, u0, profile);
  const std::int64_t frames = 9;
  const auto fs = profile.frame_size();
  std::vector<float> truth(sol.values.begin(), sol.values.begin() + fs * frames);

  const auto dup = fidelity_diversity({truth, truth, truth}, frames, env, profile);
  CHECK(dup.solved == 3);
  CHECK(dup.fidelity < 1e-6);
  CHECK(dup.diversity == 0.0);
  CHECK(dup.diversity_l2 == 0.0);

  const auto u1 = pde::sample_initial_condition(env, 43, profile);
  const auto sol1 = pde::solve(env, u1, profile);
  std::vector<float> other(sol1.values.begin(), sol1.values.begin() + fs * frames);
  const auto pair = fidelity_diversity({truth, other}, frames, env, profile);
  double d2 = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    d2 += (double(truth[i]) - other[i]) * (double(truth[i]) - other[i]);
    na += double(truth[i]) * truth[i];
    nb += double(other[i]) * other[i];
  }
  CHECK(pair.diversity_l2 == doctest::Approx(std::sqrt(d2)).epsilon(1e-12));
  CHECK(pair.diversity == doctest::Approx(std::sqrt(d2) / std::sqrt((na + nb) / 2)).epsilon(1e-12));

  auto broken = truth;
  broken[3] = std::numeric_limits<float>::quiet_NaN();
  const auto mixed = fidelity_diversity({truth, broken}, frames, env, profile);
  CHECK(mixed.solved == 1);
  CHECK(mixed.failed == 1);
  CHECK(std::isfinite(mixed.fidelity));
  CHECK_THROWS_AS(fidelity_diversity({truth}, profile.frames + 1, env, profile), std::invalid_argument);
}

TEST_CASE("power iteration against a dense eigensolver") {
  num::Rng rng(12);
  Eigen::MatrixXd A(10, 10);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) A(i, j) = rng.normal();
  const Eigen::MatrixXd C = A.transpose() * A / 9.0;
  std::vector<double> flat(100);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) flat[i * 10 + j] = C(i, j);
  const auto ours = top_eigenpairs(flat, 10, 2);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
  CHECK(std::abs(ours.values[0] - es.eigenvalues()(9)) < 1e-8);
  CHECK(std::abs(ours.values[1] - es.eigenvalues()(8)) < 1e-6);

  // pca2 of the rows of A recovers the same spectrum (covariance of centred rows).
  std::vector<std::vector<float>> rows(10, std::vector<float>(10));
  Eigen::MatrixXd X(10, 10);
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) X(i, j) = rows[i][j] = static_cast<float>(A(i, j));
  const Eigen::RowVectorXd mu = X.colwise().mean();
  const Eigen::MatrixXd Xc = X.rowwise() - mu;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es2(Xc.transpose() * Xc / 9.0);
  const std::vector<std::span<const float>> views(rows.begin(), rows.end());
  const auto p = pca2(views);
  CHECK(std::abs(p.eigenvalues[0] - es2.eigenvalues()(9)) < 1e-8);
}

TEST_CASE("pca of planar and collinear data") {
  num::Rng rng(14);
  const std::size_t D = 40;
  std::vector<double> e1(D), e2(D);
  for (auto& x : e1) x = rng.normal();
  for (auto& x : e2) x = rng.normal();
  std::vector<std::vector<float>> plane, line;
  std::vector<std::array<double, 2>> ab;
  for (int i = 0; i < 12; ++i) {
    const double a = rng.normal() * 3, b = rng.normal();
    ab.push_back({a, b});
    std::vector<float> p(D), l(D);
    for (std::size_t k = 0; k < D; ++k) {
      p[k] = static_cast<float>(a * e1[k] + b * e2[k] + 0.5);
      l[k] = static_cast<float>(a * e1[k] - 1.0);
    }
    plane.push_back(p);
    line.push_back(l);
  }
  const std::vector<std::span<const float>> pv(plane.begin(), plane.end()), lv(line.begin(), line.end());
  const auto pp = pca2(pv);
  double worst = 0;
  for (std::size_t i = 0; i < plane.size(); ++i)
    for (std::size_t j = i + 1; j < plane.size(); ++j) {
      double full = 0;
      for (std::size_t k = 0; k < D; ++k) full += (double(plane[i][k]) - plane[j][k]) * (double(plane[i][k]) - plane[j][k]);
      const double dx = pp.coords[i][0] - pp.coords[j][0], dy = pp.coords[i][1] - pp.coords[j][1];
      worst = std::max(worst, std::abs(std::sqrt(dx * dx + dy * dy) - std::sqrt(full)) / std::sqrt(full));
    }
  CHECK(worst < 1e-6);
  CHECK_FALSE(pp.rank_deficient);

  const auto lp = pca2(lv);
  CHECK(lp.rank_deficient);
  CHECK(lp.eigenvalues[1] == 0.0);
  for (const auto& c : lp.coords) CHECK(c[1] == 0.0);
  CHECK_THROWS_AS(pca2({pv[0], pv[1]}), std::invalid_argument);
}

TEST_CASE("experiments on a tiny pipeline") {
  const auto dir = std::filesystem::temp_directory_path() / "zebra_eval_tiny";
  std::filesystem::remove_all(dir);
  auto profile = pde::make_profile(pde::Family::advection, "tiny");
  pde::generate_dataset(pde::Family::advection, profile, 5, dir / "data");
  const auto data = pde::Dataset::open(dir / "data");
  auto vq_cfg = vq::vq_preset(pde::Family::advection, "tiny");
  auto tok = std::make_shared<vq::Tokenizer>(vq::VqModel(vq_cfg), data.norm_scale());
  auto lm_cfg = lm::lm_preset(pde::Family::advection, "tiny", vq_cfg.codebook_size);
  const infer::Engine engine(tok, std::make_shared<lm::LmModel>(lm_cfg));
  const TestSet test(data, infer::tokenize_split(*tok, data, data.test()));
  REQUIRE(test.envs().size() == 2);

  EvalSettings s;
  s.temperature = 0.0;
  s.window = 5;
  const auto shot = compare_zero_one_shot(engine, test, s);
  CHECK(shot.rows.size() == 2);
  for (const auto& r : shot.rows) {
    CHECK(r.adaptive >= 0);
    CHECK(r.temporal >= 0);
    CHECK(r.target != r.context);
  }
  const auto shot2 = compare_zero_one_shot(engine, test, s);
  CHECK(shot2.mean_adaptive == shot.mean_adaptive);

  // Three test trajectories per env host n <= 2 only.
  const auto sweep = context_sweep(engine, test, {1, 2, 3}, {0, 1}, s);
  CHECK(sweep.skipped == 4);
  CHECK(sweep.count_by_n[0] == 4);
  CHECK(sweep.count_by_n[1] == 4);
  CHECK(sweep.count_by_n[2] == 0);
  for (const auto& r : sweep.rows) CHECK(r.rel_l2 >= 0);
  const auto again = context_sweep(engine, test, {1, 2, 3}, {0, 1}, s);
  CHECK(again.mean_by_n[1] == sweep.mean_by_n[1]);

  const auto uq = uq_experiment(engine, test, {0.1, 1.0}, 3, s);
  CHECK(uq.rows.size() == 4);
  for (const auto& r : uq.rows) {
    CHECK(r.confidence_level >= 0);
    CHECK(r.confidence_level <= 1);
    CHECK(r.relative_std >= 0);
  }

  const auto gen = analyze_generation(engine, test, 4, 1.0, s);
  CHECK(gen.rows.size() == 2);
  CHECK(gen.finite_fraction > 0.0);
  CHECK(gen.diversity > 0.0);
  CHECK(gen.pca_coords.size() == 4 + 3);

  sweep.write_csv(dir / "sweep.csv");
  std::ifstream in(dir / "sweep.csv");
  std::string header;
  std::getline(in, header);
  CHECK(header == "seed,n,env,target,rel_l2");
  std::filesystem::remove_all(dir);
}
