#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "uvt/losses.hpp"
#include "uvt/nn.hpp"

using namespace uvt;

namespace {

// Independent softmax cross-entropy oracle used to freeze expected values.
double ce_oracle(const std::vector<std::vector<double>>& logits, const std::vector<int>& targets) {
  double total = 0;
  for (size_t r = 0; r < logits.size(); ++r) {
    double denom = 0;
    for (double v : logits[r]) denom += std::exp(v);
    total += -std::log(std::exp(logits[r][targets[r]]) / denom);
  }
  return total / logits.size();
}

}  // namespace

TEST_CASE("uniform logits give ln V") {
  Mat<double> logits = Mat<double>::Zero(1, 4);
  std::vector<bool> mask = {true};
  CHECK(language_loss<double>(logits, {2}, mask) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("a huge correct-class margin drives the loss to zero") {
  Mat<double> logits = Mat<double>::Zero(1, 4);
  logits(0, 1) = 60.0;
  std::vector<bool> mask = {true};
  CHECK(language_loss<double>(logits, {1}, mask) < 1e-9);
}

TEST_CASE("two-position case matches the softmax oracle") {
  Mat<double> logits(2, 2);
  logits << 1, 0, 0, 1;
  std::vector<bool> mask = {true, true};
  double expect = ce_oracle({{1, 0}, {0, 1}}, {0, 1});
  double got = language_loss<double>(logits, {0, 1}, mask);
  CHECK(got == doctest::Approx(expect).epsilon(1e-12));
  CHECK(got == doctest::Approx(-std::log(std::exp(1.0) / (std::exp(1.0) + 1.0))).epsilon(1e-9));
  CHECK(got == doctest::Approx(0.31326168751822286).epsilon(1e-9));
}

TEST_CASE("language loss rejects an all-false mask") {
  Mat<double> logits = Mat<double>::Zero(2, 4);
  std::vector<bool> mask = {false, false};
  CHECK_THROWS_AS(language_loss<double>(logits, {0, 1}, mask), std::invalid_argument);
}

TEST_CASE("masked-mean is permutation covariant") {
  Rng rng = make_rng(7);
  Mat<double> logits(5, 6);
  init_normal(logits, rng, 1.0);
  TokenSequence targets = {0, 3, 2, 5, 1};
  std::vector<bool> mask = {true, false, true, true, true};
  double base = language_loss<double>(logits, targets, mask);

  std::vector<int> perm = {4, 2, 0, 1, 3};
  Mat<double> plogits(5, 6);
  TokenSequence ptargets(5);
  std::vector<bool> pmask(5);
  for (int i = 0; i < 5; ++i) {
    plogits.row(i) = logits.row(perm[i]);
    ptargets[i] = targets[perm[i]];
    pmask[i] = mask[perm[i]];
  }
  CHECK(language_loss<double>(plogits, ptargets, pmask) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("language loss gradient matches finite differences") {
  Rng rng = make_rng(8);
  Mat<double> logits(3, 5);
  init_normal(logits, rng, 1.0);
  TokenSequence targets = {1, 4, 0};
  std::vector<bool> mask = {true, true, false};
  Mat<double> grad;
  language_loss<double>(logits, targets, mask, &grad);
  const double h = 1e-6;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 5; ++c) {
      Mat<double> lp = logits, lm = logits;
      lp(r, c) += h;
      lm(r, c) -= h;
      double fd = (language_loss<double>(lp, targets, mask) -
                   language_loss<double>(lm, targets, mask)) / (2 * h);
      CHECK(grad(r, c) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("cosine distance endpoint cases") {
  Mat<double> v(1, 3);
  v << 0.3, -1.2, 0.5;
  CHECK(cosine_distance<double>(v, v) == doctest::Approx(0.0).epsilon(1e-12));
  Mat<double> nv = -v;
  CHECK(cosine_distance<double>(v, nv) == doctest::Approx(2.0).epsilon(1e-12));
  Mat<double> a(1, 2), b(1, 2);
  a << 1, 0;
  b << 0, 1;
  CHECK(cosine_distance<double>(a, b) == doctest::Approx(1.0).epsilon(1e-12));
  Mat<double> z = Mat<double>::Zero(1, 2);
  CHECK_THROWS_AS(cosine_distance<double>(a, z), std::domain_error);
}

TEST_CASE("cosine distance ignores positive rescaling") {
  Rng rng = make_rng(3);
  for (int t = 0; t < 50; ++t) {
    Mat<double> a(1, 8), b(1, 8);
    init_normal(a, rng, 1.0);
    init_normal(b, rng, 1.0);
    double c = std::exp(rng_uniform(rng) * 4 - 2);
    Mat<double> ca = c * a, cb = c * b;
    CHECK(cosine_distance<double>(ca, cb) ==
          doctest::Approx(cosine_distance<double>(a, b)).epsilon(1e-9));
  }
}

TEST_CASE("smooth L1 values") {
  Mat<double> v(1, 4);
  v << 1, 2, 3, 4;
  CHECK(smooth_l1<double>(v, v) == doctest::Approx(0.0));
  Mat<double> a(1, 1), b(1, 1);
  a << 0.5;
  b << 0.0;
  CHECK(smooth_l1<double>(a, b) == doctest::Approx(0.125).epsilon(1e-12));
  a << 2.0;
  CHECK(smooth_l1<double>(a, b) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("subset sampler counts and bounds") {
  Rng rng = make_rng(5);
  auto all = sample_subset_C(16, 1.0, rng);
  CHECK(all.size() == 16);
  auto half = sample_subset_C(16, 0.5, rng);
  CHECK(half.size() == 8);
  std::set<int> distinct(half.begin(), half.end());
  CHECK(distinct.size() == 8);
  for (int i : half) {
    CHECK(i >= 0);
    CHECK(i < 16);
  }
  CHECK_THROWS_AS(sample_subset_C(16, 0.0, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_subset_C(16, 1.5, rng), std::invalid_argument);
}

TEST_CASE("subset sampler inclusion frequency is uniform (Monte Carlo)") {
  const int n = 16, draws = 100000;
  const double fraction = 0.5;
  Rng rng = make_rng(99);
  std::vector<int> hits(n, 0);
  for (int t = 0; t < draws; ++t)
    for (int i : sample_subset_C(n, fraction, rng)) hits[i] += 1;
  const double p = 0.5;
  const double sigma = std::sqrt(p * (1 - p) / draws);
  for (int i = 0; i < n; ++i) {
    double freq = static_cast<double>(hits[i]) / draws;
    CHECK(std::abs(freq - p) <= 3 * sigma + 1e-12);
  }
}

TEST_CASE("high-res token sampler") {
  Rng rng = make_rng(6);
  auto idx = sample_highres_tokens(256, 16, rng);
  CHECK(idx.size() == 16);
  std::set<int> distinct(idx.begin(), idx.end());
  CHECK(distinct.size() == 16);
  for (int i : idx) CHECK(i < 256);

  auto all = sample_highres_tokens(16, 16, rng);
  std::set<int> expect;
  for (int i = 0; i < 16; ++i) expect.insert(i);
  CHECK(std::set<int>(all.begin(), all.end()) == expect);

  CHECK_THROWS_AS(sample_highres_tokens(8, 16, rng), std::invalid_argument);
}

TEST_CASE("vision loss composite value") {
  Mat<double> s(1, 2), t(1, 2);
  s << 1, 0;
  t << 0, 1;
  // cos distance 1, smooth-l1 mean(0.5, 0.5) = 0.5, total 1 + 0.2*0.5 = 1.1
  CHECK(vision_loss<double>(s, t, 0.2) == doctest::Approx(1.1).epsilon(1e-12));
  CHECK(vision_loss<double>(s, s, 0.7) == doctest::Approx(0.0));
  CHECK(vision_loss<double>(s, t, 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(vision_loss<double>(Mat<double>(0, 2), Mat<double>(0, 2), 0.2),
                  std::invalid_argument);
}

TEST_CASE("vision loss decomposes into its sub-oracles") {
  Rng rng = make_rng(12);
  for (int t = 0; t < 20; ++t) {
    int rows = rng_int(rng, 1, 6), d = rng_int(rng, 2, 10);
    Mat<double> s(rows, d), tt(rows, d);
    init_normal(s, rng, 1.0);
    init_normal(tt, rng, 1.0);
    double mu = rng_uniform(rng);
    double mean_cos = 0, mean_l1 = 0;
    for (int r = 0; r < rows; ++r) {
      Mat<double> a = s.row(r), b = tt.row(r);
      mean_cos += cosine_distance<double>(a, b);
      mean_l1 += smooth_l1<double>(a, b);
    }
    mean_cos /= rows;
    mean_l1 /= rows;
    CHECK(vision_loss<double>(s, tt, mu) ==
          doctest::Approx(mean_cos + mu * mean_l1).epsilon(1e-12));
  }
}

TEST_CASE("vision loss gradient matches finite differences") {
  Rng rng = make_rng(21);
  Mat<double> s(3, 5), t(3, 5);
  init_normal(s, rng, 1.0);
  init_normal(t, rng, 1.0);
  Mat<double> grad;
  vision_loss<double>(s, t, 0.3, &grad);
  const double h = 1e-6;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 5; ++c) {
      Mat<double> sp = s, sm = s;
      sp(r, c) += h;
      sm(r, c) -= h;
      double fd = (vision_loss<double>(sp, t, 0.3) - vision_loss<double>(sm, t, 0.3)) / (2 * h);
      CHECK(grad(r, c) == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("total loss aggregation") {
  std::vector<SampleLoss> batch = {{1.0, 0.5, true}, {2.0, 0.0, false}};
  LossBreakdown b = total_loss(batch, 0.0);
  CHECK(b.total == doctest::Approx(1.5));

  LossBreakdown c = total_loss({{1.0, 0.5, true}}, 2.0);
  CHECK(c.total == doctest::Approx(2.0));
  CHECK(c.n_vis == 1);

  // all-document batch: vision term absent
  LossBreakdown d = total_loss({{0.7, 0.0, false}, {0.9, 0.0, false}}, 2.0);
  CHECK(d.total == doctest::Approx(0.8));
  CHECK(d.n_vis == 0);
  CHECK(d.l_vis == 0.0);
}
