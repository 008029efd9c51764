#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "prunekit/ops.hpp"
#include "prunekit/tensor.hpp"
#include "support/oracles.hpp"

using namespace prunekit;

TEST_CASE("conv2d sums a field of ones") {
  auto x = make_tensor({1, 1, 3, 3}, 1.0f);
  auto w = make_tensor({1, 1, 3, 3}, 1.0f);
  auto y = conv2d(nullptr, x, w, nullptr, 1, 0);
  REQUIRE(y->shape == std::vector<int>({1, 1, 1, 1}));
  CHECK(y->data[0] == doctest::Approx(9.0f));
}

TEST_CASE("conv2d 1x1 identity kernel passes the input through") {
  std::mt19937 eng(7);
  auto x = make_tensor({2, 1, 4, 4}, oracle::uniform_values(32, eng));
  auto w = make_tensor({1, 1, 1, 1}, {1.0f});
  auto y = conv2d(nullptr, x, w, nullptr, 1, 0);
  REQUIRE(y->shape == std::vector<int>({2, 1, 4, 4}));
  for (std::size_t i = 0; i < x->data.size(); ++i) CHECK(y->data[i] == x->data[i]);
}

TEST_CASE("conv2d matches the scalar loop reference") {
  std::mt19937 eng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const int stride = 1 + trial % 2;
    const int pad = trial % 2;
    auto x = make_tensor({2, 3, 8, 8}, oracle::uniform_values(2 * 3 * 8 * 8, eng));
    auto w = make_tensor({4, 3, 3, 3}, oracle::uniform_values(4 * 3 * 3 * 3, eng));
    auto b = make_tensor({4}, oracle::uniform_values(4, eng));
    auto y = conv2d(nullptr, x, w, b, stride, pad);
    auto ref = oracle::conv2d_loop(x->data, 2, 3, 8, 8, w->data, 4, 3, 3, &b->data, stride, pad);
    REQUIRE(y->data.size() == ref.size());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      CHECK(std::abs(y->data[i] - ref[i]) <= 1e-5 * std::max(1.0, std::abs(ref[i])));
    }
  }
}

TEST_CASE("conv2d accepts unbatched [C,H,W] input") {
  auto x = make_tensor({1, 3, 3}, 1.0f);
  auto w = make_tensor({2, 1, 3, 3}, 0.5f);
  auto y = conv2d(nullptr, x, w, nullptr, 1, 0);
  REQUIRE(y->shape == std::vector<int>({2, 1, 1}));
  CHECK(y->data[0] == doctest::Approx(4.5f));
}

TEST_CASE("conv2d rejects channel mismatch with a message naming the axes") {
  auto x = make_tensor({1, 5, 4, 4}, 1.0f);
  auto w = make_tensor({2, 3, 3, 3}, 1.0f);
  CHECK_THROWS_WITH_AS(conv2d(nullptr, x, w, nullptr, 1, 0),
                       doctest::Contains("input channel axis (5)"), ShapeError);
}

TEST_CASE("conv2d is linear in its input") {
  std::mt19937 eng(13);
  auto z1 = make_tensor({1, 2, 6, 6}, oracle::uniform_values(72, eng));
  auto z2 = make_tensor({1, 2, 6, 6}, oracle::uniform_values(72, eng));
  auto w = make_tensor({3, 2, 3, 3}, oracle::uniform_values(54, eng));
  const float a = 0.7f, b = -1.3f;
  auto mix = make_tensor({1, 2, 6, 6});
  for (std::size_t i = 0; i < mix->data.size(); ++i) {
    mix->data[i] = a * z1->data[i] + b * z2->data[i];
  }
  auto y_mix = conv2d(nullptr, mix, w, nullptr, 1, 1);
  auto y1 = conv2d(nullptr, z1, w, nullptr, 1, 1);
  auto y2 = conv2d(nullptr, z2, w, nullptr, 1, 1);
  for (std::size_t i = 0; i < y_mix->data.size(); ++i) {
    CHECK(std::abs(y_mix->data[i] - (a * y1->data[i] + b * y2->data[i])) <= 1e-5);
  }
}

TEST_CASE("conv output factorizes into per-channel partial convolutions") {
  std::mt19937 eng(17);
  const int c_in = 4;
  auto x = make_tensor({2, c_in, 5, 5}, oracle::uniform_values(2 * c_in * 25, eng));
  auto w = make_tensor({3, c_in, 3, 3}, oracle::uniform_values(3 * c_in * 9, eng));
  auto y = conv2d(nullptr, x, w, nullptr, 1, 1);

  std::vector<double> sum(y->data.size(), 0.0);
  for (int c = 0; c < c_in; ++c) {
    auto xc = make_tensor({2, 1, 5, 5});
    for (int n = 0; n < 2; ++n) {
      std::copy_n(x->data.begin() + (n * c_in + c) * 25, 25, xc->data.begin() + n * 25);
    }
    auto wc = make_tensor({3, 1, 3, 3});
    for (int o = 0; o < 3; ++o) {
      std::copy_n(w->data.begin() + (o * c_in + c) * 9, 9, wc->data.begin() + o * 9);
    }
    auto yc = conv2d(nullptr, xc, wc, nullptr, 1, 1);
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] += yc->data[i];
  }
  for (std::size_t i = 0; i < sum.size(); ++i) {
    CHECK(std::abs(y->data[i] - sum[i]) <= 1e-5 * std::max(1.0, std::abs(sum[i])));
  }
}

TEST_CASE("unfold_weight k=1 degenerates to the weight matrix") {
  auto w = make_tensor({2, 3, 1, 1}, {1, 2, 3, 4, 5, 6});
  auto u = unfold_weight(w);
  REQUIRE(u->shape == std::vector<int>({2, 3}));
  for (int o = 0; o < 2; ++o)
    for (int c = 0; c < 3; ++c) CHECK(u->data[o * 3 + c] == w->data[(o * 3 + c)]);
}

TEST_CASE("fold(unfold(w)) restores the weight elementwise") {
  std::mt19937 eng(23);
  auto w = make_tensor({4, 3, 3, 3}, oracle::uniform_values(4 * 3 * 9, eng));
  auto u = unfold_weight(w);
  REQUIRE(u->shape == std::vector<int>({4, 27}));
  auto back = fold_weight(u, 3, 3);
  REQUIRE(back->shape == w->shape);
  CHECK(back->data == w->data);
}

TEST_CASE("unfold channel blocks carry the channel slice norms") {
  std::mt19937 eng(29);
  auto w = make_tensor({4, 3, 3, 3}, oracle::uniform_values(4 * 3 * 9, eng));
  auto u = unfold_weight(w);
  for (int c = 0; c < 3; ++c) {
    double acc = 0.0;
    for (int o = 0; o < 4; ++o)
      for (int j = 0; j < 9; ++j) {
        const double v = u->data[o * 27 + c * 9 + j];
        acc += v * v;
      }
    CHECK(std::sqrt(acc) ==
          doctest::Approx(oracle::channel_slice_norm(w->data, 4, 3, 3, 3, c)).epsilon(1e-6));
  }
}

TEST_CASE("unfold_weight rejects non-4-d input") {
  auto w = make_tensor({4, 27});
  CHECK_THROWS_AS(unfold_weight(w), ShapeError);
}

TEST_CASE("batchnorm identity when input is already normalized") {
  // Per channel: half the entries +1, half -1 -> mean 0, biased variance 1.
  const int n = 2, c = 3, hw = 4;
  auto x = make_tensor({n, c, 2, 2});
  for (int i = 0; i < n * c * hw; ++i) x->data[i] = (i % 2 == 0) ? 1.0f : -1.0f;
  auto gamma = make_tensor({c}, 1.0f);
  auto beta = make_tensor({c}, 0.0f);
  auto y = batchnorm2d(nullptr, x, gamma, beta, nullptr, nullptr, true, 1e-12f);
  for (std::size_t i = 0; i < x->data.size(); ++i) {
    CHECK(y->data[i] == doctest::Approx(x->data[i]).epsilon(1e-4));
  }
}

TEST_CASE("batchnorm channel with gamma=beta=0 is exactly zero") {
  std::mt19937 eng(31);
  auto x = make_tensor({2, 3, 4, 4}, oracle::uniform_values(96, eng));
  auto gamma = make_tensor({3}, {0.5f, 0.0f, 1.5f});
  auto beta = make_tensor({3}, {0.1f, 0.0f, -0.2f});
  auto y = batchnorm2d(nullptr, x, gamma, beta, nullptr, nullptr, true);
  for (int n = 0; n < 2; ++n)
    for (int s = 0; s < 16; ++s) CHECK(y->data[(n * 3 + 1) * 16 + s] == 0.0f);
}

TEST_CASE("batchnorm normalizes batch moments in train mode") {
  std::mt19937 eng(37);
  std::normal_distribution<float> dist(0.7f, 2.3f);
  auto x = make_tensor({4, 2, 6, 6});
  for (auto& v : x->data) v = dist(eng);
  auto gamma = make_tensor({2}, 1.0f);
  auto beta = make_tensor({2}, 0.0f);
  auto y = batchnorm2d(nullptr, x, gamma, beta, nullptr, nullptr, true);
  const int m = 4 * 36;
  for (int c = 0; c < 2; ++c) {
    double mean = 0.0, var = 0.0;
    for (int n = 0; n < 4; ++n)
      for (int s = 0; s < 36; ++s) mean += y->data[(n * 2 + c) * 36 + s];
    mean /= m;
    for (int n = 0; n < 4; ++n)
      for (int s = 0; s < 36; ++s) {
        const double d = y->data[(n * 2 + c) * 36 + s] - mean;
        var += d * d;
      }
    var /= m;
    CHECK(std::abs(mean) <= 1e-4);
    CHECK(std::abs(var - 1.0) <= 1e-4);
  }
}

TEST_CASE("batchnorm updates running stats and uses them in eval mode") {
  auto x = make_tensor({2, 1, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  auto gamma = make_tensor({1}, 1.0f);
  auto beta = make_tensor({1}, 0.0f);
  auto rm = make_tensor({1}, 0.0f);
  auto rv = make_tensor({1}, 1.0f);
  batchnorm2d(nullptr, x, gamma, beta, rm, rv, true, 1e-5f, 0.1f);
  // batch mean 4.5, biased var 5.25, unbiased 6.0
  CHECK(rm->data[0] == doctest::Approx(0.45f));
  CHECK(rv->data[0] == doctest::Approx(1.0f * 0.9f + 0.6f));

  auto y = batchnorm2d(nullptr, x, gamma, beta, rm, rv, false, 1e-5f);
  const float expect = (1.0f - rm->data[0]) / std::sqrt(rv->data[0] + 1e-5f);
  CHECK(y->data[0] == doctest::Approx(expect));
}

TEST_CASE("batchnorm rejects a zero-size batch in train mode") {
  auto x = make_tensor({0, 3, 4, 4});
  auto gamma = make_tensor({3}, 1.0f);
  auto beta = make_tensor({3}, 0.0f);
  CHECK_THROWS_AS(batchnorm2d(nullptr, x, gamma, beta, nullptr, nullptr, true), Error);
}

TEST_CASE("relu definition") {
  auto x = make_tensor({2}, {-1.5f, 2.0f});
  auto y = relu(nullptr, x);
  CHECK(y->data[0] == 0.0f);
  CHECK(y->data[1] == 2.0f);
}

TEST_CASE("maxpool picks the window maximum") {
  auto x = make_tensor({1, 1, 2, 2}, {1, 2, 3, 4});
  auto y = maxpool2d(nullptr, x, 2, 2);
  REQUIRE(y->numel() == 1);
  CHECK(y->data[0] == 4.0f);
}

TEST_CASE("uniform logits give ln(K) cross-entropy") {
  for (int k : {2, 10, 17}) {
    auto logits = make_tensor({3, k}, 0.42f);
    auto loss = softmax_cross_entropy(nullptr, logits, {0, k / 2, k - 1});
    CHECK(loss->data[0] == doctest::Approx(std::log(static_cast<float>(k))).epsilon(1e-6));
  }
}

TEST_CASE("zero inputs stay exactly zero through relu, maxpool and gated BN") {
  auto x = make_tensor({1, 2, 4, 4}, 0.0f);
  auto r = relu(nullptr, x);
  for (float v : r->data) CHECK(v == 0.0f);
  auto p = maxpool2d(nullptr, x, 2, 2);
  for (float v : p->data) CHECK(v == 0.0f);
  auto gamma = make_tensor({2}, 0.0f);
  auto beta = make_tensor({2}, 0.0f);
  std::mt19937 eng(41);
  auto xr = make_tensor({1, 2, 4, 4}, oracle::uniform_values(32, eng));
  auto y = batchnorm2d(nullptr, xr, gamma, beta, nullptr, nullptr, true);
  for (float v : y->data) CHECK(v == 0.0f);
}

TEST_CASE("linear matches a scalar loop") {
  std::mt19937 eng(43);
  auto x = make_tensor({3, 5}, oracle::uniform_values(15, eng));
  auto w = make_tensor({4, 5}, oracle::uniform_values(20, eng));
  auto b = make_tensor({4}, oracle::uniform_values(4, eng));
  auto y = linear(nullptr, x, w, b);
  for (int n = 0; n < 3; ++n)
    for (int k = 0; k < 4; ++k) {
      double acc = b->data[k];
      for (int c = 0; c < 5; ++c) acc += double(x->data[n * 5 + c]) * w->data[k * 5 + c];
      CHECK(y->data[n * 4 + k] == doctest::Approx(acc).epsilon(1e-5));
    }
}

TEST_CASE("channel_gather keeps the listed channels in order") {
  auto x = make_tensor({1, 3, 1, 2}, {0, 1, 10, 11, 20, 21});
  auto y = channel_gather(nullptr, x, {0, 2});
  REQUIRE(y->shape == std::vector<int>({1, 2, 1, 2}));
  CHECK(y->data == std::vector<float>({0, 1, 20, 21}));
  CHECK_THROWS_AS(channel_gather(nullptr, x, {3}), ShapeError);
}

TEST_CASE("forward is deterministic given identical inputs") {
  auto run = [](unsigned seed) {
    std::mt19937 eng(seed);
    auto x = make_tensor({2, 3, 8, 8}, oracle::uniform_values(2 * 3 * 64, eng));
    auto w = make_tensor({4, 3, 3, 3}, oracle::uniform_values(4 * 3 * 9, eng));
    auto gamma = make_tensor({4}, 1.0f);
    auto beta = make_tensor({4}, 0.0f);
    auto h = conv2d(nullptr, x, w, nullptr, 1, 1);
    h = batchnorm2d(nullptr, h, gamma, beta, nullptr, nullptr, true);
    h = relu(nullptr, h);
    h = maxpool2d(nullptr, h, 2, 2);
    return global_avgpool(nullptr, h)->data;
  };
  auto a = run(99);
  auto b = run(99);
  CHECK(a == b);
}
