#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "prunekit/ops.hpp"
#include "prunekit/tensor.hpp"
#include "support/oracles.hpp"

using namespace prunekit;

TEST_CASE("d(x^2)/dx = 2x via conv with shared input/weight") {
  auto x = make_param({1, 1, 1, 1}, 3.0f);
  Tape tape;
  auto y = conv2d(&tape, x, x, nullptr, 1, 0);
  REQUIRE(y->numel() == 1);
  CHECK(y->data[0] == doctest::Approx(9.0f));
  tape.backward(y);
  CHECK(x->grad[0] == doctest::Approx(6.0f));
}

TEST_CASE("backward twice without a fresh forward throws") {
  auto x = make_param({1, 1, 1, 1}, 2.0f);
  Tape tape;
  auto y = conv2d(&tape, x, x, nullptr, 1, 0);
  tape.backward(y);
  CHECK_THROWS_AS(tape.backward(y), Error);
}

TEST_CASE("backward rejects a non-scalar loss") {
  auto x = make_param({1, 1, 2, 2}, 1.0f);
  auto w = make_param({1, 1, 1, 1}, 1.0f);
  Tape tape;
  auto y = conv2d(&tape, x, w, nullptr, 1, 0);
  CHECK_THROWS_AS(tape.backward(y), ShapeError);
}

TEST_CASE("conv2d gradients match finite differences") {
  std::mt19937 eng(101);
  for (int trial = 0; trial < 4; ++trial) {
    const int stride = 1 + trial % 2, pad = trial % 2;
    auto x = make_param({2, 3, 5, 5}, 0.0f);
    x->data = oracle::uniform_values(x->data.size(), eng);
    auto w = make_param({2, 3, 3, 3}, 0.0f);
    w->data = oracle::uniform_values(w->data.size(), eng);
    auto b = make_param({2}, 0.0f);
    b->data = oracle::uniform_values(2, eng);
    auto fwd = [&](Tape* t) { return conv2d(t, x, w, b, stride, pad); };
    // Conv is linear in every argument: central differences are exact, so a
    // larger h only reduces f32 round-off in the difference quotient.
    auto rep = oracle::gradcheck(fwd, {x, w, b}, eng, 1e-3, 1e-4, 1e-2);
    INFO(rep.worst);
    CHECK(rep.ok);
  }
}

TEST_CASE("batchnorm gradients match finite differences in train and eval mode") {
  std::mt19937 eng(103);
  for (bool training : {true, false}) {
    auto x = make_param({3, 2, 4, 4}, 0.0f);
    x->data = oracle::uniform_values(x->data.size(), eng);
    auto gamma = make_param({2}, 0.0f);
    gamma->data = {0.8f, 1.3f};
    auto beta = make_param({2}, 0.0f);
    beta->data = {0.1f, -0.4f};
    auto rm = make_tensor({2}, {0.2f, -0.1f});
    auto rv = make_tensor({2}, {1.4f, 0.7f});
    auto fwd = [&](Tape* t) {
      // Train-mode stat updates are frozen out so repeated forwards agree.
      return batchnorm2d(t, x, gamma, beta, training ? nullptr : rm, training ? nullptr : rv,
                         training);
    };
    auto rep = oracle::gradcheck(fwd, {x, gamma, beta}, eng, 1e-3, 1e-4, 1e-2);
    INFO("training=", training, " ", rep.worst);
    CHECK(rep.ok);
  }
}

TEST_CASE("relu gradients match finite differences away from the kink") {
  std::mt19937 eng(107);
  auto x = make_param({4, 6}, 0.0f);
  x->data = oracle::kink_free_values(x->data.size(), eng);
  auto fwd = [&](Tape* t) { return relu(t, x); };
  auto rep = oracle::gradcheck(fwd, {x}, eng);
  INFO(rep.worst);
  CHECK(rep.ok);
}

TEST_CASE("maxpool gradients match finite differences with distinct windows") {
  std::mt19937 eng(109);
  auto x = make_param({2, 2, 6, 6}, 0.0f);
  x->data = oracle::distinct_values(x->data.size(), eng);
  auto fwd = [&](Tape* t) { return maxpool2d(t, x, 2, 2); };
  auto rep = oracle::gradcheck(fwd, {x}, eng);
  INFO(rep.worst);
  CHECK(rep.ok);
}

TEST_CASE("pooling, flatten, linear, add and gather gradients match finite differences") {
  std::mt19937 eng(113);

  auto x = make_param({2, 3, 4, 4}, 0.0f);
  x->data = oracle::uniform_values(x->data.size(), eng);
  auto rep = oracle::gradcheck([&](Tape* t) { return global_avgpool(t, x); }, {x}, eng);
  CHECK(rep.ok);

  rep = oracle::gradcheck([&](Tape* t) { return flatten(t, x); }, {x}, eng);
  CHECK(rep.ok);

  rep = oracle::gradcheck([&](Tape* t) { return channel_gather(t, x, {0, 2}); }, {x}, eng);
  CHECK(rep.ok);

  auto a = make_param({3, 5}, 0.0f);
  a->data = oracle::uniform_values(15, eng);
  auto b = make_param({3, 5}, 0.0f);
  b->data = oracle::uniform_values(15, eng);
  rep = oracle::gradcheck([&](Tape* t) { return add(t, a, b); }, {a, b}, eng);
  CHECK(rep.ok);

  auto w = make_param({4, 5}, 0.0f);
  w->data = oracle::uniform_values(20, eng);
  auto bias = make_param({4}, 0.0f);
  bias->data = oracle::uniform_values(4, eng);
  rep = oracle::gradcheck([&](Tape* t) { return linear(t, a, w, bias); }, {a, w, bias}, eng);
  CHECK(rep.ok);
}

TEST_CASE("softmax cross entropy gradients match finite differences") {
  std::mt19937 eng(127);
  auto logits = make_param({5, 7}, 0.0f);
  logits->data = oracle::uniform_values(35, eng);
  const std::vector<int> labels{0, 3, 6, 2, 2};
  auto fwd = [&](Tape* t) { return softmax_cross_entropy(t, logits, labels); };
  auto rep = oracle::gradcheck(fwd, {logits}, eng);
  INFO(rep.worst);
  CHECK(rep.ok);
}

TEST_CASE("toy conv+BN+relu+linear network matches finite differences end to end") {
  std::mt19937 eng(131);
  auto x = make_tensor({4, 2, 6, 6}, oracle::uniform_values(4 * 2 * 36, eng));
  auto w1 = make_param({3, 2, 3, 3}, 0.0f);
  w1->data = oracle::uniform_values(w1->data.size(), eng, -0.5f, 0.5f);
  auto gamma = make_param({3}, 0.0f);
  gamma->data = {0.9f, 1.2f, 0.7f};
  auto beta = make_param({3}, 0.0f);
  beta->data = {0.05f, -0.1f, 0.2f};
  auto w2 = make_param({5, 3}, 0.0f);
  w2->data = oracle::uniform_values(15, eng, -0.5f, 0.5f);
  auto b2 = make_param({5}, 0.0f);
  const std::vector<int> labels{0, 1, 2, 3};

  auto fwd = [&](Tape* t) {
    auto h = conv2d(t, x, w1, nullptr, 1, 1);
    h = batchnorm2d(t, h, gamma, beta, nullptr, nullptr, true);
    h = relu(t, h);
    h = global_avgpool(t, h);
    h = linear(t, h, w2, b2);
    return softmax_cross_entropy(t, h, labels);
  };
  auto rep = oracle::gradcheck(fwd, {w1, gamma, beta, w2, b2}, eng, 1e-3, 1e-3, 1e-3);
  INFO(rep.worst);
  CHECK(rep.ok);
}

TEST_CASE("tape records form a DAG visited once in reverse order") {
  auto x = make_param({1, 2, 4, 4}, 0.5f);
  Tape tape;
  auto h = relu(&tape, x);
  auto g = global_avgpool(&tape, h);
  auto w = make_param({1, 2}, 1.0f);
  auto y = linear(&tape, g, w, nullptr);
  REQUIRE(tape.size() == 3);
  CHECK(tape.records()[0].kind == OpKind::Relu);
  CHECK(tape.records()[2].kind == OpKind::Linear);
  std::int64_t prev = -1;
  for (const auto& r : tape.records()) {
    CHECK(r.output_id > prev);
    prev = r.output_id;
  }
}
