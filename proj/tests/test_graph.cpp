#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <variant>

#include "prunekit/checkpoint.hpp"
#include "prunekit/graph.hpp"
#include "support/oracles.hpp"

using namespace prunekit;

namespace {

const std::vector<std::string> kSmallConfig{"16", "16", "M", "32", "32", "M"};

int count_kind(const NetworkGraph& g, LayerKind kind) {
  int n = 0;
  for (const auto& b : g.blocks) {
    if (std::holds_alternative<Layer>(b) && std::get<Layer>(b).spec.kind == kind) ++n;
  }
  return n;
}

std::string temp_path(const char* name) {
  return std::string("prunekit_test_") + name + ".bin";
}

}  // namespace

TEST_CASE("vgg builder produces the expected layer and pair counts") {
  Rng rng(1);
  auto g = build_vgg(kSmallConfig, 1, 10, rng);
  CHECK(count_kind(g, LayerKind::Conv) == 4);
  CHECK(count_kind(g, LayerKind::BatchNorm) == 4);
  CHECK(count_kind(g, LayerKind::MaxPool) == 2);

  auto pairs = g.bn_conv_pairs();
  REQUIRE(pairs.size() == 4);
  // Last BN pairs with the linear classifier.
  CHECK(pairs.back().consumer->spec.kind == LayerKind::Linear);
  for (const auto& p : pairs) {
    CHECK(p.producer != nullptr);
    CHECK(p.counts_in_sparsity);
    CHECK(!p.feature_selection);
    CHECK(p.channels == p.bn->spec.channels);
  }
  CHECK(g.unprunable_bn_ids().empty());

  auto* fc = g.find_layer("fc");
  REQUIRE(fc != nullptr);
  CHECK(fc->spec.out_features == 10);
}

TEST_CASE("vgg parameter count matches the closed form") {
  Rng rng(2);
  auto g = build_vgg(kSmallConfig, 1, 10, rng);
  std::int64_t expect = 0;
  int prev = 1;
  for (const auto& tok : kSmallConfig) {
    if (tok == "M") continue;
    const int ch = std::stoi(tok);
    expect += 9LL * prev * ch;  // k^2 * C_in * C_out
    expect += 2LL * ch;         // gamma + beta
    prev = ch;
  }
  expect += static_cast<std::int64_t>(prev) * 10 + 10;  // classifier
  auto counts = count_params_flops(g, {1, 28, 28});
  CHECK(counts.params == expect);
}

TEST_CASE("vgg rejects a bad channel config") {
  Rng rng(3);
  CHECK_THROWS_AS(build_vgg({"16", "bogus"}, 1, 10, rng), ConfigError);
  CHECK_THROWS_AS(build_vgg({"0"}, 1, 10, rng), ConfigError);
  CHECK_THROWS_AS(build_vgg({}, 1, 10, rng), ConfigError);
}

TEST_CASE("single bottleneck block structure") {
  Rng rng(4);
  auto g = build_preact_resnet(1, 3, 10, 32, 16, rng);
  const ResidualBlock* block = nullptr;
  for (const auto& b : g.blocks) {
    if (std::holds_alternative<ResidualBlock>(b)) {
      REQUIRE(block == nullptr);
      block = &std::get<ResidualBlock>(b);
    }
  }
  REQUIRE(block != nullptr);
  CHECK(block->width() == 32);
  CHECK(block->conv3.spec.out_channels == block->width());  // identity width preserved
  CHECK(block->selection_is_full());

  auto pairs = g.bn_conv_pairs();
  int fs_sites = 0, counted = 0;
  for (const auto& p : pairs) {
    if (p.feature_selection) {
      ++fs_sites;
      CHECK(p.producer == nullptr);
      CHECK(!p.counts_in_sparsity);
      CHECK(p.block != nullptr);
    } else {
      ++counted;
      CHECK(p.producer != nullptr);
    }
  }
  CHECK(fs_sites == 1);
  CHECK(counted == 2);

  // The final BN scales the residual stream itself: unprunable.
  auto unprunable = g.unprunable_bn_ids();
  REQUIRE(unprunable.size() == 1);
  CHECK(unprunable[0] == "final_bn");
}

TEST_CASE("preact resnet forward shapes follow the hand-computed reductions") {
  Rng rng(5);
  auto g = build_preact_resnet(2, 3, 10, 32, 16, rng);
  auto x = make_tensor({4, 3, 32, 32});
  std::mt19937 eng(6);
  x->data = oracle::uniform_values(x->data.size(), eng);
  auto y = g.forward(nullptr, x, false);
  // stem 32x32 -> pool1 16x16 -> block1 -> pool2 8x8 -> block2 -> gap -> fc
  REQUIRE(y->shape == std::vector<int>({4, 10}));

  auto counts = count_params_flops(g, {3, 32, 32});
  // stem: 2*9*3*32*32*32; block convs at 16x16 and 8x8; fc 2*32*10.
  const std::int64_t stem = 2LL * 9 * 3 * 32 * 32 * 32;
  auto block_flops = [](std::int64_t hw) {
    return 2LL * (16 * 32 + 9 * 16 * 16 + 16 * 32) * hw;
  };
  CHECK(counts.flops == stem + block_flops(16 * 16) + block_flops(8 * 8) + 2LL * 32 * 10);
}

TEST_CASE("count_params_flops matches the 1x1 conv closed form") {
  NetworkGraph g;
  g.arch = "vgg";
  g.input_channels = 3;
  g.num_classes = 0;
  Layer conv;
  conv.id = "conv1";
  conv.spec.kind = LayerKind::Conv;
  conv.spec.in_channels = 3;
  conv.spec.out_channels = 4;
  conv.spec.kernel = 1;
  conv.spec.has_bias = true;
  conv.weight = make_param({4, 3, 1, 1});
  conv.bias = make_param({4});
  g.blocks.emplace_back(std::move(conv));
  auto counts = count_params_flops(g, {3, 8, 8});
  CHECK(counts.params == 12 + 4);
  CHECK(counts.flops == 2 * 3 * 4 * 64);
}

TEST_CASE("empty graph counts to zero") {
  NetworkGraph g;
  auto counts = count_params_flops(g, {3, 8, 8});
  CHECK(counts.params == 0);
  CHECK(counts.flops == 0);
}

TEST_CASE("descriptor round-trips the architecture") {
  Rng rng(7);
  auto g = build_preact_resnet(2, 3, 10, 32, 16, rng);
  const std::string desc = describe_graph(g);
  auto g2 = graph_from_descriptor(desc);
  CHECK(describe_graph(g2) == desc);
  CHECK(g2.input_channels == 3);
  CHECK(g2.num_classes == 10);
  // Same tensor inventory with the same shapes.
  auto a = g.named_tensors();
  auto b = g2.named_tensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second->shape == b[i].second->shape);
  }
}

TEST_CASE("checkpoint round-trip is bit-exact") {
  Rng rng(8);
  auto g = build_vgg({"8", "M", "12"}, 1, 10, rng);
  // Push the running stats off their defaults so they are exercised too.
  std::mt19937 eng(9);
  auto x = make_tensor({2, 1, 8, 8}, oracle::uniform_values(128, eng));
  g.forward(nullptr, x, true);

  const auto path = temp_path("roundtrip");
  save_checkpoint(g, path);
  auto g2 = load_checkpoint(path);
  auto a = g.named_tensors();
  auto b = g2.named_tensors();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].first == b[i].first);
    CHECK(a[i].second->data == b[i].second->data);  // bitwise for f32 vectors
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint corruption raises distinct structured errors") {
  Rng rng(10);
  auto g = build_vgg({"4"}, 1, 4, rng);
  const auto path = temp_path("corrupt");
  save_checkpoint(g, path);

  auto clobber = [&](std::size_t offset, char value) {
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(static_cast<std::streamoff>(offset));
    f.write(&value, 1);
  };

  clobber(0, 'X');
  try {
    load_checkpoint(path);
    FAIL("expected bad magic");
  } catch (const CheckpointError& e) {
    CHECK(e.kind == CheckpointError::Kind::BadMagic);
  }

  save_checkpoint(g, path);
  clobber(4, 9);  // version field
  try {
    load_checkpoint(path);
    FAIL("expected bad version");
  } catch (const CheckpointError& e) {
    CHECK(e.kind == CheckpointError::Kind::BadVersion);
  }

  save_checkpoint(g, path);
  {
    std::ifstream in(path, std::ios::binary);
    std::vector<char> all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(all.data(), static_cast<std::streamsize>(all.size() / 2));
  }
  try {
    load_checkpoint(path);
    FAIL("expected truncation");
  } catch (const CheckpointError& e) {
    CHECK(e.kind == CheckpointError::Kind::Truncated);
  }
  std::remove(path.c_str());
}

TEST_CASE("identical seeds build identical graphs with identical forward outputs") {
  auto build = [] {
    Rng rng(77);
    return build_vgg(kSmallConfig, 1, 10, rng);
  };
  auto g1 = build();
  auto g2 = build();
  std::mt19937 eng(12);
  auto x = make_tensor({2, 1, 28, 28}, oracle::uniform_values(2 * 28 * 28, eng));
  auto y1 = g1.forward(nullptr, x, false);
  auto y2 = g2.forward(nullptr, x, false);
  CHECK(y1->data == y2->data);
}
