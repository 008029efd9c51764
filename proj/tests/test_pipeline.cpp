#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "prunekit/pruner.hpp"
#include "prunekit/trainer.hpp"

using namespace prunekit;
namespace fs = std::filesystem;

namespace {

// One shared tiny synthetic dataset for the whole suite.
struct Fixture {
  fs::path root;
  Fixture() : root(fs::temp_directory_path() / "prunekit_pipeline_data") {
    if (!fs::exists(root / "train-images-idx3-ubyte")) {
      generate_synth_dataset(root.string(), 30, 10, 1234);
    }
  }
};

TrainConfig tiny_config(const Fixture& f) {
  TrainConfig cfg;
  cfg.dataset = "mnist";
  cfg.data_root = f.root.string();
  cfg.arch = "vgg-small";
  cfg.vgg_config = "8,M,8";
  cfg.stage1_epochs = 3;
  cfg.finetune_epochs = 4;
  cfg.batch_size = 32;
  cfg.lr = 0.05f;
  cfg.seed = 1;
  return cfg;
}

}  // namespace

TEST_CASE("config validation rejects out-of-range values") {
  Fixture f;
  auto cfg = tiny_config(f);
  cfg.ratio_r = 1.5f;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config(f);
  cfg.threshold_p = 0.0f;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config(f);
  cfg.rule = "sideways";
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config(f);
  cfg.lr = -1.0f;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("zero stage-1 epochs leaves the graph untouched with P=0") {
  Fixture f;
  auto cfg = tiny_config(f);
  cfg.stage1_epochs = 0;
  auto data = load_and_split(cfg);
  Rng rng(cfg.seed);
  auto graph = build_model(cfg, rng);
  auto before = graph.named_tensors();
  std::vector<std::vector<float>> snapshot;
  for (auto& [n, t] : before) snapshot.push_back(t->data);

  auto result = train_stage1(graph, cfg, data);
  CHECK(result.report.rows.empty());
  CHECK(result.controller.lambda == 0.0);
  auto after = graph.named_tensors();
  for (std::size_t i = 0; i < after.size(); ++i) {
    CHECK(after[i].second->data == snapshot[i]);
  }
  CHECK(measure_sparsity(graph, cfg).value == 0.0);
}

TEST_CASE("stage 1 trains, logs every epoch, and is seed-deterministic") {
  Fixture f;
  auto cfg = tiny_config(f);
  auto data = load_and_split(cfg);

  auto run = [&] {
    Rng rng(cfg.seed);
    auto graph = build_model(cfg, rng);
    return train_stage1(graph, cfg, data);
  };
  auto r1 = run();
  auto r2 = run();
  REQUIRE(r1.report.rows.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(r1.report.rows[i].train_loss == r2.report.rows[i].train_loss);
    CHECK(r1.report.rows[i].val_acc == r2.report.rows[i].val_acc);
    CHECK(r1.report.rows[i].lr == doctest::Approx(cfg.lr));  // fixed lr in stage 1
  }
  CHECK(r1.report.rows.back().train_loss < r1.report.rows.front().train_loss);
  // controller stepped once per epoch
  CHECK(r1.controller.history.size() == 3);
}

TEST_CASE("constant-lambda mode pins lambda and skips the controller") {
  Fixture f;
  auto cfg = tiny_config(f);
  cfg.constant_lambda = 1e-5;
  cfg.stage1_epochs = 2;
  auto data = load_and_split(cfg);
  Rng rng(cfg.seed);
  auto graph = build_model(cfg, rng);
  auto result = train_stage1(graph, cfg, data);
  for (const auto& row : result.report.rows) CHECK(row.lambda == 1e-5);
  CHECK(result.controller.history.empty());
}

TEST_CASE("finetune follows the 50%/75% step schedule") {
  Fixture f;
  auto cfg = tiny_config(f);
  cfg.finetune_epochs = 20;
  cfg.lr = 0.1f;
  // One batch per epoch keeps this fast: shrink the data via limit_per_class.
  cfg.limit_per_class = 3;
  auto data = load_and_split(cfg);
  Rng rng(cfg.seed);
  auto graph = build_model(cfg, rng);
  auto report = finetune_stage3(graph, cfg, data);
  REQUIRE(report.rows.size() == 20);
  CHECK(report.rows[0].lr == doctest::Approx(0.1));
  CHECK(report.rows[9].lr == doctest::Approx(0.1));    // epoch 10
  CHECK(report.rows[10].lr == doctest::Approx(0.01));  // epoch 11
  CHECK(report.rows[14].lr == doctest::Approx(0.01));  // epoch 15
  CHECK(report.rows[15].lr == doctest::Approx(0.001)); // epoch 16
  CHECK(report.rows[19].lr == doctest::Approx(0.001));
}

TEST_CASE("scratch mode re-initializes parameters before training") {
  Fixture f;
  auto cfg = tiny_config(f);
  cfg.finetune_epochs = 1;
  cfg.lr = 0.0f;  // freeze training so only the re-init can change weights
  cfg.limit_per_class = 2;
  auto data = load_and_split(cfg);
  Rng rng(cfg.seed);
  auto graph = build_model(cfg, rng);
  auto* conv = graph.find_layer("conv1");
  std::fill(conv->weight->data.begin(), conv->weight->data.end(), 5.0f);

  auto report = finetune_stage3(graph, cfg, data, true);
  CHECK(report.stage == "scratch");
  bool any_changed = false;
  for (float v : conv->weight->data) {
    if (v != 5.0f) any_changed = true;
  }
  CHECK(any_changed);
}

TEST_CASE("a fresh random classifier scores chance level on a balanced split") {
  Fixture f;
  auto cfg = tiny_config(f);
  auto data = load_and_split(cfg);
  double acc_sum = 0.0;
  for (unsigned seed : {11u, 12u, 13u, 14u, 15u}) {
    Rng rng(seed);
    auto graph = build_model(cfg, rng);
    acc_sum += evaluate(graph, data.test, data.mean, data.stddev);
  }
  CHECK(acc_sum / 5.0 == doctest::Approx(0.1).epsilon(0.6));  // 0.04..0.16
}

TEST_CASE("a memorized toy set evaluates to exactly 1.0") {
  Fixture f;
  auto cfg = tiny_config(f);
  cfg.vgg_config = "16,16,M,32,32,M";  // enough width to memorize
  cfg.limit_per_class = 2;
  cfg.batch_size = 4;
  cfg.finetune_epochs = 40;
  cfg.lr = 0.1f;
  cfg.val_fraction = 0.0f;
  cfg.augment = false;
  auto data = load_and_split(cfg);
  Rng rng(cfg.seed);
  auto graph = build_model(cfg, rng);
  finetune_stage3(graph, cfg, data);
  const double train_acc = evaluate(graph, data.train, data.mean, data.stddev);
  CHECK(train_acc == 1.0);
}

TEST_CASE("evaluation accuracy does not depend on the eval batch size") {
  Fixture f;
  auto cfg = tiny_config(f);
  auto data = load_and_split(cfg);
  Rng rng(3);
  auto graph = build_model(cfg, rng);
  const double a1 = evaluate(graph, data.test, data.mean, data.stddev, 1);
  const double a64 = evaluate(graph, data.test, data.mean, data.stddev, 64);
  CHECK(a1 == a64);
}

TEST_CASE("L1 pressure keeps the gamma mass at or below the control run") {
  Fixture f;
  int wins = 0;
  for (unsigned seed : {21u, 22u, 23u}) {
    auto cfg = tiny_config(f);
    cfg.seed = seed;
    cfg.stage1_epochs = 4;
    // A stiff constant lambda makes the pressure visible in few epochs.
    auto data = load_and_split(cfg);

    Rng rng_a(seed);
    auto with_l1 = build_model(cfg, rng_a);
    cfg.constant_lambda = 2e-3;
    train_stage1(with_l1, cfg, data);
    const double mass_l1 = l1_penalty(with_l1, 1.0).value;

    Rng rng_b(seed);
    auto control = build_model(cfg, rng_b);
    cfg.constant_lambda = 0.0;
    train_stage1(control, cfg, data);
    const double mass_control = l1_penalty(control, 1.0).value;

    if (mass_l1 <= mass_control) ++wins;
  }
  CHECK(wins == 3);
}

TEST_CASE("stage 1 into prune into finetune completes and reports the triple") {
  Fixture f;
  auto cfg = tiny_config(f);
  cfg.stage1_epochs = 4;
  cfg.finetune_epochs = 3;
  auto data = load_and_split(cfg);
  Rng rng(cfg.seed);
  auto graph = build_model(cfg, rng);
  train_stage1(graph, cfg, data);
  const double before_prune = evaluate(graph, data.test, data.mean, data.stddev);

  auto imp = compute_importance(graph, cfg.importance_metric(), cfg.norm_kind());
  auto plan = select_local(imp, 0.3f);
  auto [pruned, transcript] = prune_graph(graph, plan, {1, 28, 28});
  const double after_prune = evaluate(pruned, data.test, data.mean, data.stddev);

  finetune_stage3(pruned, cfg, data);
  const double after_finetune = evaluate(pruned, data.test, data.mean, data.stddev);

  CHECK(before_prune >= 0.0);
  CHECK(after_prune >= 0.0);
  CHECK(after_finetune >= 0.0);
  CHECK(transcript.after.params <= transcript.before.params);
  // The pruned net still emits the full class count.
  auto x = make_tensor({1, 1, 28, 28}, 0.3f);
  CHECK(pruned.forward(nullptr, x, false)->shape == std::vector<int>({1, 10}));
}
