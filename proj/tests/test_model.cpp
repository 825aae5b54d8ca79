#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "cetx/checkpoint.hpp"
#include "cetx/model.hpp"
#include "doctest.h"

using namespace cetx;

namespace {

Tensor<float> random_input(std::size_t c, std::size_t len, std::uint64_t seed) {
  Rng rng(seed);
  std::normal_distribution<float> n(0.0f, 1.0f);
  Tensor<float> x({c, len});
  for (auto& v : x.data()) v = n(rng);
  return x;
}

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.channels_in = 3;
  cfg.length_in = 128;
  cfg.num_classes = 4;
  cfg.seed = 5;
  return cfg;
}

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "cetx_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("default model has five exits with the published filter widths") {
  auto net = build_network(ModelConfig{});
  CHECK(net.num_exits() == 5);
  const std::size_t widths[] = {8, 16, 24, 32, 64};
  for (std::size_t e = 1; e <= 5; ++e) {
    const auto* w = net.find("block" + std::to_string(e) + ".conv.weight");
    REQUIRE(w != nullptr);
    CHECK(w->value.dim(0) == widths[e - 1]);
    CHECK(w->value.dim(2) == 4);
  }
  CHECK(block_output_lengths(ModelConfig{}) == std::vector<std::size_t>{100, 25, 7, 2, 1});
  auto logits = net.predict_all(random_input(3, 400, 1));
  REQUIRE(logits.size() == 5);
  for (const auto& l : logits) CHECK(l.shape() == Shape{6});
}

TEST_CASE("initialization is seed-deterministic and seed-sensitive") {
  auto a = build_network(small_config());
  auto b = build_network(small_config());
  auto cfg = small_config();
  cfg.seed = 6;
  auto c = build_network(cfg);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.parameters().size(); ++i) {
    CHECK(a.parameters()[i].value == b.parameters()[i].value);
    any_diff = any_diff || !(a.parameters()[i].value == c.parameters()[i].value);
  }
  CHECK(any_diff);
}

TEST_CASE("single-block network is valid and has one exit") {
  auto cfg = small_config();
  cfg.blocks = {BlockSpec{}};
  auto net = build_network(cfg);
  CHECK(net.num_exits() == 1);
  CHECK(net.predict_all(random_input(3, 128, 2)).size() == 1);
}

TEST_CASE("invalid configs are rejected with the field named") {
  auto cfg = small_config();
  cfg.blocks.clear();
  CHECK_THROWS_AS(build_network(cfg), ConfigError);
  cfg = small_config();
  cfg.num_classes = 1;
  CHECK_THROWS_WITH_AS(build_network(cfg), doctest::Contains("num_classes"), ConfigError);
  cfg = small_config();
  cfg.blocks[1].dropout_rate = 1.0;
  CHECK_THROWS_WITH_AS(build_network(cfg), doctest::Contains("block2.dropout"), ConfigError);
}

TEST_CASE("wrong input channel count is a shape error") {
  auto net = build_network(small_config());
  CHECK_THROWS_AS(net.predict_all(random_input(2, 128, 3)), ShapeError);
}

TEST_CASE("forward_until_exit equals the matching entry of forward_all_exits") {
  auto net = build_network(small_config());
  const auto x = random_input(3, 128, 4);
  const auto all = net.predict_all(x);
  for (std::size_t e = 1; e <= net.num_exits(); ++e) {
    Tape<float> tape;
    tape.set_recording(false);
    ForwardCounter counter;
    auto y = net.forward_until_exit(tape, x, e, &counter);
    CHECK(y.value() == all[e - 1]);
    CHECK(counter.conv_calls == e);
    CHECK(counter.heads == 1);
  }
  Tape<float> tape;
  CHECK_THROWS(net.forward_until_exit(tape, x, 0));
  CHECK_THROWS(net.forward_until_exit(tape, x, net.num_exits() + 1));
}

TEST_CASE("a loss on exit e leaves deeper blocks and other heads without gradient") {
  auto net = build_network(small_config());
  const auto x = random_input(3, 128, 5);
  const std::size_t exit = 2;
  Tape<float> tape;
  Rng rng(1);
  auto logits = net.forward_all_exits(tape, x, true, &rng);
  auto loss = cross_entropy_with_label(logits[exit - 1], 1);
  tape.backward(loss);
  net.zero_grad();
  tape.accumulate_param_grads();
  auto norm = [&](std::size_t idx) {
    double s = 0;
    for (auto g : net.parameters()[idx].grad.data()) s += std::abs(g);
    return s;
  };
  for (std::size_t e = 1; e <= net.num_exits(); ++e) {
    for (auto idx : net.block_parameter_indices(e)) {
      if (e > exit) CHECK(norm(idx) == 0.0);
    }
    for (auto idx : net.head_parameter_indices(e)) {
      if (e != exit) CHECK(norm(idx) == 0.0);
    }
  }
  CHECK(norm(net.block_parameter_indices(1)[0]) > 0.0);
  CHECK(norm(net.head_parameter_indices(exit)[0]) > 0.0);
}

TEST_CASE("MACs grow with the exit index") {
  auto net = build_network(ModelConfig{});
  for (std::size_t e = 2; e <= net.num_exits(); ++e) CHECK(net.macs_until_exit(e) > net.macs_until_exit(e - 1));
  // Block 1: 8 filters * 3 channels * 4 taps * 400 steps; head: 32*8 + 6*32.
  CHECK(net.macs_until_exit(1) == 8 * 3 * 4 * 400 + 32 * 8 + 6 * 32);
}

TEST_CASE("l2 penalty covers weights only and matches its tape value") {
  auto cfg = small_config();
  cfg.l2_rate = 0.01;
  auto net = build_network(cfg);
  double s = 0;
  for (const auto& p : net.parameters()) {
    const bool is_weight = p.name.size() > 7 && p.name.substr(p.name.size() - 7) == ".weight";
    CHECK(p.weight_decay_eligible == is_weight);
    if (is_weight) {
      for (auto v : p.value.data()) s += static_cast<double>(v) * v;
    }
  }
  CHECK(net.l2_penalty_value() == doctest::Approx(0.01 * s).epsilon(1e-12));
  Tape<float> tape;
  CHECK(net.l2_penalty(tape).value().item() == doctest::Approx(0.01 * s).epsilon(1e-5));
  cfg.l2_rate = 0.0;
  CHECK(build_network(cfg).l2_penalty_value() == 0.0);
}

TEST_CASE("training mode with dropout differs from inference mode; inference is repeatable") {
  auto net = build_network(small_config());
  const auto x = random_input(3, 128, 6);
  Tape<float> t1, t2;
  Rng rng(2);
  auto train_logits = net.forward_all_exits(t1, x, true, &rng);
  auto eval_logits = net.forward_all_exits(t2, x, false, nullptr);
  CHECK_FALSE(train_logits.back().value() == eval_logits.back().value());
  CHECK(net.predict_all(x) == net.predict_all(x));
  Tape<float> t3;
  CHECK_THROWS(net.forward_all_exits(t3, x, true, nullptr));
}

TEST_CASE("checkpoint round trip is bit-exact and keeps the info block") {
  auto net = build_network(small_config());
  // Perturb weights away from their seeded values so the load really matters.
  for (auto& p : net.parameters()) {
    for (auto& v : p.value.data()) v = std::nextafter(v, 1.0f) * 1.25f;
  }
  CheckpointInfo info;
  info.class_names = {"a", "b", "c", "d"};
  info.channel_stats = ChannelStats{{0.1, -0.2, 1e-17}, {1.0, 2.5, 3.0 / 7.0}};
  const auto path = temp_path("roundtrip.cetm");
  save_checkpoint(net, info, path);

  auto loaded = load_checkpoint(path);
  REQUIRE(loaded.net.parameters().size() == net.parameters().size());
  for (std::size_t i = 0; i < net.parameters().size(); ++i) {
    CHECK(loaded.net.parameters()[i].name == net.parameters()[i].name);
    CHECK(loaded.net.parameters()[i].value == net.parameters()[i].value);
  }
  CHECK(loaded.info.class_names == info.class_names);
  REQUIRE(loaded.info.channel_stats.has_value());
  CHECK(loaded.info.channel_stats->mean == info.channel_stats->mean);
  CHECK(loaded.info.channel_stats->stddev == info.channel_stats->stddev);
  CHECK(loaded.net.config().blocks.size() == net.config().blocks.size());
  CHECK(loaded.net.config().blocks[1].dropout_rate == net.config().blocks[1].dropout_rate);

  const auto again = temp_path("roundtrip2.cetm");
  save_checkpoint(loaded.net, loaded.info, again);
  std::ifstream fa(path, std::ios::binary), fb(again, std::ios::binary);
  std::string a((std::istreambuf_iterator<char>(fa)), {}), b((std::istreambuf_iterator<char>(fb)), {});
  CHECK(a == b);
}

TEST_CASE("truncated or corrupted checkpoints are rejected") {
  auto net = build_network(small_config());
  const auto path = temp_path("trunc.cetm");
  save_checkpoint(net, {}, path);
  const auto size = std::filesystem::file_size(path);

  std::filesystem::resize_file(path, size - 10);
  CHECK_THROWS_AS(load_checkpoint(path), FormatError);

  save_checkpoint(net, {}, path);
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(size / 2));
    f.put('\x5a');
  }
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("checksum"), FormatError);

  std::ofstream(path, std::ios::binary) << "JUNKJUNKJUNK";
  CHECK_THROWS_WITH_AS(load_checkpoint(path), doctest::Contains("magic"), FormatError);
}

TEST_CASE("loading into a network with a different class count fails") {
  auto net = build_network(small_config());
  const auto path = temp_path("classes.cetm");
  save_checkpoint(net, {}, path);
  auto cfg = small_config();
  cfg.num_classes = 5;
  auto other = build_network(cfg);
  CHECK_THROWS_WITH_AS(load_checkpoint_into(other, path), doctest::Contains("exit1.out.weight"), ShapeError);
  auto same = build_network(small_config());
  CHECK_NOTHROW(load_checkpoint_into(same, path));
}
