// ===== test_checkpoint.cpp =====

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "durnn/checkpoint.hpp"

using namespace durnn;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.task = "adding";
  c.seq_len = 12;
  c.batch = 4;
  c.max_iters = 50;
  c.layers = {{6, Variant::durnn}, {5, Variant::ind_plus_selection}};
  c.out_dir = "runs/ckpt_test";
  return c;
}

struct Fixture {
  ExperimentConfig cfg;
  Network net;
  AdamState adam;
  Rng rng_train{11};
  Rng rng_eval{22};

  explicit Fixture(const ExperimentConfig& c) : cfg(c) {
    Rng init(7);
    net = init_network(build_layer_specs(cfg), config_out_dim(cfg),
                       cfg.readout_bias_init, init);
    std::vector<TensorRef> params = collect_params(net);
    adam = make_adam(params);
    adam.step_count = 37;
    Rng fill(99);
    for (size_t k = 0; k < params.size(); ++k)
      for (size_t i = 0; i < params[k].count; ++i) {
        adam.m[k][i] = fill.uniform(-1.0, 1.0);
        adam.v[k][i] = fill.uniform01();
      }
    net.layers[0].b_thre = 0.37;
    // advance the rng streams so their states are off-default
    for (int i = 0; i < 5; ++i) rng_train.uniform01();
    rng_eval.gaussian();
  }
};

std::string file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void check_tensors_equal(Network& a, Network& b) {
  std::vector<TensorRef> ra = collect_params(a);
  std::vector<TensorRef> rb = collect_params(b);
  REQUIRE(ra.size() == rb.size());
  for (size_t k = 0; k < ra.size(); ++k) {
    CHECK(ra[k].name == rb[k].name);
    REQUIRE(ra[k].count == rb[k].count);
    CHECK(std::memcmp(ra[k].data, rb[k].data, ra[k].count * sizeof(double)) == 0);
  }
}

fs::path tmp_path(const char* name) { return fs::temp_directory_path() / name; }

}  // namespace

TEST_CASE("checkpoints round-trip bitwise") {
  Fixture fx(small_config());
  const fs::path path = tmp_path("durnn_ckpt_roundtrip.ckpt");
  save_checkpoint(path.string(), fx.cfg, fx.net, fx.adam, 1234, fx.rng_train,
                  fx.rng_eval);

  LoadedCheckpoint got = load_checkpoint(path.string());
  CHECK(got.config == fx.cfg);
  CHECK(got.iteration == 1234);
  CHECK(got.adam.step_count == 37);
  CHECK(got.rng_train == fx.rng_train);
  CHECK(got.rng_eval == fx.rng_eval);
  check_tensors_equal(got.net, fx.net);
  CHECK(got.net.layers[0].b_thre == 0.37);

  REQUIRE(got.adam.m.size() == fx.adam.m.size());
  for (size_t k = 0; k < fx.adam.m.size(); ++k) {
    CHECK(got.adam.m[k] == fx.adam.m[k]);
    CHECK(got.adam.v[k] == fx.adam.v[k]);
  }

  SUBCASE("restored rng streams continue identically") {
    Rng expect = fx.rng_train;
    CHECK(got.rng_train.uniform01() == expect.uniform01());
    CHECK(got.rng_train.gaussian() == expect.gaussian());
  }

  SUBCASE("saving is deterministic and save(load(x)) reproduces the bytes") {
    const fs::path again = tmp_path("durnn_ckpt_again.ckpt");
    save_checkpoint(again.string(), fx.cfg, fx.net, fx.adam, 1234, fx.rng_train,
                    fx.rng_eval);
    CHECK(file_bytes(again) == file_bytes(path));
    save_checkpoint(again.string(), got.config, got.net, got.adam, got.iteration,
                    got.rng_train, got.rng_eval);
    CHECK(file_bytes(again) == file_bytes(path));
    fs::remove(again);
  }
  fs::remove(path);
}

TEST_CASE("untrained selection biases are still saved") {
  ExperimentConfig cfg = small_config();
  cfg.train_b_s = false;
  Fixture fx(cfg);
  fx.net.layers[0].b_s[2] = 0.625;  // would be lost if only trainables were saved
  fx.net.layers[1].b_s[0] = -0.125;

  const fs::path path = tmp_path("durnn_ckpt_bs.ckpt");
  save_checkpoint(path.string(), fx.cfg, fx.net, fx.adam, 10, fx.rng_train, fx.rng_eval);
  LoadedCheckpoint got = load_checkpoint(path.string());
  CHECK(got.net.layers[0].b_s[2] == 0.625);
  CHECK(got.net.layers[1].b_s[0] == -0.125);
  check_tensors_equal(got.net, fx.net);
  fs::remove(path);
}

TEST_CASE("the config hash gates resumption") {
  Fixture fx(small_config());
  const fs::path path = tmp_path("durnn_ckpt_gate.ckpt");
  save_checkpoint(path.string(), fx.cfg, fx.net, fx.adam, 42, fx.rng_train, fx.rng_eval);

  CHECK_NOTHROW(load_checkpoint(path.string(), fx.cfg));

  // Bookkeeping changes — extending the run, moving the output — are the
  // point of resuming and pass the gate.
  ExperimentConfig extended = fx.cfg;
  extended.max_iters = 9999;
  extended.out_dir = "runs/elsewhere";
  CHECK_NOTHROW(load_checkpoint(path.string(), extended));

  ExperimentConfig wider = fx.cfg;
  wider.layers[0].neurons += 1;
  try {
    load_checkpoint(path.string(), wider);
    FAIL("expected throw");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("hash mismatch") != std::string::npos);
  }

  ExperimentConfig other_variant = fx.cfg;
  other_variant.layers[1].variant = Variant::durnn;
  CHECK_THROWS_AS(load_checkpoint(path.string(), other_variant), std::runtime_error);

  ExperimentConfig other_batch = fx.cfg;
  other_batch.batch += 1;
  CHECK_THROWS_AS(load_checkpoint(path.string(), other_batch), std::runtime_error);
  fs::remove(path);
}

TEST_CASE("malformed files are rejected") {
  Fixture fx(small_config());
  const fs::path path = tmp_path("durnn_ckpt_bad.ckpt");
  save_checkpoint(path.string(), fx.cfg, fx.net, fx.adam, 5, fx.rng_train, fx.rng_eval);
  const std::string good = file_bytes(path);

  auto write_variant = [&](const std::string& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  };

  SUBCASE("missing file") {
    fs::remove(path);
    CHECK_THROWS_AS(load_checkpoint(path.string()), std::runtime_error);
  }
  SUBCASE("wrong magic") {
    write_variant("durnn checkpoint 9" + good.substr(strlen("durnn checkpoint 1")));
    CHECK_THROWS_AS(load_checkpoint(path.string()), std::runtime_error);
  }
  SUBCASE("truncated blob") {
    write_variant(good.substr(0, good.size() - 16));
    try {
      load_checkpoint(path.string());
      FAIL("expected throw");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("truncated") != std::string::npos);
    }
  }
  SUBCASE("edited config text breaks the stored hash") {
    // The canonical config text contains 'seq_len = 12'; tamper with it.
    const std::string needle = "seq_len = 12";
    const size_t at = good.find(needle);
    REQUIRE(at != std::string::npos);
    std::string bad = good;
    bad.replace(at, needle.size(), "seq_len = 13");
    write_variant(bad);
    try {
      load_checkpoint(path.string());
      FAIL("expected throw");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("embedded config") != std::string::npos);
    }
  }
  fs::remove(path);
}
