// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "drifttune/backbone.hpp"
#include "drifttune/tensor_store.hpp"
#include "support/naive_transformer.hpp"
#include "support/test_util.hpp"

using namespace drifttune;
using namespace drifttune::backbone;

namespace {

namespace fs = std::filesystem;

fs::path scratch_dir() {
  const fs::path p = fs::temp_directory_path() / "drifttune_backbone_tests";
  fs::create_directories(p);
  return p;
}

std::vector<Vec> random_prompt(Rng &rng, std::size_t s, std::size_t d) {
  std::vector<Vec> prompt(s, Vec(d));
  for (auto &p : prompt) {
    for (auto &c : p) {
      c = rng.uniform(-1.0, 1.0);
    }
  }
  return prompt;
}

void zero_mixing_weights(BackboneWeights &w) {
  for (auto &b : w.blocks) {
    b.attn_qkv_w.zero();
    b.attn_qkv_b.zero();
    b.attn_proj_w.zero();
    b.attn_proj_b.zero();
    b.mlp_fc_w.zero();
    b.mlp_fc_b.zero();
    b.mlp_proj_w.zero();
    b.mlp_proj_b.zero();
  }
}

} // namespace

TEST_CASE("assemble_prompt layout") {
  Rng rng(1);
  auto bank = PromptBank::init(10, 6, rng);
  Vec f(6, 0.5);
  auto seq = assemble_prompt(bank, f);
  REQUIRE(seq.size() == 11);
  CHECK(seq[10] == f);
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(seq[i][j] == bank.vectors.at(i, j));
    }
  }

  // Different fused features share the bank positions verbatim.
  Vec g(6, -2.0);
  auto seq2 = assemble_prompt(bank, g);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(seq[i] == seq2[i]);
  }

  auto empty_bank = PromptBank::init(0, 6, rng);
  auto only_f = assemble_prompt(empty_bank, f);
  REQUIRE(only_f.size() == 1);
  CHECK(only_f[0] == f);

  Vec wrong(5, 0.0);
  CHECK_THROWS_AS(assemble_prompt(bank, wrong), DimensionError);
}

TEST_CASE("forward with zero mixing weights reduces to LN of input+pos") {
  BackboneConfig cfg;
  cfg.n_layers = 1;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.prompt_len = 2;
  cfg.max_positions = 4;
  Rng rng(3);
  auto w = BackboneWeights::init(cfg, rng);
  zero_mixing_weights(w);

  auto prompt = random_prompt(rng, 3, 8);
  auto h = forward(cfg, w, prompt);
  REQUIRE(h.rows == 3);
  REQUIRE(h.cols == 8);

  for (std::size_t i = 0; i < 3; ++i) {
    testutil::naive::VecD x(8);
    for (std::size_t j = 0; j < 8; ++j) {
      x[j] = prompt[i][j] + w.pos_emb.at(i, j);
    }
    auto expect = testutil::naive::ln(x, w.ln_f_g, w.ln_f_b);
    for (std::size_t j = 0; j < 8; ++j) {
      CHECK(h.at(i, j) == doctest::Approx(expect[j]).epsilon(1e-12));
    }
  }
}

TEST_CASE("forward matches the naive oracle on a tiny model") {
  BackboneConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.prompt_len = 2;
  cfg.max_positions = 4;
  Rng rng(17);
  auto w = BackboneWeights::init(cfg, rng);

  for (int it = 0; it < 10; ++it) {
    auto prompt = random_prompt(rng, 3, 8);
    auto h = forward(cfg, w, prompt);
    auto expect = testutil::naive::forward(
        cfg, w, testutil::naive::Seq(prompt.begin(), prompt.end()));
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 8; ++j) {
        CHECK(std::abs(h.at(i, j) - expect[i][j]) < 1e-5);
      }
    }
  }

  SUBCASE("non-causal variant also matches") {
    cfg.causal = false;
    auto prompt = random_prompt(rng, 4, 8);
    auto h = forward(cfg, w, prompt);
    auto expect = testutil::naive::forward(
        cfg, w, testutil::naive::Seq(prompt.begin(), prompt.end()));
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 8; ++j) {
        CHECK(std::abs(h.at(i, j) - expect[i][j]) < 1e-5);
      }
    }
  }
}

TEST_CASE("forward is deterministic and shape-checked") {
  BackboneConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 16;
  cfg.n_heads = 4;
  cfg.prompt_len = 4;
  cfg.max_positions = 8;
  Rng rng(5);
  auto w = BackboneWeights::init(cfg, rng);
  auto prompt = random_prompt(rng, 5, 16);

  auto h1 = forward(cfg, w, prompt);
  auto h2 = forward(cfg, w, prompt);
  CHECK(h1.data == h2.data);

  auto too_long = random_prompt(rng, 9, 16);
  CHECK_THROWS_AS(forward(cfg, w, too_long), ConfigError);
}

TEST_CASE("blend endpoints and midpoint") {
  Mat h(3, 2);
  h.at(2, 0) = 2.0; // last = (2, 0)
  h.at(1, 1) = 2.0; // second-to-last = (0, 2)

  auto last = blend(h, 1.0);
  CHECK(last[0] == 2.0);
  CHECK(last[1] == 0.0);

  auto prev = blend(h, 0.0);
  CHECK(prev[0] == 0.0);
  CHECK(prev[1] == 2.0);

  auto mid = blend(h, 0.5);
  CHECK(mid[0] == doctest::Approx(1.0));
  CHECK(mid[1] == doctest::Approx(1.0));

  Mat single(1, 2);
  CHECK_THROWS_AS(blend(single, 0.5), ConfigError);
}

TEST_CASE("classify: uniform, stable, and oracle-consistent") {
  Rng rng(7);
  auto head = HeadParams::init(4, 3, rng);
  head.w.zero();
  head.b.zero();
  auto p = classify(head, Vec(4, 0.3));
  for (double v : p) {
    CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
  }

  // Huge logit gap must not overflow.
  HeadParams big;
  big.w = Mat(1, 2);
  big.w.at(0, 0) = 1000.0;
  big.b = Mat(1, 2);
  big.beta = Mat(1, 1);
  auto q = classify(big, Vec(1, 1.0));
  CHECK(q[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(std::isfinite(q[0]));

  // Random case against a long-double softmax, and shift invariance.
  for (int it = 0; it < 20; ++it) {
    auto hd = HeadParams::init(6, 4, rng);
    Vec f(6);
    for (auto &c : f) {
      c = rng.uniform(-2.0, 2.0);
    }
    auto probs = classify(hd, f);
    std::vector<long double> logits(4);
    for (std::size_t j = 0; j < 4; ++j) {
      long double s = hd.b.at(0, j);
      for (std::size_t i = 0; i < 6; ++i) {
        s += static_cast<long double>(f[i]) * hd.w.at(i, j);
      }
      logits[j] = s;
    }
    long double denom = 0.0L;
    for (auto z : logits) {
      denom += std::exp(z);
    }
    double sum = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(std::abs(probs[j] -
                     static_cast<double>(std::exp(logits[j]) / denom)) < 1e-9);
      sum += probs[j];
    }
    CHECK(std::abs(sum - 1.0) < 1e-9);

    auto shifted = hd;
    for (std::size_t j = 0; j < 4; ++j) {
      shifted.b.at(0, j) += 7.5;
    }
    auto probs2 = classify(shifted, f);
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(std::abs(probs[j] - probs2[j]) < 1e-9);
    }
  }
}

TEST_CASE("backward: zero upstream, stale cache") {
  BackboneConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.prompt_len = 2;
  cfg.max_positions = 4;
  Rng rng(19);
  auto w = BackboneWeights::init(cfg, rng);
  auto prompt = random_prompt(rng, 3, 8);

  ForwardCache cache;
  forward(cfg, w, prompt, &cache);

  BackboneGrads grads(cfg);
  Mat zero_up(3, 8);
  auto dx = backward(cfg, w, cache, zero_up, grads);
  for (double v : dx.data) {
    CHECK(v == 0.0);
  }
  for (double v : grads.pos_emb.data) {
    CHECK(v == 0.0);
  }
  for (double v : grads.ln_f_g.data) {
    CHECK(v == 0.0);
  }

  // A weight update invalidates the cache.
  w.revision++;
  CHECK_THROWS_AS(backward(cfg, w, cache, zero_up, grads), StateError);
}

TEST_CASE("parameter counts: GPT-2-base geometry is under 4% trainable") {
  BackboneConfig cfg;
  cfg.n_layers = 12;
  cfg.d_model = 768;
  cfg.n_heads = 12;
  cfg.prompt_len = 10;
  cfg.max_positions = 1024;
  auto counts = count_backbone_params(cfg);

  // Hand enumeration (vocabulary excluded):
  //   block: 2 LN pairs + qkv + out-proj + MLP in/out with biases
  const std::size_t d = 768;
  const std::size_t block = 2 * (2 * d) + (d * 3 * d + 3 * d) + (d * d + d) +
                            (d * 4 * d + 4 * d) + (4 * d * d + d);
  const std::size_t total = 12 * block + 2 * d + 1024 * d;
  const std::size_t trainable = 12 * 4 * d + 2 * d + 1024 * d;
  CHECK(counts.total == total);
  CHECK(counts.trainable == trainable);
  CHECK(counts.trainable == 824832);
  CHECK(counts.total == 85842432);
  CHECK(counts.fraction < 0.04);
  CHECK(counts.fraction ==
        doctest::Approx(824832.0 / 85842432.0).epsilon(1e-15));
}

TEST_CASE("parameter counts: toy config matches hand enumeration") {
  BackboneConfig cfg;
  cfg.n_layers = 1;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.prompt_len = 2;
  cfg.max_positions = 4;
  auto counts = count_backbone_params(cfg);
  // ln pairs 2*16, attn 8*24+24 + 8*8+8, mlp 8*32+32 + 32*8+8 = 872
  CHECK(counts.total == 872 + 16 + 32);
  CHECK(counts.trainable == 32 + 16 + 32);
}

TEST_CASE("weight export/import round-trips bitwise") {
  BackboneConfig cfg;
  cfg.n_layers = 2;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.prompt_len = 2;
  cfg.max_positions = 4;
  Rng rng(31);
  auto w = BackboneWeights::init(cfg, rng);

  const auto p1 = scratch_dir() / "weights1.tensors";
  const auto p2 = scratch_dir() / "weights2.tensors";
  export_weights(w, p1.string());
  auto w1 = import_weights(cfg, p1.string());
  export_weights(w1, p2.string());
  auto w2 = import_weights(cfg, p2.string());

  // Once values are f32-representable, the round-trip is exact.
  for (std::size_t b = 0; b < 2; ++b) {
    CHECK(w1.blocks[b].attn_qkv_w.data == w2.blocks[b].attn_qkv_w.data);
    CHECK(w1.blocks[b].mlp_proj_w.data == w2.blocks[b].mlp_proj_w.data);
  }
  CHECK(w1.pos_emb.data == w2.pos_emb.data);
  CHECK(w1.ln_f_g.data == w2.ln_f_g.data);

  // ...and so are the forwards (same bits in, same bits out).
  auto prompt = random_prompt(rng, 3, 8);
  auto h1 = forward(cfg, w1, prompt);
  auto h2 = forward(cfg, w2, prompt);
  CHECK(h1.data == h2.data);
}

TEST_CASE("import reports missing and misshapen tensors by name") {
  BackboneConfig cfg;
  cfg.n_layers = 1;
  cfg.d_model = 8;
  cfg.n_heads = 2;
  cfg.prompt_len = 2;
  cfg.max_positions = 4;
  Rng rng(37);
  auto w = BackboneWeights::init(cfg, rng);

  const auto path = scratch_dir() / "broken.tensors";
  store::TensorMap map;
  for (const auto &[name, mat] : named_tensors(w)) {
    map.emplace(name, *mat);
  }
  map.erase("ln_f.bias");
  store::write_tensors(map, path.string());
  try {
    import_weights(cfg, path.string());
    FAIL("expected FormatError");
  } catch (const FormatError &e) {
    CHECK(std::string(e.what()).find("ln_f.bias") != std::string::npos);
  }

  map.emplace("ln_f.bias", Mat(1, 9));
  store::write_tensors(map, path.string());
  CHECK_THROWS_AS(import_weights(cfg, path.string()), FormatError);
}

TEST_CASE("tensor container layout is exactly as documented") {
  // Independent byte-level reader for the container format.
  store::TensorMap map;
  Mat a(2, 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a.data[i] = 0.5 * static_cast<double>(i + 1);
  }
  Mat b(1, 4);
  for (std::size_t i = 0; i < 4; ++i) {
    b.data[i] = -static_cast<double>(i);
  }
  map.emplace("alpha", a);
  map.emplace("beta", b);
  const auto path = scratch_dir() / "layout.tensors";
  store::write_tensors(map, path.string());

  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.is_open());
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char *>(&hlen), 8);
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  auto j = nlohmann::json::parse(header);
  REQUIRE(j.contains("alpha"));
  REQUIRE(j.contains("beta"));
  CHECK(j["alpha"]["dtype"] == "f32");
  CHECK(j["alpha"]["shape"] == nlohmann::json({2, 3}));
  CHECK(j["beta"]["shape"] == nlohmann::json({4}));
  const auto ob = j["alpha"]["offset_begin"].get<std::uint64_t>();
  const auto oe = j["alpha"]["offset_end"].get<std::uint64_t>();
  CHECK(oe - ob == 6 * 4);

  std::vector<char> payload(std::istreambuf_iterator<char>(in), {});
  CHECK(payload.size() == (6 + 4) * 4);
  float f0;
  std::memcpy(&f0, payload.data() + ob, 4);
  CHECK(f0 == 0.5f);
}
