#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "rad/checkpoint.hpp"
#include "rad/errors.hpp"
#include "rad/model.hpp"
#include "rad/response_aware.hpp"
#include "rad/rng.hpp"

using namespace rad;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
}

ModelConfig small_config() {
  ModelConfig c;
  c.vocab_size = 11;
  c.embed_dim = 6;
  c.n_layers = 2;
  c.n_heads = 2;
  c.ff_dim = 9;
  c.max_positions = 24;
  return c;
}

}  // namespace

TEST_CASE("checkpoint round-trip restores every value bit-exactly") {
  ModelConfig cfg = small_config();
  Rng rng(7);
  ModelParams params = ModelParams::init(cfg, rng);

  const std::string path = temp_path("rad_ckpt_roundtrip.bin");
  save_checkpoint(path, params, cfg);
  LoadedCheckpoint loaded = load_checkpoint(path);

  CHECK(loaded.model_config.vocab_size == cfg.vocab_size);
  CHECK(loaded.model_config.ff_dim == cfg.ff_dim);
  CHECK_FALSE(loaded.has_ra);

  std::size_t checked = 0;
  params.for_each([&](const std::string& name, const Tensor& t) {
    loaded.params.for_each([&](const std::string& other, const Tensor& lt) {
      if (other != name) return;
      REQUIRE(lt.shape() == t.shape());
      CHECK(std::memcmp(lt.values().data(), t.values().data(),
                        t.numel() * sizeof(double)) == 0);
      ++checked;
    });
  });
  CHECK(checked == 38);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint restores the auxiliary parameter block") {
  ModelConfig cfg = small_config();
  RaConfig rcfg;
  rcfg.embed_dim = cfg.embed_dim;
  rcfg.n_heads = 3;
  rcfg.hidden_dim = 10;
  Rng rng(9);
  ModelParams params = ModelParams::init(cfg, rng);
  RaParams ra = RaParams::init(rcfg, rng);

  const std::string path = temp_path("rad_ckpt_ra.bin");
  save_checkpoint(path, params, cfg, &ra, &rcfg);
  LoadedCheckpoint loaded = load_checkpoint(path);

  REQUIRE(loaded.has_ra);
  CHECK(loaded.ra_config.hidden_dim == 10);
  std::size_t checked = 0;
  ra.for_each([&](const std::string& name, const Tensor& t) {
    loaded.ra_params.for_each([&](const std::string& other, const Tensor& lt) {
      if (other != name) return;
      CHECK(std::memcmp(lt.values().data(), t.values().data(),
                        t.numel() * sizeof(double)) == 0);
      ++checked;
    });
  });
  CHECK(checked == 12);

  CHECK_THROWS_AS(save_checkpoint(path, params, cfg, &ra, nullptr), ContractError);
  std::filesystem::remove(path);
}

TEST_CASE("reloaded parameters produce bit-identical logits") {
  ModelConfig cfg = small_config();
  Rng rng(21);
  ModelParams params = ModelParams::init(cfg, rng);

  const std::vector<TokenId> ctx = {5, 8, 2};
  const std::vector<TokenId> rsp = {6, 9, 3};
  Tensor ex = embed(ctx, params);
  Tensor ey = embed(rsp, params);
  ForwardOutput before = forward(ex, ey, params, cfg);

  const std::string path = temp_path("rad_ckpt_logits.bin");
  save_checkpoint(path, params, cfg);
  LoadedCheckpoint loaded = load_checkpoint(path);
  ForwardOutput after = forward(embed(ctx, loaded.params), embed(rsp, loaded.params),
                                loaded.params, loaded.model_config);

  REQUIRE(after.logits.shape() == before.logits.shape());
  CHECK(std::memcmp(after.logits.values().data(), before.logits.values().data(),
                    before.logits.numel() * sizeof(double)) == 0);
  std::filesystem::remove(path);
}

TEST_CASE("identical parameters serialize to identical bytes") {
  ModelConfig cfg = small_config();
  Rng a(33);
  ModelParams pa = ModelParams::init(cfg, a);
  const std::string p1 = temp_path("rad_ckpt_bytes1.bin");
  const std::string p2 = temp_path("rad_ckpt_bytes2.bin");
  save_checkpoint(p1, pa, cfg);

  Rng b(33);
  ModelParams pb = ModelParams::init(cfg, b);
  save_checkpoint(p2, pb, cfg);

  CHECK(slurp(p1) == slurp(p2));
  std::filesystem::remove(p1);
  std::filesystem::remove(p2);
}

TEST_CASE("checkpoint loader rejects malformed files") {
  const std::string path = temp_path("rad_ckpt_bad.bin");

  {
    std::ofstream out(path, std::ios::binary);
    out << "not a checkpoint\n";
  }
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);

  {
    std::ofstream out(path, std::ios::binary);
    out << "RADCKPT1\n{\"version\": 1, \"model_config\": ";
  }
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);

  ModelConfig cfg = small_config();
  Rng rng(5);
  ModelParams params = ModelParams::init(cfg, rng);
  save_checkpoint(path, params, cfg);
  std::string bytes = slurp(path);
  bytes.resize(bytes.size() - 16);  // sever the payload tail
  {
    std::ofstream out(path, std::ios::binary);
    out << bytes;
  }
  CHECK_THROWS_AS(load_checkpoint(path), ParseError);

  CHECK_THROWS_AS(load_checkpoint(temp_path("rad_ckpt_missing.bin")), ParseError);
  std::filesystem::remove(path);
}

TEST_CASE("save_checkpoint leaves no temp file behind") {
  ModelConfig cfg = small_config();
  Rng rng(11);
  ModelParams params = ModelParams::init(cfg, rng);
  const std::string path = temp_path("rad_ckpt_atomic.bin");
  save_checkpoint(path, params, cfg);
  CHECK(std::filesystem::exists(path));
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
  std::filesystem::remove(path);
}
