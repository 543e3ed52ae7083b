#include "rad/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "rad/errors.hpp"
#include "rad/rng.hpp"

namespace rad {

namespace {

constexpr char kMagic[] = "RADCKPT1";
constexpr int kFormatVersion = 1;

void put_le_double(std::string& out, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

double get_le_double(const char* p) {
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(p[b])) << (8 * b);
  return std::bit_cast<double>(bits);
}

nlohmann::json model_config_json(const ModelConfig& c) {
  return {{"vocab_size", c.vocab_size},   {"embed_dim", c.embed_dim},
          {"n_layers", c.n_layers},       {"n_heads", c.n_heads},
          {"ff_dim", c.ff_dim},           {"max_positions", c.max_positions},
          {"dropout_rate", c.dropout_rate}};
}

ModelConfig model_config_from(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.n_layers = j.at("n_layers").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.ff_dim = j.at("ff_dim").get<std::size_t>();
  c.max_positions = j.at("max_positions").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  return c;
}

nlohmann::json ra_config_json(const RaConfig& c) {
  return {{"embed_dim", c.embed_dim}, {"n_heads", c.n_heads}, {"hidden_dim", c.hidden_dim}};
}

RaConfig ra_config_from(const nlohmann::json& j) {
  RaConfig c;
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.n_heads = j.at("n_heads").get<std::size_t>();
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const ModelConfig& config, const RaParams* ra,
                     const RaConfig* ra_config) {
  if ((ra == nullptr) != (ra_config == nullptr))
    throw ContractError("save_checkpoint: ra params and ra config go together");

  nlohmann::json directory = nlohmann::json::array();
  std::string payload;
  std::size_t offset = 0;
  auto emit = [&](const std::string& name, const Tensor& t) {
    directory.push_back({{"name", name},
                         {"shape", t.shape()},
                         {"offset", offset},
                         {"count", t.numel()}});
    for (double v : t.values()) put_le_double(payload, v);
    offset += t.numel() * 8;
  };
  params.for_each([&](const std::string& name, const Tensor& t) { emit(name, t); });
  if (ra)
    ra->for_each([&](const std::string& name, const Tensor& t) { emit(name, t); });

  nlohmann::json header = {{"version", kFormatVersion},
                           {"model_config", model_config_json(config)},
                           {"tensors", directory}};
  if (ra_config) header["ra_config"] = ra_config_json(*ra_config);

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("save_checkpoint: cannot open '" + tmp + "' for writing");
    out << kMagic << '\n' << header.dump() << '\n' << payload;
    if (!out) throw ParseError("save_checkpoint: write failure on '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw ParseError("save_checkpoint: cannot move '" + tmp + "' to '" + path + "': " +
                     ec.message());
  }
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("load_checkpoint: cannot open '" + path + "'");

  std::string magic;
  if (!std::getline(in, magic) || magic != kMagic)
    throw ParseError("load_checkpoint: '" + path + "' is not a checkpoint file");
  std::string header_line;
  if (!std::getline(in, header_line))
    throw ParseError("load_checkpoint: '" + path + "' is missing its header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("load_checkpoint: bad header: ") + e.what());
  }
  if (header.at("version").get<int>() != kFormatVersion)
    throw ParseError("load_checkpoint: unsupported format version " +
                     header.at("version").dump());

  std::string payload((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());

  LoadedCheckpoint out;
  out.model_config = model_config_from(header.at("model_config"));
  out.model_config.validate();
  Rng scratch(0);
  out.params = ModelParams::init(out.model_config, scratch);
  out.has_ra = header.contains("ra_config");
  if (out.has_ra) {
    out.ra_config = ra_config_from(header.at("ra_config"));
    out.ra_config.validate();
    out.ra_params = RaParams::init(out.ra_config, scratch);
  }

  std::unordered_map<std::string, Tensor> slots;
  out.params.for_each(
      [&](const std::string& name, Tensor& t) { slots.emplace(name, t); });
  if (out.has_ra)
    out.ra_params.for_each(
        [&](const std::string& name, Tensor& t) { slots.emplace(name, t); });

  const auto& directory = header.at("tensors");
  if (directory.size() != slots.size())
    throw ParseError("load_checkpoint: directory lists " +
                     std::to_string(directory.size()) + " tensors, model needs " +
                     std::to_string(slots.size()));
  for (const auto& entry : directory) {
    const std::string name = entry.at("name").get<std::string>();
    auto it = slots.find(name);
    if (it == slots.end())
      throw ParseError("load_checkpoint: unknown tensor '" + name + "'");
    Tensor& t = it->second;
    const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
    if (shape != t.shape())
      throw ParseError("load_checkpoint: tensor '" + name + "' has shape " +
                       shape_str(shape) + ", expected " + shape_str(t.shape()));
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    const std::size_t count = entry.at("count").get<std::size_t>();
    if (count != t.numel() || offset + count * 8 > payload.size())
      throw ParseError("load_checkpoint: tensor '" + name +
                       "' payload is out of bounds");
    std::vector<double>& dst = t.mutable_values();
    for (std::size_t i = 0; i < count; ++i)
      dst[i] = get_le_double(payload.data() + offset + i * 8);
  }
  return out;
}

}  // namespace rad
