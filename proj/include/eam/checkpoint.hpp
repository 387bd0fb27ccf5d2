#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "eam/multiscale.hpp"

namespace eam {

// EAMC checkpoint layout (all integers little-endian):
//   "EAMC" | u32 version | u32 scalar_width | u32 config_len | config text |
//   u32 tensor_count | { u32 name_len, name, u32 rank, u64 extents[rank],
//                        raw little-endian values } ...
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

inline void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 8);
}

inline std::uint32_t get_u32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw IoError(path + ": truncated checkpoint");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

inline std::uint64_t get_u64(std::istream& in, const std::string& path) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  if (!in) throw IoError(path + ": truncated checkpoint");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

template <class S>
void put_scalar(std::ostream& out, S v) {
  if constexpr (sizeof(S) == 4) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
  } else {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
  }
}

template <class S>
S get_scalar(std::istream& in, const std::string& path) {
  S v;
  if constexpr (sizeof(S) == 4) {
    const std::uint32_t bits = get_u32(in, path);
    std::memcpy(&v, &bits, 4);
  } else {
    const std::uint64_t bits = get_u64(in, path);
    std::memcpy(&v, &bits, 8);
  }
  return v;
}

}  // namespace detail

inline std::string serialize_model_config(const ModelConfig& cfg) {
  std::ostringstream os;
  os << "aspp_branch_width=" << cfg.aspp_branch_width << "\n"
     << "aspp_out=" << cfg.aspp_out << "\n"
     << "c_prime=" << cfg.c_prime << "\n"
     << "classes=" << cfg.classes << "\n"
     << "include_conv_features=" << (cfg.include_conv_features ? 1 : 0) << "\n"
     << "input_extent=" << cfg.input_extent << "\n"
     << "mlp_reduction=" << cfg.mlp_reduction << "\n"
     << "stage_channels=" << cfg.stage_channels[0] << "," << cfg.stage_channels[1] << ","
     << cfg.stage_channels[2] << "," << cfg.stage_channels[3] << "\n"
     << "strategy=" << to_string(cfg.strategy) << "\n"
     << "variant=" << to_string(cfg.variant) << "\n";
  return os.str();
}

inline ModelConfig parse_model_config(const std::string& text) {
  ModelConfig cfg;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw IoError("bad config line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "aspp_branch_width") cfg.aspp_branch_width = std::stoi(value);
    else if (key == "aspp_out") cfg.aspp_out = std::stoi(value);
    else if (key == "c_prime") cfg.c_prime = std::stoi(value);
    else if (key == "classes") cfg.classes = std::stoi(value);
    else if (key == "include_conv_features") cfg.include_conv_features = std::stoi(value) != 0;
    else if (key == "input_extent") cfg.input_extent = std::stoi(value);
    else if (key == "mlp_reduction") cfg.mlp_reduction = std::stoi(value);
    else if (key == "stage_channels") {
      std::istringstream cs(value);
      std::string tok;
      for (int i = 0; i < 4; ++i) {
        if (!std::getline(cs, tok, ',')) throw IoError("bad stage_channels '" + value + "'");
        cfg.stage_channels[static_cast<size_t>(i)] = std::stoi(tok);
      }
    } else if (key == "strategy") cfg.strategy = parse_strategy(value);
    else if (key == "variant") cfg.variant = parse_variant(value);
    else throw IoError("unknown config key '" + key + "'");
  }
  return cfg;
}

template <class S>
void save_checkpoint(const EamClassifier<S>& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path + ": cannot open for writing");
  out.write("EAMC", 4);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, sizeof(S));
  const std::string cfg = serialize_model_config(model.config());
  detail::put_u32(out, static_cast<std::uint32_t>(cfg.size()));
  out.write(cfg.data(), static_cast<std::streamsize>(cfg.size()));
  detail::put_u32(out, static_cast<std::uint32_t>(model.params().size()));
  for (const auto& e : model.params().entries()) {
    detail::put_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    detail::put_u32(out, 4);
    const Shape4& s = e.var->value.shape();
    detail::put_u64(out, static_cast<std::uint64_t>(s.n));
    detail::put_u64(out, static_cast<std::uint64_t>(s.c));
    detail::put_u64(out, static_cast<std::uint64_t>(s.h));
    detail::put_u64(out, static_cast<std::uint64_t>(s.w));
    for (Index i = 0; i < e.var->value.size(); ++i)
      detail::put_scalar(out, e.var->value.data()[i]);
  }
  if (!out) throw IoError(path + ": write failed");
}

/// Rebuilds the model named in the checkpoint and restores every tensor
/// bit-exactly. `expected_variant`, when nonempty, must match the stored
/// attention variant.
template <class S>
std::unique_ptr<EamClassifier<S>> load_checkpoint(const std::string& path,
                                                  const std::string& expected_variant = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path + ": cannot open");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string(magic, 4) != "EAMC") throw IoError(path + ": not an EAMC file");
  const std::uint32_t version = detail::get_u32(in, path);
  if (version != kCheckpointVersion)
    throw IoError(path + ": checkpoint format version " + std::to_string(version) +
                  "; this build reads version " + std::to_string(kCheckpointVersion) +
                  " (migration required)");
  const std::uint32_t width = detail::get_u32(in, path);
  if (width != sizeof(S))
    throw IoError(path + ": stores " + std::to_string(width) + "-byte scalars; this build uses " +
                  std::to_string(sizeof(S)) + "-byte scalars");
  const std::uint32_t cfg_len = detail::get_u32(in, path);
  std::string cfg_text(cfg_len, '\0');
  in.read(cfg_text.data(), cfg_len);
  if (!in) throw IoError(path + ": truncated checkpoint");
  const ModelConfig cfg = parse_model_config(cfg_text);
  if (!expected_variant.empty() && expected_variant != to_string(cfg.variant))
    throw IoError(path + ": config mismatch: checkpoint has variant '" +
                  std::string(to_string(cfg.variant)) + "' but '" + expected_variant +
                  "' was requested");

  auto model = std::make_unique<EamClassifier<S>>(cfg, 0);
  const std::uint32_t count = detail::get_u32(in, path);
  if (count != model->params().size())
    throw IoError(path + ": checkpoint has " + std::to_string(count) + " tensors, model needs " +
                  std::to_string(model->params().size()));
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::uint32_t name_len = detail::get_u32(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw IoError(path + ": truncated checkpoint");
    const std::uint32_t rank = detail::get_u32(in, path);
    if (rank != 4) throw IoError(path + ": unsupported tensor rank " + std::to_string(rank));
    Shape4 s;
    s.n = static_cast<Index>(detail::get_u64(in, path));
    s.c = static_cast<Index>(detail::get_u64(in, path));
    s.h = static_cast<Index>(detail::get_u64(in, path));
    s.w = static_cast<Index>(detail::get_u64(in, path));
    if (!model->params().contains(name)) throw IoError(path + ": unknown tensor '" + name + "'");
    Tensor4<S>& dst = model->params().at(name)->value;
    if (!(dst.shape() == s))
      throw IoError(path + ": tensor '" + name + "' has shape " + s.str() + ", model expects " +
                    dst.shape().str());
    for (Index i = 0; i < dst.size(); ++i) dst.data()[i] = detail::get_scalar<S>(in, path);
  }
  return model;
}

}  // namespace eam
