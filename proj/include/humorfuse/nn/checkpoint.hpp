#pragma once

// Checkpoint files: one line of JSON metadata (format, version, model kind,
// config, seed, epoch, dev AUC and the tensor table) followed by the tensors
// as little-endian float32, in table order, row-major.

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "humorfuse/error.hpp"
#include "humorfuse/nn/tape.hpp"

namespace humorfuse::nn {

inline constexpr const char* kCheckpointFormat = "humorfuse-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct CheckpointInfo {
  std::string model;  ///< "gru" or "vfmm"
  nlohmann::json config;
  std::uint64_t seed = 0;
  int epoch = 0;
  double dev_auc = 0.0;
};

inline void save_checkpoint(const std::string& path, const CheckpointInfo& info, const std::vector<Parameter*>& params) {
  nlohmann::json header{{"format", kCheckpointFormat}, {"version", kCheckpointVersion}, {"model", info.model},
                        {"config", info.config},       {"seed", info.seed},               {"epoch", info.epoch},
                        {"dev_auc", info.dev_auc}};
  auto& tensors = header["tensors"] = nlohmann::json::array();
  for (const auto* p : params) tensors.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()}});
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError(path + ": cannot open for writing");
  out << header.dump() << '\n';
  for (const auto* p : params)
    for (Eigen::Index r = 0; r < p->value.rows(); ++r)
      for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
        auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(p->value(r, c)));
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        out.write(reinterpret_cast<const char*>(&bits), 4);
      }
}

struct LoadedCheckpoint {
  CheckpointInfo info;
  std::map<std::string, Matrix> tensors;
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError(path + ": cannot open file");
  std::string line;
  std::getline(in, line);
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": malformed checkpoint header: " + e.what());
  }
  if (header.value("format", "") != kCheckpointFormat) throw ValidationError(path + ": not a checkpoint file");
  if (header.value("version", -1) != kCheckpointVersion)
    throw ValidationError(path + ": checkpoint schema version " + std::to_string(header.value("version", -1)) +
                          " is not supported (expected " + std::to_string(kCheckpointVersion) + ")");
  LoadedCheckpoint out;
  out.info.model = header.at("model").get<std::string>();
  out.info.config = header.at("config");
  out.info.seed = header.at("seed").get<std::uint64_t>();
  out.info.epoch = header.at("epoch").get<int>();
  out.info.dev_auc = header.at("dev_auc").get<double>();
  for (const auto& t : header.at("tensors")) {
    Matrix m(t.at("rows").get<Eigen::Index>(), t.at("cols").get<Eigen::Index>());
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        std::uint32_t bits = 0;
        in.read(reinterpret_cast<char*>(&bits), 4);
        if (!in) throw ValidationError(path + ": truncated tensor data");
        if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
        m(r, c) = static_cast<double>(std::bit_cast<float>(bits));
      }
    out.tensors.emplace(t.at("name").get<std::string>(), std::move(m));
  }
  return out;
}

/// Copies tensors into parameters by name; every parameter must be present with its shape.
inline void assign_tensors(const std::map<std::string, Matrix>& tensors, const std::vector<Parameter*>& params) {
  for (auto* p : params) {
    auto it = tensors.find(p->name);
    if (it == tensors.end()) throw ValidationError("checkpoint lacks tensor '" + p->name + "'");
    if (it->second.rows() != p->value.rows() || it->second.cols() != p->value.cols())
      throw ValidationError("checkpoint tensor '" + p->name + "' has the wrong shape");
    p->value = it->second;
  }
}

}  // namespace humorfuse::nn
