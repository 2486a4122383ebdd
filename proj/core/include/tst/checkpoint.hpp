#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tst/model.hpp"

namespace tst {

// Binary layout, all integers little-endian:
//   "TSTM" | u8 version (=1) | u32 L | L bytes of key=value\n text | parameters as f64,
//   in for_each_param order | u64 CRC-64/XZ of every preceding byte.
// The text block holds the model.* keys written by config_to_text plus any caller
// metadata (data pipeline settings, normalizer statistics).
inline constexpr std::uint8_t kCheckpointVersion = 1;

using Metadata = std::map<std::string, std::string>;

struct LoadedModel {
    ModelConfig config;
    ModelParams params;
    Metadata metadata;  // every non-model.* key from the text block
};

std::uint64_t crc64(std::span<const std::uint8_t> bytes);

std::string config_to_text(const ModelConfig& config, const Metadata& metadata = {});
ModelConfig config_from_text(const std::string& text, Metadata* metadata = nullptr);

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params, const ModelConfig& config,
                                            const Metadata& metadata = {});
LoadedModel decode_checkpoint(std::span<const std::uint8_t> bytes);

// Writes to "<path>.tmp", then renames over path.
void save_params(const ModelParams& params, const ModelConfig& config,
                 const std::filesystem::path& path, const Metadata& metadata = {});
LoadedModel load_params(const std::filesystem::path& path);

// Same temp-then-rename write for any text artifact.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace tst
