#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "nicu/nn/network.hpp"

namespace nicu::nn {

// Checkpoint file, all integers little-endian:
//
//   "NNCK"  u32 version (1)
//   u32 n_layers, then per layer:
//     u8 kind, i32 in_channels, out_channels, kernel_h, kernel_w,
//     stride_h, stride_w, pad_h, pad_w, f64 scale_h, scale_w
//   u32 n_meta, then per entry: u32 len, key bytes, u32 len, value bytes
//   u32 n_params, then per parameter:
//     u32 len, name bytes, u8 trainable, u32 rank, u64 dims[rank],
//     f64 values[prod(dims)] (row-major)
//
// Metadata carries free-form strings (class names, normalisation constants).
using Metadata = std::map<std::string, std::string>;

struct Checkpoint {
  Network<double> network;
  Metadata meta;
};

std::string encode_checkpoint(const Network<double>& net, const Metadata& meta = {});
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Network<double>& net,
                     const Metadata& meta = {});
Checkpoint load_checkpoint(const std::filesystem::path& path);

// FNV-1a over parameter names, shapes and value bytes.
std::uint64_t parameter_hash(const Network<double>& net);

}  // namespace nicu::nn
