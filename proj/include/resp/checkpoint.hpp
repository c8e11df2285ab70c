#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "resp/model.hpp"

namespace resp {

// Checkpoint layout, all integers and reals little-endian:
//
//   magic        8 bytes  "RESPCKPT"
//   version      u32      1
//   encoder      u64 depth, cross_per_block, self_per_block, n_latents, model_dim,
//                    fourier_bands, ffn_expansion, out_dim
//                f64 max_freq_hz, dropout
//   model        u32 fusion variant, u64 n_classes, u64 n_windows, u8 bandpass
//                f64 window_seconds, sample_rate_hz
//   tensors      u64 count, then per tensor:
//                u32 name length, name bytes, u32 rank, u64 dims[rank], f64 values (row-major)
//
// Tensors appear in Model::for_each_parameter order and must match the rebuilt model
// by name and shape. Anything else is rejected with CheckpointError.

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string encode_checkpoint(const Model& model);
Model decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const Model& model);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace resp
