#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "resp/model.hpp"
#include "resp/training.hpp"

namespace resp {

// Run configuration file: `key = value` lines grouped under [section] headers.
// '#' starts a comment. Sections and keys:
//
//   [data]     manifest
//   [output]   dir
//   [encoder]  depth cross_per_block self_per_block n_latents model_dim fourier_bands
//              max_freq_hz ffn_expansion dropout out_dim
//   [model]    fusion window_seconds sample_rate_hz bandpass
//   [train]    epochs batch_size lr warmup_epochs cooldown_epochs label_smoothing seed
//              checkpoint_every
//   [augment]  polarity noise mask mask_fraction noise_k     (each "lo, hi")
//
// Omitted keys keep their defaults. Unknown sections or keys, duplicates and malformed
// values are ConfigErrors naming the offending key.

struct RunConfig {
    ModelSpec model;
    TrainConfig train;
    std::string manifest;
    std::string out_dir = "run";

    void validate() const;
    bool operator==(const RunConfig&) const = default;
};

RunConfig parse_run_config(std::string_view text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Every key, in the documented order; parses back to an equal RunConfig.
std::string serialize_run_config(const RunConfig& cfg);

}  // namespace resp
