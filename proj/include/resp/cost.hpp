#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>

#include "resp/encoder.hpp"
#include "resp/fusion.hpp"
#include "resp/model.hpp"

namespace resp {

// FLOP convention (forward pass, inference mode):
//   matmul m×k by k×n         2·m·k·n
//   bias, residual, scale      1 per element
//   softmax                    5 per element
//   layer norm                 8 per element
//   GELU                       8 per element, gating product 1 per element
//   mean pool over N rows      N·d
//   Fourier features, dropout and the gate's argmax are not counted.

struct HeadSpec {
    FusionVariant variant = FusionVariant::Gate;
    std::size_t n_windows = 3;
    std::size_t n_classes = 3;
};

struct CostReport {
    EncoderConfig config;
    std::size_t input_length = 0;  // samples per window
    std::size_t n_windows = 0;
    std::size_t full_length = 0;
    std::uint64_t params_total = 0;
    std::map<std::string, std::uint64_t> params_by_component;
    std::uint64_t flops_forward = 0;
    std::map<std::string, std::uint64_t> flops_by_component;
};

/// Components: latents, cross_attention, self_attention, ffn, projection, heads, gate.
/// `heads` and `gate` are present only when a head spec is given.
CostReport count_params(const EncoderConfig& cfg);
CostReport count_params(const EncoderConfig& cfg, const HeadSpec& heads);

/// Component a parameter name belongs to under the breakdown above.
std::string param_component(const std::string& name);

std::uint64_t matmul_flops(std::uint64_t m, std::uint64_t k, std::uint64_t n);

/// One encoder pass over `length` samples, split into the same components as the parameters.
std::map<std::string, std::uint64_t> encoder_flops_by_component(const EncoderConfig& cfg, std::size_t length);
std::uint64_t encoder_flops(const EncoderConfig& cfg, std::size_t length);

/// Pipeline FLOPs: n_windows encodings of `window_length` samples ("windows"), one of
/// `full_length` samples ("full_signal", 0 when full_length is 0), the classifier heads
/// with window fusion ("heads"), and the gate ("gate").
CostReport count_flops(const EncoderConfig& cfg, std::size_t window_length, std::size_t n_windows,
                       std::size_t full_length, const HeadSpec& heads);

/// count_flops for a model's own segmentation of the fixed-length input.
CostReport pipeline_cost(const ModelSpec& spec);

}  // namespace resp
