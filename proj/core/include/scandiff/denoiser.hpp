// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "scandiff/encodings.hpp"
#include "scandiff/objects.hpp"
#include "scandiff/tensor.hpp"

namespace scandiff::denoiser {

enum class Variant {
  kDit3dAdalnZero,   // modulation from concat(time, cond), zero-init gates
  kPixartAdalnSingle,  // shared time-only modulation, cross-attn after scaled self-attn
  kLogen,            // cross-attn fused into the self-attn branch, scale after both
};

Variant variant_from_string(const std::string& s);
std::string variant_to_string(Variant v);

struct DenoiserConfig {
  Variant variant = Variant::kLogen;
  int depth = 2;
  int heads = 2;
  int width = 32;
  int max_points = 128;
  int mlp_ratio = 4;
  encodings::EncoderConfig enc;

  void validate() const;
  std::string to_json() const;
  static DenoiserConfig from_json(const std::string& json);
};

// XS reference shape: 12 blocks, 3 heads, width 192.
DenoiserConfig xs_config(Variant v);

struct DenoiserWeights {
  DenoiserConfig cfg;
  tensor::NamedTensors params;

  tensor::Tensor get(const std::string& name) const;
  std::size_t param_count() const { return params.total_params(); }
  std::vector<float> null_embedding() const;
};

DenoiserWeights init_weights(const DenoiserConfig& cfg, Rng& rng);

void save_weights(const std::string& path, const DenoiserWeights& w,
                  const std::string& extra_json = "{}");
DenoiserWeights load_weights(const std::string& path, std::string* extra_json = nullptr);

// Per-point linear projection plus the learned positional table rows.
tensor::Tensor embed_points(tensor::Tape& tape, const tensor::Tensor& x,
                            const DenoiserWeights& w);

// One transformer block of the configured variant.
tensor::Tensor block_forward(tensor::Tape& tape, const tensor::Tensor& h,
                             const tensor::Tensor& cond_vec,
                             const tensor::Tensor& time_vec,
                             const std::vector<char>& mask,
                             const DenoiserWeights& w, int block);

// Full epsilon predictor: embed -> blocks -> final LN -> linear head.
// x_t: [N x 4]; padded slots (mask 0) are excluded from attention and
// their outputs carry no contract.
tensor::Tensor predict_noise(tensor::Tape& tape, const tensor::Tensor& x_t,
                             double t, const objects::Condition& kappa,
                             const DenoiserWeights& w,
                             const std::vector<char>& mask);

// Convenience wrapper over plain buffers (inference path).
std::vector<float> predict_noise_values(const std::vector<float>& x_t, int n_points,
                                        double t, const objects::Condition& kappa,
                                        const DenoiserWeights& w);

}  // namespace scandiff::denoiser
