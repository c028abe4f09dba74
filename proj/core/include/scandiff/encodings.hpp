// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "scandiff/common.hpp"
#include "scandiff/objects.hpp"

namespace scandiff::encodings {

struct EncoderConfig {
  int num_frequencies = 8;
  double base = 1000.0;  // geometric frequency base
  int embed_dim() const { return 2 * num_frequencies; }
  int cond_dim() const { return 6 * embed_dim(); }
};

// Interleaved sin/cos at geometric frequencies w_k = base^(-k/num_frequencies).
std::vector<float> fourier_encode(double value, const EncoderConfig& cfg);

// sin/cos lift of the angle followed by Fourier features of each, so the
// result is exactly 2*pi-periodic.
std::vector<float> cyclical_encode(double phi, const EncoderConfig& cfg);

struct ConditionEncoding {
  std::vector<float> cond;   // cond_dim, or the null embedding verbatim
  std::vector<float> time;   // embed_dim
  bool used_null = false;
};

// Concatenated [cyc(phi), F(d), F(z), F(l), F(w), F(h)] plus F(t). When
// kappa.is_null the condition part is the caller-supplied null embedding.
ConditionEncoding encode_condition(const objects::Condition& kappa, double t,
                                   const EncoderConfig& cfg,
                                   const std::vector<float>& null_embedding);

}  // namespace scandiff::encodings
