// SPDX-License-Identifier: Apache-2.0
#include "scandiff/encodings.hpp"

#include <cmath>

namespace scandiff::encodings {

namespace {
std::vector<float> fourier_n(double value, int num_freq, double base) {
  std::vector<float> out(2 * num_freq);
  for (int k = 0; k < num_freq; ++k) {
    const double w = std::pow(base, -static_cast<double>(k) / num_freq);
    out[2 * k + 0] = static_cast<float>(std::sin(value * w));
    out[2 * k + 1] = static_cast<float>(std::cos(value * w));
  }
  return out;
}
}  // namespace

std::vector<float> fourier_encode(double value, const EncoderConfig& cfg) {
  if (!std::isfinite(value)) throw ContractError("fourier_encode: non-finite input");
  return fourier_n(value, cfg.num_frequencies, cfg.base);
}

std::vector<float> cyclical_encode(double phi, const EncoderConfig& cfg) {
  if (!std::isfinite(phi)) throw ContractError("cyclical_encode: non-finite input");
  if (cfg.num_frequencies % 2 != 0)
    throw ContractError("cyclical_encode: num_frequencies must be even");
  // Half the frequency budget per lifted component keeps the output at
  // embed_dim like every other scalar encoding.
  const int half = cfg.num_frequencies / 2;
  // Wrap first and quantize the lift through float so phi and phi + 2*pi*k
  // produce bit-identical encodings.
  const double w = wrap_angle(phi);
  const double s = static_cast<float>(std::sin(w));
  const double cv = static_cast<float>(std::cos(w));
  std::vector<float> out = fourier_n(s, half, cfg.base);
  std::vector<float> c = fourier_n(cv, half, cfg.base);
  out.insert(out.end(), c.begin(), c.end());
  return out;
}

ConditionEncoding encode_condition(const objects::Condition& kappa, double t,
                                   const EncoderConfig& cfg,
                                   const std::vector<float>& null_embedding) {
  ConditionEncoding enc;
  enc.time = fourier_encode(t, cfg);
  if (kappa.is_null) {
    if (static_cast<int>(null_embedding.size()) != cfg.cond_dim())
      throw ContractError("encode_condition: null embedding width mismatch");
    enc.cond = null_embedding;
    enc.used_null = true;
    return enc;
  }
  enc.cond = cyclical_encode(kappa.phi, cfg);
  for (double v : {kappa.d, kappa.z, kappa.l, kappa.w, kappa.h}) {
    std::vector<float> f = fourier_encode(v, cfg);
    enc.cond.insert(enc.cond.end(), f.begin(), f.end());
  }
  return enc;
}

}  // namespace scandiff::encodings
