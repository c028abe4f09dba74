// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>

#include "scandiff/dataset.hpp"
#include "scandiff/denoiser.hpp"

namespace scandiff::train {

struct TrainConfig {
  denoiser::DenoiserConfig model;
  std::string cls;  // single class per run; recorded in checkpoints
  int steps = 5000;
  int batch_size = 8;
  double lr = 1e-4;
  double cond_dropout = 0.1;
  int T = 1000;
  uint64_t seed = 0;
  int checkpoint_every = 1000;
};

struct TrainResult {
  double final_loss = 0;
  int steps_run = 0;
  denoiser::DenoiserWeights weights;
};

// Runs the denoising-MSE training loop in `out_dir`:
//  - loss.csv with one "step,loss" line per step
//  - ckpt_NNNNNN.ckpt (float32) every checkpoint_every steps + model.ckpt
//  - resume.bin, a full-precision snapshot (weights, optimizer moments,
//    RNG state) so `resume = true` continues bit-for-bit
// A non-finite loss dumps the offending batch to nan_batch.json and
// aborts with an internal error.
TrainResult train(const dataset::Dataset& ds, const TrainConfig& cfg,
                  const std::string& out_dir, bool resume = false,
                  const std::function<void(int, double)>& on_step = {});

}  // namespace scandiff::train
