// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <vector>

#include "scandiff/denoiser.hpp"
#include "scandiff/objects.hpp"
#include "scandiff/tensor.hpp"

namespace scandiff::diffusion {

// Precomputed beta/alpha tables, index 1..T; index 0 is the t=0
// convention (alpha_bar[0] = 1, forward_noise at t=0 is the identity).
struct DiffusionSchedule {
  int T = 0;
  std::vector<double> beta;       // [0..T], beta[0] = 0
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // cumulative product
  std::vector<double> sigma;      // posterior std, sigma[1] = 0 by convention
};

DiffusionSchedule make_schedule(int T, double beta_min = 3.5e-5,
                                double beta_max = 0.007);

struct SamplerConfig {
  int inference_steps = 500;
  double lambda = 1.0;  // guidance strength
  uint64_t seed = 0;
  bool clamp_intensity = true;
  // With lambda == 1 the unconditional pass cancels; when enabled the
  // sampler makes a single conditional call per step.
  bool skip_uncond_when_lambda_one = true;
};

// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, elementwise over N x 4.
std::vector<float> forward_noise(const std::vector<float>& x0, int t,
                                 const std::vector<float>& eps,
                                 const DiffusionSchedule& sched);

// eps-predictor interface: x_t flat [n x 4] -> predicted noise, same
// layout. `null_cond` requests the unconditional pass.
using NoisePredictor = std::function<std::vector<float>(
    const std::vector<float>& x_t, int n_points, double t,
    const objects::Condition& kappa, bool null_cond)>;

NoisePredictor make_denoiser_predictor(const denoiser::DenoiserWeights& w);

// Classifier-free guidance combination:
// eps_uncond + lambda * (eps_cond - eps_uncond).
std::vector<float> guided_noise(const NoisePredictor& pred,
                                const std::vector<float>& x_t, int n_points,
                                double t, const objects::Condition& kappa,
                                double lambda, bool skip_uncond_when_lambda_one = true,
                                int* denoiser_calls = nullptr);

// Full reverse chain from standard-normal noise; strided timestep
// subsequence when cfg.inference_steps < sched.T; no noise at the final
// step; intensity clamped to [0,1] only at the end.
objects::PointSet sample(const NoisePredictor& pred, const objects::Condition& kappa,
                         int n_points, const DiffusionSchedule& sched,
                         const SamplerConfig& cfg, int* denoiser_calls = nullptr);

// Masked-MSE denoising loss over a padded batch. Per sample: t uniform
// in [1,T], fresh Gaussian noise, condition dropped to null with
// probability cond_dropout_p. Returns the batch-mean loss tensor;
// null_used (optional) reports which samples ran unconditioned.
tensor::Tensor training_loss(tensor::Tape& tape, const objects::PaddedBatch& batch,
                             const std::vector<objects::Condition>& kappas,
                             const denoiser::DenoiserWeights& w,
                             const DiffusionSchedule& sched, Rng& rng,
                             double cond_dropout_p,
                             std::vector<char>* null_used = nullptr);

// The evenly strided inference subsequence (ascending, always ends at T).
std::vector<int> inference_timesteps(int T, int inference_steps);

}  // namespace scandiff::diffusion
