// SPDX-License-Identifier: Apache-2.0
#include "scandiff/diffusion.hpp"

#include <algorithm>
#include <cmath>

namespace scandiff::diffusion {

DiffusionSchedule make_schedule(int T, double beta_min, double beta_max) {
  if (T < 1) throw ContractError("make_schedule: T must be >= 1");
  if (!(0 < beta_min && beta_min < beta_max && beta_max < 1))
    throw ContractError("make_schedule: need 0 < beta_min < beta_max < 1");
  DiffusionSchedule s;
  s.T = T;
  s.beta.assign(T + 1, 0.0);
  s.alpha.assign(T + 1, 1.0);
  s.alpha_bar.assign(T + 1, 1.0);
  s.sigma.assign(T + 1, 0.0);
  for (int t = 1; t <= T; ++t) {
    s.beta[t] = T == 1 ? beta_min
                       : beta_min + (beta_max - beta_min) * (t - 1) / double(T - 1);
    s.alpha[t] = 1.0 - s.beta[t];
    s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha[t];
    // sigma_q^2(t) = (1 - alpha_t)(1 - abar_{t-1}) / (1 - abar_t)
    s.sigma[t] = std::sqrt((1.0 - s.alpha[t]) * (1.0 - s.alpha_bar[t - 1]) /
                           (1.0 - s.alpha_bar[t]));
  }
  return s;
}

std::vector<float> forward_noise(const std::vector<float>& x0, int t,
                                 const std::vector<float>& eps,
                                 const DiffusionSchedule& sched) {
  if (t < 0 || t > sched.T) throw ContractError("forward_noise: t out of range");
  if (x0.size() != eps.size()) throw ContractError("forward_noise: size mismatch");
  const double a = std::sqrt(sched.alpha_bar[t]);
  const double b = std::sqrt(1.0 - sched.alpha_bar[t]);
  std::vector<float> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i)
    out[i] = static_cast<float>(a * x0[i] + b * eps[i]);
  return out;
}

NoisePredictor make_denoiser_predictor(const denoiser::DenoiserWeights& w) {
  return [&w](const std::vector<float>& x_t, int n_points, double t,
              const objects::Condition& kappa, bool null_cond) {
    objects::Condition k = kappa;
    if (null_cond) k.is_null = true;
    return denoiser::predict_noise_values(x_t, n_points, t, k, w);
  };
}

std::vector<float> guided_noise(const NoisePredictor& pred,
                                const std::vector<float>& x_t, int n_points,
                                double t, const objects::Condition& kappa,
                                double lambda, bool skip_uncond_when_lambda_one,
                                int* denoiser_calls) {
  if (lambda < 0) throw ContractError("guided_noise: lambda must be >= 0");
  if (lambda == 1.0 && skip_uncond_when_lambda_one) {
    if (denoiser_calls) *denoiser_calls += 1;
    return pred(x_t, n_points, t, kappa, false);
  }
  std::vector<float> u = pred(x_t, n_points, t, kappa, true);
  std::vector<float> c = pred(x_t, n_points, t, kappa, false);
  if (denoiser_calls) *denoiser_calls += 2;
  std::vector<float> out(u.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    out[i] = static_cast<float>(u[i] + lambda * (c[i] - u[i]));
  return out;
}

std::vector<int> inference_timesteps(int T, int inference_steps) {
  if (inference_steps < 1 || inference_steps > T)
    throw ContractError("inference_timesteps: need 1 <= steps <= T");
  std::vector<int> ts(inference_steps);
  for (int i = 0; i < inference_steps; ++i) {
    // evenly strided, last entry exactly T
    ts[i] = static_cast<int>(std::llround(double(i + 1) * T / inference_steps));
    ts[i] = std::max(1, std::min(T, ts[i]));
  }
  ts.erase(std::unique(ts.begin(), ts.end()), ts.end());
  return ts;
}

objects::PointSet sample(const NoisePredictor& pred, const objects::Condition& kappa,
                         int n_points, const DiffusionSchedule& sched,
                         const SamplerConfig& cfg, int* denoiser_calls) {
  if (n_points < 1) throw ContractError("sample: n_points must be >= 1");
  if (cfg.inference_steps > sched.T)
    throw ContractError("sample: inference_steps exceeds schedule length");

  Rng rng(cfg.seed);
  std::vector<float> x(static_cast<std::size_t>(n_points) * 4);
  for (float& v : x) v = rng.normalf();

  const std::vector<int> ts = inference_timesteps(sched.T, cfg.inference_steps);
  for (std::size_t si = ts.size(); si-- > 0;) {
    const int t = ts[si];
    const int t_prev = si == 0 ? 0 : ts[si - 1];
    const std::vector<float> eps =
        guided_noise(pred, x, n_points, t, kappa, cfg.lambda,
                     cfg.skip_uncond_when_lambda_one, denoiser_calls);
    // effective one-step alpha over the (possibly strided) subsequence
    const double abar_t = sched.alpha_bar[t];
    const double abar_prev = sched.alpha_bar[t_prev];
    const double alpha_eff = abar_t / abar_prev;
    const double sigma =
        si == 0 ? 0.0
                : std::sqrt((1.0 - alpha_eff) * (1.0 - abar_prev) / (1.0 - abar_t));
    const double c1 = 1.0 / std::sqrt(alpha_eff);
    const double c2 = (1.0 - alpha_eff) / std::sqrt(1.0 - abar_t);
    for (std::size_t i = 0; i < x.size(); ++i) {
      double v = c1 * (x[i] - c2 * eps[i]);
      if (sigma > 0) v += sigma * rng.normal();
      x[i] = static_cast<float>(v);
    }
  }

  objects::PointSet out;
  out.points.reserve(static_cast<std::size_t>(n_points));
  for (int i = 0; i < n_points; ++i) {
    objects::Point p;
    p.x = x[i * 4 + 0];
    p.y = x[i * 4 + 1];
    p.z = x[i * 4 + 2];
    p.i = cfg.clamp_intensity ? std::clamp<double>(x[i * 4 + 3], 0.0, 1.0)
                              : x[i * 4 + 3];
    out.points.push_back(p);
  }
  return out;
}

tensor::Tensor training_loss(tensor::Tape& tape, const objects::PaddedBatch& batch,
                             const std::vector<objects::Condition>& kappas,
                             const denoiser::DenoiserWeights& w,
                             const DiffusionSchedule& sched, Rng& rng,
                             double cond_dropout_p, std::vector<char>* null_used) {
  const std::size_t bsz = batch.data.size();
  if (bsz == 0 || kappas.size() != bsz)
    throw ContractError("training_loss: batch/condition size mismatch");
  const int n = static_cast<int>(batch.max_len);
  if (null_used) null_used->assign(bsz, 0);

  std::vector<tensor::Tensor> losses;
  for (std::size_t s = 0; s < bsz; ++s) {
    const int t = 1 + static_cast<int>(rng.uniform_int(static_cast<uint64_t>(sched.T)));
    std::vector<float> eps(batch.data[s].size());
    for (float& e : eps) e = rng.normalf();
    std::vector<float> x_t = forward_noise(batch.data[s], t, eps, sched);

    objects::Condition k = kappas[s];
    if (rng.uniform() < cond_dropout_p) {
      k.is_null = true;
      if (null_used) (*null_used)[s] = 1;
    }

    tensor::Tensor x = tensor::Tensor::from_floats({n, 4}, x_t);
    tensor::Tensor target = tensor::Tensor::from_floats({n, 4}, eps);
    tensor::Tensor eps_hat = denoiser::predict_noise(tape, x, t, k, w, batch.mask[s]);
    losses.push_back(tape.masked_mse(eps_hat, target, batch.mask[s]));
  }
  tensor::Tensor total = losses[0];
  for (std::size_t s = 1; s < losses.size(); ++s) total = tape.add(total, losses[s]);
  return tape.scale(total, tensor::real(1) / static_cast<tensor::real>(bsz));
}

}  // namespace scandiff::diffusion
