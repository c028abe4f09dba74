// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "scandiff/common.hpp"

namespace scandiff::tensor {

// In-memory scalar type. Checkpoints and dataset files stay float32;
// double here keeps the finite-difference gradient harness tight.
using real = double;

// Dense row-major tensor. Copies are shallow; value and grad buffers are
// shared between copies.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor from(std::vector<int> shape, std::vector<real> values,
                     bool requires_grad = false);
  static Tensor from_floats(std::vector<int> shape, const std::vector<float>& values,
                            bool requires_grad = false);
  static Tensor scalar(real v, bool requires_grad = false);
  static Tensor randn(std::vector<int> shape, Rng& rng, real stddev,
                      bool requires_grad = false);

  bool defined() const { return static_cast<bool>(p_); }
  const std::vector<int>& shape() const { return p_->shape; }
  int dim(int i) const { return p_->shape[static_cast<std::size_t>(i)]; }
  int rows() const { return p_->shape.size() == 2 ? p_->shape[0] : 1; }
  int cols() const { return p_->shape.back(); }
  std::size_t size() const { return p_->v.size(); }

  // Copies share storage, so mutation through a const handle is allowed
  // (shared_ptr semantics).
  real* data() const { return p_->v.data(); }
  real* grad() const { return p_->g.data(); }
  std::vector<real>& values() const { return p_->v; }
  std::vector<real>& grads() const { return p_->g; }

  bool requires_grad() const { return p_->requires_grad; }
  void zero_grad() const { std::fill(p_->g.begin(), p_->g.end(), real(0)); }

  real item() const;

  bool same_impl(const Tensor& o) const { return p_ == o.p_; }

 private:
  struct Impl {
    std::vector<int> shape;
    std::vector<real> v;
    std::vector<real> g;
    bool requires_grad = false;
  };
  std::shared_ptr<Impl> p_;
  static Tensor make(std::vector<int> shape, bool requires_grad);
};

// Records operations for reverse-mode differentiation. Single-threaded;
// run independent Tapes for parallel work.
class Tape {
 public:
  // loss must be scalar; traverses recorded ops in reverse, accumulating
  // (+=) into grad buffers. Calling twice without zeroing doubles grads.
  void backward(const Tensor& loss);

  std::size_t num_ops() const { return ops_.size(); }

  // -- elementwise / broadcast --
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, real s);
  Tensor add_scalar(const Tensor& a, real s);
  Tensor gelu(const Tensor& x);
  Tensor silu(const Tensor& x);

  // x: [N x d], v: [d] broadcast across rows
  Tensor add_rowvec(const Tensor& x, const Tensor& v);
  Tensor mul_rowvec(const Tensor& x, const Tensor& v);

  // -- linear algebra --
  Tensor matmul(const Tensor& a, const Tensor& b);     // [m x k] x [k x n]
  Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T, b: [n x k]
  // y = x W + b with x: [N x c_in], W: [c_in x c_out], b: [c_out]
  Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

  // -- normalization / attention pieces --
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                    real eps = 1e-5);
  // Softmax over the last dim. mask (optional, one flag per column)
  // excludes slots from the normalizer; masked outputs are exactly 0.
  Tensor softmax_lastdim(const Tensor& x, const std::vector<char>* mask = nullptr);

  // -- shape --
  Tensor reshape(const Tensor& x, std::vector<int> shape);
  Tensor slice_cols(const Tensor& x, int start, int len);
  Tensor slice_rows(const Tensor& x, int start, int len);
  Tensor concat_cols(const std::vector<Tensor>& xs);
  Tensor concat_flat(const std::vector<Tensor>& xs);  // 1-D concatenation

  // -- reductions --
  Tensor sum(const Tensor& x);
  // mean of squared error over unmasked rows (all channels); rows with
  // mask 0 contribute nothing to value or gradient
  Tensor masked_mse(const Tensor& pred, const Tensor& target,
                    const std::vector<char>& mask);
  // columnwise max over unmasked rows -> [1 x d]
  Tensor masked_colmax(const Tensor& x, const std::vector<char>& mask);
  Tensor log_softmax_vec(const Tensor& x);
  Tensor pick(const Tensor& x, int index);

 private:
  std::vector<std::function<void()>> ops_;
  void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }
};

// Max over components of |analytic - numeric| / max(1e-8, |numeric|),
// numeric being central differences (f(x+h) - f(x-h)) / 2h.
double grad_check(const std::function<Tensor(Tape&)>& f,
                  const std::vector<Tensor>& params, real h = 1e-3);

// -- checkpoint file: [uint64 json_len][json header][float32 blob] --
struct NamedTensors {
  std::vector<std::pair<std::string, Tensor>> items;
  Tensor* find(const std::string& name);
  const Tensor* find(const std::string& name) const;
  std::size_t total_params() const;
};

void save_checkpoint(const std::string& path, const NamedTensors& params,
                     const std::string& config_json,
                     const std::string& extra_json = "{}");
struct Checkpoint {
  NamedTensors params;
  std::string config_json;
  std::string extra_json;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace scandiff::tensor
