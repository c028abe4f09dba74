// SPDX-License-Identifier: Apache-2.0
#include "scandiff/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"

namespace scandiff::tensor {

namespace {
std::size_t numel(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ContractError("tensor: non-positive dimension");
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw ContractError(std::string(op) + ": shape mismatch");
}
}  // namespace

Tensor Tensor::make(std::vector<int> shape, bool requires_grad) {
  Tensor t;
  t.p_ = std::make_shared<Impl>();
  const std::size_t n = numel(shape);
  t.p_->shape = std::move(shape);
  t.p_->v.assign(n, real(0));
  t.p_->g.assign(n, real(0));
  t.p_->requires_grad = requires_grad;
  return t;
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
  return make(std::move(shape), requires_grad);
}

Tensor Tensor::from(std::vector<int> shape, std::vector<real> values, bool requires_grad) {
  Tensor t = make(std::move(shape), requires_grad);
  if (values.size() != t.size()) throw ContractError("Tensor::from: size mismatch");
  t.p_->v = std::move(values);
  return t;
}

Tensor Tensor::from_floats(std::vector<int> shape, const std::vector<float>& values,
                           bool requires_grad) {
  std::vector<real> v(values.begin(), values.end());
  return from(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::scalar(real v, bool requires_grad) {
  return from({1}, {v}, requires_grad);
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, real stddev, bool requires_grad) {
  Tensor t = make(std::move(shape), requires_grad);
  for (real& x : t.p_->v) x = stddev * rng.normal();
  return t;
}

real Tensor::item() const {
  if (size() != 1) throw ContractError("Tensor::item: not a scalar");
  return p_->v[0];
}

void Tape::backward(const Tensor& loss) {
  if (loss.size() != 1) throw ContractError("backward: loss must be scalar");
  Tensor l = loss;
  l.grads()[0] += real(1);
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

// ---- elementwise ----

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor y = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = a.data()[i] + b.data()[i];
  record([a, b, y]() mutable {
    for (std::size_t i = 0; i < y.size(); ++i) {
      a.grads()[i] += y.grad()[i];
      b.grads()[i] += y.grad()[i];
    }
  });
  return y;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor y = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = a.data()[i] - b.data()[i];
  record([a, b, y]() mutable {
    for (std::size_t i = 0; i < y.size(); ++i) {
      a.grads()[i] += y.grad()[i];
      b.grads()[i] -= y.grad()[i];
    }
  });
  return y;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor y = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = a.data()[i] * b.data()[i];
  record([a, b, y]() mutable {
    for (std::size_t i = 0; i < y.size(); ++i) {
      a.grads()[i] += y.grad()[i] * b.data()[i];
      b.grads()[i] += y.grad()[i] * a.data()[i];
    }
  });
  return y;
}

Tensor Tape::scale(const Tensor& a, real s) {
  Tensor y = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = a.data()[i] * s;
  record([a, y, s]() mutable {
    for (std::size_t i = 0; i < y.size(); ++i) a.grads()[i] += y.grad()[i] * s;
  });
  return y;
}

Tensor Tape::add_scalar(const Tensor& a, real s) {
  Tensor y = Tensor::zeros(a.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y.data()[i] = a.data()[i] + s;
  record([a, y]() mutable {
    for (std::size_t i = 0; i < y.size(); ++i) a.grads()[i] += y.grad()[i];
  });
  return y;
}

Tensor Tape::gelu(const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape());
  const real inv_sqrt2 = real(0.7071067811865475);
  const real inv_sqrt2pi = real(0.3989422804014327);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const real v = x.data()[i];
    y.data()[i] = real(0.5) * v * (real(1) + std::erf(v * inv_sqrt2));
  }
  record([x, y, inv_sqrt2, inv_sqrt2pi]() mutable {
    for (std::size_t i = 0; i < y.size(); ++i) {
      const real v = x.data()[i];
      const real cdf = real(0.5) * (real(1) + std::erf(v * inv_sqrt2));
      const real pdf = inv_sqrt2pi * std::exp(real(-0.5) * v * v);
      x.grads()[i] += y.grad()[i] * (cdf + v * pdf);
    }
  });
  return y;
}

Tensor Tape::silu(const Tensor& x) {
  Tensor y = Tensor::zeros(x.shape());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const real v = x.data()[i];
    y.data()[i] = v / (real(1) + std::exp(-v));
  }
  record([x, y]() mutable {
    for (std::size_t i = 0; i < y.size(); ++i) {
      const real v = x.data()[i];
      const real sig = real(1) / (real(1) + std::exp(-v));
      x.grads()[i] += y.grad()[i] * (sig * (real(1) + v * (real(1) - sig)));
    }
  });
  return y;
}

Tensor Tape::add_rowvec(const Tensor& x, const Tensor& v) {
  const int n = x.rows(), d = x.cols();
  if (static_cast<int>(v.size()) != d) throw ContractError("add_rowvec: width mismatch");
  Tensor y = Tensor::zeros(x.shape());
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) y.data()[r * d + c] = x.data()[r * d + c] + v.data()[c];
  record([x, v, y, n, d]() mutable {
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < d; ++c) {
        x.grads()[r * d + c] += y.grad()[r * d + c];
        v.grads()[c] += y.grad()[r * d + c];
      }
  });
  return y;
}

Tensor Tape::mul_rowvec(const Tensor& x, const Tensor& v) {
  const int n = x.rows(), d = x.cols();
  if (static_cast<int>(v.size()) != d) throw ContractError("mul_rowvec: width mismatch");
  Tensor y = Tensor::zeros(x.shape());
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < d; ++c) y.data()[r * d + c] = x.data()[r * d + c] * v.data()[c];
  record([x, v, y, n, d]() mutable {
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < d; ++c) {
        x.grads()[r * d + c] += y.grad()[r * d + c] * v.data()[c];
        v.grads()[c] += y.grad()[r * d + c] * x.data()[r * d + c];
      }
  });
  return y;
}

// ---- linear algebra ----

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0))
    throw ContractError("matmul: shape mismatch");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor y = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const real av = a.data()[i * k + p];
      const real* brow = b.data() + p * n;
      real* yrow = y.data() + i * n;
      for (int j = 0; j < n; ++j) yrow[j] += av * brow[j];
    }
  record([a, b, y, m, k, n]() mutable {
    // gA += gY B^T
    for (int i = 0; i < m; ++i)
      for (int p = 0; p < k; ++p) {
        real acc = 0;
        const real* gy = y.grad() + i * n;
        const real* brow = b.data() + p * n;
        for (int j = 0; j < n; ++j) acc += gy[j] * brow[j];
        a.grads()[i * k + p] += acc;
      }
    // gB += A^T gY
    for (int p = 0; p < k; ++p)
      for (int i = 0; i < m; ++i) {
        const real av = a.data()[i * k + p];
        const real* gy = y.grad() + i * n;
        real* gb = b.grads().data() + p * n;
        for (int j = 0; j < n; ++j) gb[j] += av * gy[j];
      }
  });
  return y;
}

Tensor Tape::matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(1))
    throw ContractError("matmul_nt: shape mismatch");
  const int m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor y = Tensor::zeros({m, n});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      real acc = 0;
      const real* arow = a.data() + i * k;
      const real* brow = b.data() + j * k;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      y.data()[i * n + j] = acc;
    }
  record([a, b, y, m, k, n]() mutable {
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) {
        const real g = y.grad()[i * n + j];
        if (g == real(0)) continue;
        real* ga = a.grads().data() + i * k;
        real* gb = b.grads().data() + j * k;
        const real* arow = a.data() + i * k;
        const real* brow = b.data() + j * k;
        for (int p = 0; p < k; ++p) {
          ga[p] += g * brow[p];
          gb[p] += g * arow[p];
        }
      }
  });
  return y;
}

Tensor Tape::linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  return add_rowvec(matmul(x, w), b);
}

Tensor Tape::layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, real eps) {
  const int n = x.rows(), d = x.cols();
  if (static_cast<int>(gain.size()) != d || static_cast<int>(bias.size()) != d)
    throw ContractError("layer_norm: gain/bias width mismatch");
  Tensor y = Tensor::zeros(x.shape());
  auto xhat = std::make_shared<std::vector<real>>(x.size());
  auto invstd = std::make_shared<std::vector<real>>(n);
  for (int r = 0; r < n; ++r) {
    double mean = 0, var = 0;
    for (int c = 0; c < d; ++c) mean += x.data()[r * d + c];
    mean /= d;
    for (int c = 0; c < d; ++c) {
      const double dx = x.data()[r * d + c] - mean;
      var += dx * dx;
    }
    var /= d;
    const real is = real(1) / std::sqrt(static_cast<real>(var) + eps);
    (*invstd)[r] = is;
    for (int c = 0; c < d; ++c) {
      const real xh = (x.data()[r * d + c] - static_cast<real>(mean)) * is;
      (*xhat)[r * d + c] = xh;
      y.data()[r * d + c] = xh * gain.data()[c] + bias.data()[c];
    }
  }
  record([x, gain, bias, y, xhat, invstd, n, d]() mutable {
    for (int r = 0; r < n; ++r) {
      double sum_dxh = 0, sum_dxh_xh = 0;
      for (int c = 0; c < d; ++c) {
        const real gy = y.grad()[r * d + c];
        const real xh = (*xhat)[r * d + c];
        gain.grads()[c] += gy * xh;
        bias.grads()[c] += gy;
        const real dxh = gy * gain.data()[c];
        sum_dxh += dxh;
        sum_dxh_xh += dxh * xh;
      }
      const real is = (*invstd)[r];
      for (int c = 0; c < d; ++c) {
        const real dxh = y.grad()[r * d + c] * gain.data()[c];
        x.grads()[r * d + c] +=
            is * (dxh - static_cast<real>(sum_dxh) / d -
                  (*xhat)[r * d + c] * static_cast<real>(sum_dxh_xh) / d);
      }
    }
  });
  return y;
}

Tensor Tape::softmax_lastdim(const Tensor& x, const std::vector<char>* mask) {
  const int n = x.rows(), d = x.cols();
  if (mask && static_cast<int>(mask->size()) != d)
    throw ContractError("softmax_lastdim: mask width mismatch");
  Tensor y = Tensor::zeros(x.shape());
  for (int r = 0; r < n; ++r) {
    real mx = -std::numeric_limits<real>::infinity();
    for (int c = 0; c < d; ++c)
      if (!mask || (*mask)[c]) mx = std::max(mx, x.data()[r * d + c]);
    if (mx == -std::numeric_limits<real>::infinity()) continue;  // fully masked row
    double z = 0;
    for (int c = 0; c < d; ++c) {
      if (mask && !(*mask)[c]) continue;
      const real e = std::exp(x.data()[r * d + c] - mx);
      y.data()[r * d + c] = e;
      z += e;
    }
    for (int c = 0; c < d; ++c) y.data()[r * d + c] /= static_cast<real>(z);
  }
  const std::vector<char>* m = mask;
  std::shared_ptr<std::vector<char>> mcopy;
  if (mask) {
    mcopy = std::make_shared<std::vector<char>>(*mask);
  }
  record([x, y, n, d, mcopy]() mutable {
    for (int r = 0; r < n; ++r) {
      double dot = 0;
      for (int c = 0; c < d; ++c) {
        if (mcopy && !(*mcopy)[c]) continue;
        dot += y.grad()[r * d + c] * y.data()[r * d + c];
      }
      for (int c = 0; c < d; ++c) {
        if (mcopy && !(*mcopy)[c]) continue;
        x.grads()[r * d + c] +=
            y.data()[r * d + c] * (y.grad()[r * d + c] - static_cast<real>(dot));
      }
    }
  });
  (void)m;
  return y;
}

// ---- shape ----

Tensor Tape::reshape(const Tensor& x, std::vector<int> shape) {
  Tensor y = Tensor::zeros(std::move(shape));
  if (y.size() != x.size()) throw ContractError("reshape: element count mismatch");
  std::copy(x.data(), x.data() + x.size(), y.data());
  record([x, y]() mutable {
    for (std::size_t i = 0; i < y.size(); ++i) x.grads()[i] += y.grad()[i];
  });
  return y;
}

Tensor Tape::slice_cols(const Tensor& x, int start, int len) {
  const int n = x.rows(), d = x.cols();
  if (start < 0 || len <= 0 || start + len > d) throw ContractError("slice_cols: range");
  Tensor y = Tensor::zeros({n, len});
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < len; ++c) y.data()[r * len + c] = x.data()[r * d + start + c];
  record([x, y, n, d, start, len]() mutable {
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < len; ++c) x.grads()[r * d + start + c] += y.grad()[r * len + c];
  });
  return y;
}

Tensor Tape::slice_rows(const Tensor& x, int start, int len) {
  const int n = x.rows(), d = x.cols();
  if (start < 0 || len <= 0 || start + len > n) throw ContractError("slice_rows: range");
  Tensor y = Tensor::zeros({len, d});
  std::copy(x.data() + start * d, x.data() + (start + len) * d, y.data());
  record([x, y, d, start, len]() mutable {
    for (int i = 0; i < len * d; ++i) x.grads()[start * d + i] += y.grad()[i];
  });
  return y;
}

Tensor Tape::concat_cols(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ContractError("concat_cols: empty");
  const int n = xs[0].rows();
  int d = 0;
  for (const Tensor& t : xs) {
    if (t.rows() != n) throw ContractError("concat_cols: row mismatch");
    d += t.cols();
  }
  Tensor y = Tensor::zeros({n, d});
  int off = 0;
  for (const Tensor& t : xs) {
    const int tc = t.cols();
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < tc; ++c) y.data()[r * d + off + c] = t.data()[r * tc + c];
    off += tc;
  }
  record([xs, y, n, d]() mutable {
    int off = 0;
    for (Tensor& t : const_cast<std::vector<Tensor>&>(xs)) {
      const int tc = t.cols();
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < tc; ++c) t.grads()[r * tc + c] += y.grad()[r * d + off + c];
      off += tc;
    }
  });
  return y;
}

Tensor Tape::concat_flat(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ContractError("concat_flat: empty");
  std::size_t total = 0;
  for (const Tensor& t : xs) total += t.size();
  Tensor y = Tensor::zeros({static_cast<int>(total)});
  std::size_t off = 0;
  for (const Tensor& t : xs) {
    std::copy(t.data(), t.data() + t.size(), y.data() + off);
    off += t.size();
  }
  record([xs, y]() mutable {
    std::size_t off = 0;
    for (Tensor& t : const_cast<std::vector<Tensor>&>(xs)) {
      for (std::size_t i = 0; i < t.size(); ++i) t.grads()[i] += y.grad()[off + i];
      off += t.size();
    }
  });
  return y;
}

// ---- reductions ----

Tensor Tape::sum(const Tensor& x) {
  double acc = 0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += x.data()[i];
  Tensor y = Tensor::scalar(static_cast<real>(acc));
  record([x, y]() mutable {
    const real g = y.grad()[0];
    for (std::size_t i = 0; i < x.size(); ++i) x.grads()[i] += g;
  });
  return y;
}

Tensor Tape::masked_mse(const Tensor& pred, const Tensor& target,
                        const std::vector<char>& mask) {
  check_same_shape(pred, target, "masked_mse");
  const int n = pred.rows(), d = pred.cols();
  if (static_cast<int>(mask.size()) != n) throw ContractError("masked_mse: mask length");
  long count = 0;
  double acc = 0;
  for (int r = 0; r < n; ++r) {
    if (!mask[r]) continue;
    ++count;
    for (int c = 0; c < d; ++c) {
      const double dv = pred.data()[r * d + c] - target.data()[r * d + c];
      acc += dv * dv;
    }
  }
  if (count == 0) throw ContractError("masked_mse: no unmasked rows");
  const real denom = static_cast<real>(count) * d;
  Tensor y = Tensor::scalar(static_cast<real>(acc) / denom);
  auto m = std::make_shared<std::vector<char>>(mask);
  record([pred, target, y, m, n, d, denom]() mutable {
    const real g = y.grad()[0] * real(2) / denom;
    for (int r = 0; r < n; ++r) {
      if (!(*m)[r]) continue;
      for (int c = 0; c < d; ++c) {
        const real dv = pred.data()[r * d + c] - target.data()[r * d + c];
        pred.grads()[r * d + c] += g * dv;
        target.grads()[r * d + c] -= g * dv;
      }
    }
  });
  return y;
}

Tensor Tape::masked_colmax(const Tensor& x, const std::vector<char>& mask) {
  const int n = x.rows(), d = x.cols();
  if (static_cast<int>(mask.size()) != n) throw ContractError("masked_colmax: mask length");
  Tensor y = Tensor::zeros({1, d});
  auto argmax = std::make_shared<std::vector<int>>(d, -1);
  for (int c = 0; c < d; ++c) {
    real best = -std::numeric_limits<real>::infinity();
    for (int r = 0; r < n; ++r) {
      if (!mask[r]) continue;
      if (x.data()[r * d + c] > best) {
        best = x.data()[r * d + c];
        (*argmax)[c] = r;
      }
    }
    if ((*argmax)[c] < 0) throw ContractError("masked_colmax: no unmasked rows");
    y.data()[c] = best;
  }
  record([x, y, argmax, d]() mutable {
    for (int c = 0; c < d; ++c) x.grads()[(*argmax)[c] * d + c] += y.grad()[c];
  });
  return y;
}

Tensor Tape::log_softmax_vec(const Tensor& x) {
  if (x.shape().size() != 1 && x.rows() != 1)
    throw ContractError("log_softmax_vec: expects a vector");
  const int d = static_cast<int>(x.size());
  real mx = -std::numeric_limits<real>::infinity();
  for (int c = 0; c < d; ++c) mx = std::max(mx, x.data()[c]);
  double z = 0;
  for (int c = 0; c < d; ++c) z += std::exp(x.data()[c] - mx);
  const real lz = mx + std::log(static_cast<real>(z));
  Tensor y = Tensor::zeros({d});
  for (int c = 0; c < d; ++c) y.data()[c] = x.data()[c] - lz;
  record([x, y, d]() mutable {
    double gsum = 0;
    for (int c = 0; c < d; ++c) gsum += y.grad()[c];
    for (int c = 0; c < d; ++c)
      x.grads()[c] += y.grad()[c] - std::exp(y.data()[c]) * static_cast<real>(gsum);
  });
  return y;
}

Tensor Tape::pick(const Tensor& x, int index) {
  if (index < 0 || index >= static_cast<int>(x.size()))
    throw ContractError("pick: index out of range");
  Tensor y = Tensor::scalar(x.data()[index]);
  record([x, y, index]() mutable { x.grads()[index] += y.grad()[0]; });
  return y;
}

// ---- gradient check ----

double grad_check(const std::function<Tensor(Tape&)>& f,
                  const std::vector<Tensor>& params, real h) {
  std::vector<std::vector<real>> analytic;
  {
    for (const Tensor& p : params) const_cast<Tensor&>(p).zero_grad();
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
    for (const Tensor& p : params)
      analytic.emplace_back(p.grad(), p.grad() + p.size());
  }
  auto eval = [&]() {
    Tape tape;
    return f(tape).item();
  };
  double max_rel = 0;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const real orig = p.data()[i];
      p.data()[i] = orig + h;
      const double fp = eval();
      p.data()[i] = orig - h;
      const double fm = eval();
      p.data()[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[pi][i];
      const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(numeric));
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

// ---- checkpoint IO ----

Tensor* NamedTensors::find(const std::string& name) {
  for (auto& [n, t] : items)
    if (n == name) return &t;
  return nullptr;
}

const Tensor* NamedTensors::find(const std::string& name) const {
  for (const auto& [n, t] : items)
    if (n == name) return &t;
  return nullptr;
}

std::size_t NamedTensors::total_params() const {
  std::size_t n = 0;
  for (const auto& [name, t] : items) n += t.size();
  return n;
}

void save_checkpoint(const std::string& path, const NamedTensors& params,
                     const std::string& config_json, const std::string& extra_json) {
  nlohmann::json header;
  header["format"] = "scandiff-checkpoint-v1";
  header["config"] = nlohmann::json::parse(config_json);
  header["extra"] = nlohmann::json::parse(extra_json);
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& [name, t] : params.items) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t.shape();
    tensors.push_back(e);
  }
  header["tensors"] = tensors;
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("save_checkpoint: cannot open " + path);
  const uint64_t len = hs.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : params.items) {
    std::vector<float> buf(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) buf[i] = static_cast<float>(t.data()[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
  }
  if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("load_checkpoint: cannot open " + path);
  uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  std::string hs(len, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(len));
  nlohmann::json header = nlohmann::json::parse(hs);
  Checkpoint ck;
  ck.config_json = header.at("config").dump();
  ck.extra_json = header.value("extra", nlohmann::json::object()).dump();
  for (const auto& e : header.at("tensors")) {
    std::vector<int> shape = e.at("shape").get<std::vector<int>>();
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    std::vector<float> buf(n);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(n * sizeof(float)));
    ck.params.items.emplace_back(e.at("name").get<std::string>(),
                                 Tensor::from_floats(shape, buf, true));
  }
  if (!in) throw ContractError("load_checkpoint: truncated file " + path);
  return ck;
}

}  // namespace scandiff::tensor
