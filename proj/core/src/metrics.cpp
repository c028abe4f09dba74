// SPDX-License-Identifier: Apache-2.0
#include "scandiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <thread>

#include "json.hpp"
#include "scandiff/optim.hpp"

namespace scandiff::metrics {

namespace {

// Shared squared-distance kernel so the kd-tree path produces bitwise
// the same values as the naive double loop.
inline double sq_dist(const objects::Point& a, const objects::Point& b, int channels) {
  double dx = a.x - b.x, dy = a.y - b.y, dz = a.z - b.z;
  double s = dx * dx + dy * dy + dz * dz;
  if (channels == 4) {
    double di = a.i - b.i;
    s += di * di;
  }
  return s;
}

inline double coord(const objects::Point& p, int axis) {
  switch (axis) {
    case 0: return p.x;
    case 1: return p.y;
    case 2: return p.z;
    default: return p.i;
  }
}

// Minimal exact kd-tree over point indices.
struct KdTree {
  struct Node {
    int point = -1;  // leaf payload when begin+1 == end
    int axis = 0;
    double split = 0;
    int left = -1, right = -1;
  };
  const std::vector<objects::Point>* pts = nullptr;
  int channels = 3;
  std::vector<Node> nodes;
  int root = -1;

  int build(std::vector<int>& idx, int begin, int end, int depth) {
    if (begin >= end) return -1;
    Node nd;
    if (end - begin == 1) {
      nd.point = idx[static_cast<std::size_t>(begin)];
      nodes.push_back(nd);
      return static_cast<int>(nodes.size()) - 1;
    }
    nd.axis = depth % channels;
    const int mid = begin + (end - begin) / 2;
    std::nth_element(idx.begin() + begin, idx.begin() + mid, idx.begin() + end,
                     [&](int a, int b) {
                       return coord((*pts)[static_cast<std::size_t>(a)], nd.axis) <
                              coord((*pts)[static_cast<std::size_t>(b)], nd.axis);
                     });
    nd.split = coord((*pts)[static_cast<std::size_t>(idx[static_cast<std::size_t>(mid)])],
                     nd.axis);
    const int self = static_cast<int>(nodes.size());
    nodes.push_back(nd);
    const int l = build(idx, begin, mid, depth + 1);
    const int r = build(idx, mid, end, depth + 1);
    nodes[static_cast<std::size_t>(self)].left = l;
    nodes[static_cast<std::size_t>(self)].right = r;
    return self;
  }

  static KdTree make(const std::vector<objects::Point>& points, int channels) {
    KdTree t;
    t.pts = &points;
    t.channels = channels;
    std::vector<int> idx(points.size());
    std::iota(idx.begin(), idx.end(), 0);
    t.nodes.reserve(points.size() * 2);
    t.root = t.build(idx, 0, static_cast<int>(points.size()), 0);
    return t;
  }

  void nearest(int node, const objects::Point& q, double& best) const {
    if (node < 0) return;
    const Node& nd = nodes[static_cast<std::size_t>(node)];
    if (nd.point >= 0) {
      const double d = sq_dist(q, (*pts)[static_cast<std::size_t>(nd.point)], channels);
      if (d < best) best = d;
      return;
    }
    const double delta = coord(q, nd.axis) - nd.split;
    const int near = delta < 0 ? nd.left : nd.right;
    const int far = delta < 0 ? nd.right : nd.left;
    nearest(near, q, best);
    if (delta * delta < best) nearest(far, q, best);
  }

  double nearest_sq(const objects::Point& q) const {
    double best = std::numeric_limits<double>::infinity();
    nearest(root, q, best);
    return best;
  }
};

void check_nonempty(const objects::PointSet& x, const objects::PointSet& y,
                    const char* where) {
  if (x.points.empty() || y.points.empty())
    throw ContractError(std::string(where) + ": empty point set");
}

void check_channels(int channels, const char* where) {
  if (channels != 3 && channels != 4)
    throw ContractError(std::string(where) + ": channels must be 3 or 4");
}

// Deterministic even-stride subsample to m points (used to align sizes
// for assignment-based distances inside set-level metrics).
objects::PointSet stride_subsample(const objects::PointSet& x, std::size_t m) {
  objects::PointSet out;
  out.points.reserve(m);
  for (std::size_t k = 0; k < m; ++k)
    out.points.push_back(x.points[k * x.points.size() / m]);
  return out;
}

// Exact rectangular assignment (Jonker-Volgenant style shortest
// augmenting paths), O(n^3). cost is n x n row-major.
double hungarian(const std::vector<double>& cost, int n) {
  const double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0);    // column -> row
  std::vector<int> way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, kInf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = kInf;
      int j1 = -1;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur =
            cost[static_cast<std::size_t>(i0 - 1) * static_cast<std::size_t>(n) +
                 static_cast<std::size_t>(j - 1)] -
            u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  double total = 0;
  for (int j = 1; j <= n; ++j)
    total += cost[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1) *
                      static_cast<std::size_t>(n) +
                  static_cast<std::size_t>(j - 1)];
  return total;
}

// EMD between sets the caller has not size-matched: even-stride
// subsample both to the smaller count first.
double emd_any(const objects::PointSet& x, const objects::PointSet& y, int channels,
               bool* approximate) {
  if (x.points.size() == y.points.size()) return emd(x, y, channels, approximate);
  const std::size_t m = std::min(x.points.size(), y.points.size());
  return emd(stride_subsample(x, m), stride_subsample(y, m), channels, approximate);
}

double hist_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

// Runs fn(i) for i in [0, n) across `threads` workers; each index writes
// only its own output slot, so the result is identical to serial order.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const int nt = std::min<int>(threads, static_cast<int>(n));
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(nt));
  for (int w = 0; w < nt; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = static_cast<std::size_t>(w); i < n;
           i += static_cast<std::size_t>(nt))
        fn(i);
    });
  }
  for (std::thread& t : pool) t.join();
}

}  // namespace

double chamfer_naive(const objects::PointSet& x, const objects::PointSet& y,
                     int channels) {
  check_nonempty(x, y, "chamfer");
  check_channels(channels, "chamfer");
  double total = 0;
  for (const objects::Point& p : x.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const objects::Point& q : y.points) best = std::min(best, sq_dist(p, q, channels));
    total += best;
  }
  for (const objects::Point& q : y.points) {
    double best = std::numeric_limits<double>::infinity();
    for (const objects::Point& p : x.points) best = std::min(best, sq_dist(q, p, channels));
    total += best;
  }
  return total;
}

double chamfer(const objects::PointSet& x, const objects::PointSet& y, int channels) {
  check_nonempty(x, y, "chamfer");
  check_channels(channels, "chamfer");
  const KdTree ty = KdTree::make(y.points, channels);
  const KdTree tx = KdTree::make(x.points, channels);
  double total = 0;
  for (const objects::Point& p : x.points) total += ty.nearest_sq(p);
  for (const objects::Point& q : y.points) total += tx.nearest_sq(q);
  return total;
}

double emd(const objects::PointSet& x, const objects::PointSet& y, int channels,
           bool* approximate, int exact_limit) {
  check_nonempty(x, y, "emd");
  check_channels(channels, "emd");
  if (x.points.size() != y.points.size())
    throw ContractError("emd: point sets must have equal size");
  const int n = static_cast<int>(x.points.size());
  if (n > exact_limit) {
    // Greedy nearest-unused matching; flagged as approximate.
    if (approximate) *approximate = true;
    std::vector<char> used(static_cast<std::size_t>(n), 0);
    double total = 0;
    for (int i = 0; i < n; ++i) {
      int best_j = -1;
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double d = sq_dist(x.points[static_cast<std::size_t>(i)],
                                 y.points[static_cast<std::size_t>(j)], channels);
        if (d < best) {
          best = d;
          best_j = j;
        }
      }
      used[static_cast<std::size_t>(best_j)] = 1;
      total += std::sqrt(best);
    }
    return total;
  }
  if (approximate) *approximate = false;
  std::vector<double> cost(static_cast<std::size_t>(n) * static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      cost[static_cast<std::size_t>(i) * static_cast<std::size_t>(n) +
           static_cast<std::size_t>(j)] =
          std::sqrt(sq_dist(x.points[static_cast<std::size_t>(i)],
                            y.points[static_cast<std::size_t>(j)], channels));
  return hungarian(cost, n);
}

std::vector<double> intensity_features(const objects::PointSet& x) {
  if (x.points.empty()) throw ContractError("intensity_features: empty point set");
  std::vector<double> h(256, 0.0);
  for (const objects::Point& p : x.points) {
    int bin = static_cast<int>(std::floor(p.i * 256.0));
    bin = std::clamp(bin, 0, 255);
    h[static_cast<std::size_t>(bin)] += 1.0;
  }
  const double n = static_cast<double>(x.points.size());
  for (double& v : h) v /= n;
  return h;
}

std::vector<std::vector<double>> pair_distances(
    const std::vector<objects::PointSet>& a, const std::vector<objects::PointSet>& b,
    PairMetric metric, int channels, int threads) {
  std::vector<std::vector<double>> d(a.size(), std::vector<double>(b.size(), 0.0));
  if (metric == PairMetric::kINT) {
    std::vector<std::vector<double>> fa(a.size()), fb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) fa[i] = intensity_features(a[i]);
    for (std::size_t j = 0; j < b.size(); ++j) fb[j] = intensity_features(b[j]);
    parallel_for(a.size(), threads, [&](std::size_t i) {
      for (std::size_t j = 0; j < b.size(); ++j) d[i][j] = hist_distance(fa[i], fb[j]);
    });
    return d;
  }
  parallel_for(a.size(), threads, [&](std::size_t i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      if (metric == PairMetric::kCD)
        d[i][j] = chamfer(a[i], b[j], channels);
      else
        d[i][j] = emd_any(a[i], b[j], channels, nullptr);
    }
  });
  return d;
}

double coverage(const SampleSets& sets, PairMetric metric, int channels, int threads) {
  if (sets.real.empty() || sets.gen.empty())
    throw ContractError("coverage: empty sample set");
  const std::vector<std::vector<double>> d =
      pair_distances(sets.gen, sets.real, metric, channels, threads);
  std::vector<char> covered(sets.real.size(), 0);
  for (std::size_t i = 0; i < sets.gen.size(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < sets.real.size(); ++j)
      if (d[i][j] < d[i][best]) best = j;
    covered[best] = 1;
  }
  const std::ptrdiff_t hits = std::count(covered.begin(), covered.end(), char(1));
  return static_cast<double>(hits) / static_cast<double>(sets.real.size());
}

double one_nna(const SampleSets& sets, PairMetric metric, int channels, int threads,
               bool* duplicate_ties) {
  if (sets.real.empty() || sets.gen.empty())
    throw ContractError("one_nna: empty sample set");
  std::vector<objects::PointSet> merged = sets.gen;
  merged.insert(merged.end(), sets.real.begin(), sets.real.end());
  const std::size_t ng = sets.gen.size();
  const std::vector<std::vector<double>> d =
      pair_distances(merged, merged, metric, channels, threads);
  if (duplicate_ties) *duplicate_ties = false;
  std::size_t same_source = 0;
  for (std::size_t i = 0; i < merged.size(); ++i) {
    const bool src_i = i < ng;
    std::size_t best = i == 0 ? 1 : 0;
    for (std::size_t j = 0; j < merged.size(); ++j) {
      if (j == i || j == best) continue;
      if (d[i][j] < d[i][best]) {
        best = j;
      } else if (d[i][j] == d[i][best]) {
        // Exact duplicates across sources would otherwise inflate the
        // same-source count; break ties toward the cross-source sample.
        const bool best_same = (best < ng) == src_i;
        const bool cand_same = (j < ng) == src_i;
        if (best_same != cand_same) {
          if (duplicate_ties) *duplicate_ties = true;
          if (best_same) best = j;
        }
      }
    }
    if ((best < ng) == src_i) ++same_source;
  }
  return static_cast<double>(same_source) / static_cast<double>(merged.size());
}

namespace {

tensor::Tensor points_tensor(const objects::PointSet& ps, int channels) {
  std::vector<tensor::real> v;
  v.reserve(ps.points.size() * static_cast<std::size_t>(channels));
  for (const objects::Point& p : ps.points) {
    v.push_back(p.x);
    v.push_back(p.y);
    v.push_back(p.z);
    if (channels == 4) v.push_back(p.i);
  }
  return tensor::Tensor::from({static_cast<int>(ps.points.size()), channels},
                              std::move(v));
}

struct ExtractorOut {
  tensor::Tensor features;  // [1 x feature_dim]
  tensor::Tensor logits;    // [1 x classes]
};

ExtractorOut extractor_forward(tensor::Tape& tape, const FeatureExtractor& fx,
                               const tensor::Tensor& pts) {
  const tensor::NamedTensors& np = fx.params;
  auto P = [&](const char* name) -> const tensor::Tensor& {
    const tensor::Tensor* t = np.find(name);
    if (!t) throw ContractError(std::string("extractor: missing parameter ") + name);
    return *t;
  };
  tensor::Tensor h = tape.gelu(tape.linear(pts, P("p1.w"), P("p1.b")));
  h = tape.gelu(tape.linear(h, P("p2.w"), P("p2.b")));
  const std::vector<char> all(static_cast<std::size_t>(pts.rows()), 1);
  tensor::Tensor pooled = tape.masked_colmax(h, all);
  ExtractorOut out;
  out.features = tape.gelu(tape.linear(pooled, P("d1.w"), P("d1.b")));
  out.logits = tape.linear(out.features, P("head.w"), P("head.b"));
  return out;
}

}  // namespace

std::vector<double> FeatureExtractor::features(const objects::PointSet& ps) const {
  if (ps.points.empty()) throw ContractError("FeatureExtractor: empty point set");
  tensor::Tape tape;
  const ExtractorOut out = extractor_forward(tape, *this, points_tensor(ps, channels));
  return out.features.values();
}

int FeatureExtractor::classify(const objects::PointSet& ps) const {
  if (ps.points.empty()) throw ContractError("FeatureExtractor: empty point set");
  tensor::Tape tape;
  const ExtractorOut out = extractor_forward(tape, *this, points_tensor(ps, channels));
  const std::vector<tensor::real>& l = out.logits.values();
  return static_cast<int>(std::max_element(l.begin(), l.end()) - l.begin());
}

void FeatureExtractor::save(const std::string& path) const {
  nlohmann::json cfg;
  cfg["kind"] = "feature_extractor";
  cfg["channels"] = channels;
  cfg["feature_dim"] = feature_dim;
  cfg["classes"] = classes;
  tensor::save_checkpoint(path, params, cfg.dump());
}

FeatureExtractor FeatureExtractor::load(const std::string& path) {
  tensor::Checkpoint ck = tensor::load_checkpoint(path);
  nlohmann::json cfg = nlohmann::json::parse(ck.config_json);
  if (cfg.value("kind", "") != "feature_extractor")
    throw ContractError("FeatureExtractor::load: not an extractor checkpoint");
  FeatureExtractor fx;
  fx.channels = cfg.at("channels").get<int>();
  fx.feature_dim = cfg.at("feature_dim").get<int>();
  fx.classes = cfg.at("classes").get<std::vector<std::string>>();
  fx.params = std::move(ck.params);
  return fx;
}

FeatureExtractor train_feature_extractor(
    const std::vector<objects::PointSet>& pts, const std::vector<int>& labels,
    const std::vector<std::string>& classes, int channels,
    const ExtractorTrainConfig& cfg) {
  check_channels(channels, "train_feature_extractor");
  if (pts.size() != labels.size() || pts.empty())
    throw ContractError("train_feature_extractor: bad training set");
  const int C = static_cast<int>(classes.size());
  const int H = cfg.hidden;
  const int F = 64;
  Rng rng(cfg.seed);
  FeatureExtractor fx;
  fx.channels = channels;
  fx.feature_dim = F;
  fx.classes = classes;
  auto add = [&](const char* name, std::vector<int> shape, bool zero) {
    tensor::Tensor t = zero ? tensor::Tensor::zeros(shape, true)
                            : tensor::Tensor::randn(
                                  shape, rng, std::sqrt(2.0 / shape[0]), true);
    fx.params.items.emplace_back(name, t);
  };
  add("p1.w", {channels, H}, false);
  add("p1.b", {H}, true);
  add("p2.w", {H, H}, false);
  add("p2.b", {H}, true);
  add("d1.w", {H, F}, false);
  add("d1.b", {F}, true);
  add("head.w", {F, C}, false);
  add("head.b", {C}, true);

  std::vector<tensor::Tensor> plist;
  for (auto& [name, t] : fx.params.items) plist.push_back(t);
  optim::Adam opt(plist, cfg.lr);

  for (int step = 0; step < cfg.steps; ++step) {
    tensor::Tape tape;
    std::vector<tensor::Tensor> nlls;
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::size_t idx = rng.uniform_int(pts.size());
      const ExtractorOut out =
          extractor_forward(tape, fx, points_tensor(pts[idx], channels));
      tensor::Tensor logp =
          tape.log_softmax_vec(tape.reshape(out.logits, {C}));
      nlls.push_back(tape.scale(tape.pick(logp, labels[idx]), -1.0));
    }
    tensor::Tensor loss =
        tape.scale(tape.sum(tape.concat_flat(nlls)), 1.0 / cfg.batch_size);
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
  }
  return fx;
}

namespace {

using Mat = std::vector<double>;  // n x n row-major symmetric

void feature_moments(const std::vector<std::vector<double>>& f, std::vector<double>& mu,
                     Mat& cov) {
  const std::size_t n = f.size();
  const std::size_t d = f[0].size();
  if (n < 2) throw ContractError("fpd: need at least 2 samples per set");
  mu.assign(d, 0.0);
  for (const std::vector<double>& x : f)
    for (std::size_t k = 0; k < d; ++k) mu[k] += x[k];
  for (double& m : mu) m /= static_cast<double>(n);
  cov.assign(d * d, 0.0);
  for (const std::vector<double>& x : f)
    for (std::size_t a = 0; a < d; ++a)
      for (std::size_t b = 0; b < d; ++b)
        cov[a * d + b] += (x[a] - mu[a]) * (x[b] - mu[b]);
  for (double& c : cov) c /= static_cast<double>(n - 1);
}

// Cyclic Jacobi eigensolver for a symmetric matrix; returns eigenvalues,
// eigenvectors in columns of V.
void jacobi_eig(Mat a, std::size_t d, std::vector<double>& eig, Mat& V) {
  V.assign(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i) V[i * d + i] = 1.0;
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0;
    for (std::size_t p = 0; p < d; ++p)
      for (std::size_t q = p + 1; q < d; ++q) off += a[p * d + q] * a[p * d + q];
    if (off < 1e-24) break;
    for (std::size_t p = 0; p < d; ++p) {
      for (std::size_t q = p + 1; q < d; ++q) {
        const double apq = a[p * d + q];
        if (std::abs(apq) < 1e-300) continue;
        const double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < d; ++k) {
          const double akp = a[k * d + p], akq = a[k * d + q];
          a[k * d + p] = c * akp - s * akq;
          a[k * d + q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double apk = a[p * d + k], aqk = a[q * d + k];
          a[p * d + k] = c * apk - s * aqk;
          a[q * d + k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double vkp = V[k * d + p], vkq = V[k * d + q];
          V[k * d + p] = c * vkp - s * vkq;
          V[k * d + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  eig.resize(d);
  for (std::size_t i = 0; i < d; ++i) eig[i] = a[i * d + i];
}

Mat matmul_sq(const Mat& a, const Mat& b, std::size_t d) {
  Mat c(d * d, 0.0);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t k = 0; k < d; ++k) {
      const double aik = a[i * d + k];
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < d; ++j) c[i * d + j] += aik * b[k * d + j];
    }
  return c;
}

// Symmetric PSD square root via eigendecomposition; tiny negative
// eigenvalues (numerical) clip to zero.
Mat sqrt_psd(const Mat& a, std::size_t d) {
  std::vector<double> eig;
  Mat V;
  jacobi_eig(a, d, eig, V);
  Mat r(d * d, 0.0);
  for (std::size_t k = 0; k < d; ++k) {
    const double s = std::sqrt(std::max(0.0, eig[k]));
    if (s == 0.0) continue;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) r[i * d + j] += s * V[i * d + k] * V[j * d + k];
  }
  return r;
}

double min_eig(const Mat& a, std::size_t d) {
  std::vector<double> eig;
  Mat V;
  jacobi_eig(a, d, eig, V);
  return *std::min_element(eig.begin(), eig.end());
}

double poly3_kernel(const std::vector<double>& x, const std::vector<double>& y) {
  double dot = 0;
  for (std::size_t k = 0; k < x.size(); ++k) dot += x[k] * y[k];
  const double v = dot / static_cast<double>(x.size()) + 1.0;
  return v * v * v;
}

double mmd2_unbiased(const std::vector<std::vector<double>>& x,
                     const std::vector<std::vector<double>>& y) {
  const std::size_t m = x.size(), n = y.size();
  double kxx = 0, kyy = 0, kxy = 0;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j)
      if (i != j) kxx += poly3_kernel(x[i], x[j]);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      if (i != j) kyy += poly3_kernel(y[i], y[j]);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) kxy += poly3_kernel(x[i], y[j]);
  return kxx / (static_cast<double>(m) * static_cast<double>(m - 1)) +
         kyy / (static_cast<double>(n) * static_cast<double>(n - 1)) -
         2.0 * kxy / (static_cast<double>(m) * static_cast<double>(n));
}

std::vector<std::vector<double>> extract_all(const std::vector<objects::PointSet>& sets,
                                             const FeatureExtractor& fx) {
  std::vector<std::vector<double>> f;
  f.reserve(sets.size());
  for (const objects::PointSet& s : sets) f.push_back(fx.features(s));
  return f;
}

}  // namespace

FpdResult frechet_gaussians(const std::vector<std::vector<double>>& fr,
                            const std::vector<std::vector<double>>& fg) {
  if (fr.size() < 2 || fg.size() < 2)
    throw ContractError("fpd: need at least 2 samples per set");
  const std::size_t d = fr[0].size();
  std::vector<double> mu_r, mu_g;
  Mat cov_r, cov_g;
  feature_moments(fr, mu_r, cov_r);
  feature_moments(fg, mu_g, cov_g);
  FpdResult res;
  double mean_diag = 0;
  for (std::size_t i = 0; i < d; ++i)
    mean_diag += 0.5 * (cov_r[i * d + i] + cov_g[i * d + i]);
  mean_diag /= static_cast<double>(d);
  const double floor_eig = 1e-10 * std::max(mean_diag, 1e-30);
  if (min_eig(cov_r, d) < floor_eig || min_eig(cov_g, d) < floor_eig) {
    // Near-singular covariance: regularize both with a small ridge so
    // the matrix square root stays well conditioned.
    res.ridge_applied = true;
    const double ridge = 1e-6 * std::max(mean_diag, 1e-30);
    for (std::size_t i = 0; i < d; ++i) {
      cov_r[i * d + i] += ridge;
      cov_g[i * d + i] += ridge;
    }
  }
  double mean_sq = 0;
  for (std::size_t k = 0; k < d; ++k) {
    const double diff = mu_r[k] - mu_g[k];
    mean_sq += diff * diff;
  }
  const Mat sr = sqrt_psd(cov_r, d);
  Mat inner = matmul_sq(matmul_sq(sr, cov_g, d), sr, d);
  // Symmetrize against roundoff before the eigensolve.
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = i + 1; j < d; ++j) {
      const double v = 0.5 * (inner[i * d + j] + inner[j * d + i]);
      inner[i * d + j] = v;
      inner[j * d + i] = v;
    }
  std::vector<double> eig;
  Mat V;
  jacobi_eig(inner, d, eig, V);
  double tr_sqrt = 0;
  for (double e : eig) tr_sqrt += std::sqrt(std::max(0.0, e));
  double tr = 0;
  for (std::size_t i = 0; i < d; ++i) tr += cov_r[i * d + i] + cov_g[i * d + i];
  res.value = mean_sq + tr - 2.0 * tr_sqrt;
  return res;
}

FpdResult fpd(const std::vector<objects::PointSet>& real,
              const std::vector<objects::PointSet>& gen,
              const FeatureExtractor& extractor) {
  return frechet_gaussians(extract_all(real, extractor), extract_all(gen, extractor));
}

KpdResult kpd_features(const std::vector<std::vector<double>>& fr,
                       const std::vector<std::vector<double>>& fg, int block_size) {
  if (fr.size() < 2 || fg.size() < 2)
    throw ContractError("kpd: need at least 2 samples per set");
  const std::size_t n = std::min(fr.size(), fg.size());
  const std::size_t blocks =
      std::max<std::size_t>(1, n / static_cast<std::size_t>(block_size));
  std::vector<double> vals;
  vals.reserve(blocks);
  for (std::size_t b = 0; b < blocks; ++b) {
    const std::size_t lo = b * n / blocks;
    const std::size_t hi = (b + 1) * n / blocks;
    if (hi - lo < 2) continue;
    std::vector<std::vector<double>> xr(fr.begin() + static_cast<std::ptrdiff_t>(lo),
                                        fr.begin() + static_cast<std::ptrdiff_t>(hi));
    std::vector<std::vector<double>> xg(fg.begin() + static_cast<std::ptrdiff_t>(lo),
                                        fg.begin() + static_cast<std::ptrdiff_t>(hi));
    vals.push_back(mmd2_unbiased(xr, xg));
  }
  KpdResult res;
  for (double v : vals) res.value += v;
  res.value /= static_cast<double>(vals.size());
  if (vals.size() > 1) {
    double ss = 0;
    for (double v : vals) ss += (v - res.value) * (v - res.value);
    res.std_error = std::sqrt(ss / static_cast<double>(vals.size() - 1)) /
                    std::sqrt(static_cast<double>(vals.size()));
  }
  return res;
}

KpdResult kpd(const std::vector<objects::PointSet>& real,
              const std::vector<objects::PointSet>& gen,
              const FeatureExtractor& extractor, int block_size) {
  return kpd_features(extract_all(real, extractor), extract_all(gen, extractor),
                      block_size);
}

double apc(const std::vector<objects::PointSet>& gen, const std::vector<int>& labels,
           const FeatureExtractor& extractor) {
  if (gen.size() != labels.size() || gen.empty())
    throw ContractError("apc: set/label size mismatch");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < gen.size(); ++i)
    if (extractor.classify(gen[i]) == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(gen.size());
}

namespace {

std::vector<double> bev_histogram(const std::vector<objects::PointSet>& sets,
                                  double xmin, double xmax, double ymin, double ymax,
                                  int grid) {
  std::vector<double> h(static_cast<std::size_t>(grid) * static_cast<std::size_t>(grid),
                        0.0);
  const double sx = xmax > xmin ? static_cast<double>(grid) / (xmax - xmin) : 0.0;
  const double sy = ymax > ymin ? static_cast<double>(grid) / (ymax - ymin) : 0.0;
  double total = 0;
  for (const objects::PointSet& ps : sets) {
    for (const objects::Point& p : ps.points) {
      const int bx = std::clamp(static_cast<int>((p.x - xmin) * sx), 0, grid - 1);
      const int by = std::clamp(static_cast<int>((p.y - ymin) * sy), 0, grid - 1);
      h[static_cast<std::size_t>(bx) * static_cast<std::size_t>(grid) +
        static_cast<std::size_t>(by)] += 1.0;
      total += 1.0;
    }
  }
  if (total > 0)
    for (double& v : h) v /= total;
  return h;
}

}  // namespace

double jsd_histograms(const std::vector<double>& p, const std::vector<double>& q) {
  if (p.size() != q.size()) throw ContractError("jsd: histogram size mismatch");
  double acc = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const double m = 0.5 * (p[k] + q[k]);
    if (p[k] > 0) acc += 0.5 * p[k] * std::log2(p[k] / std::max(m, 1e-10));
    if (q[k] > 0) acc += 0.5 * q[k] * std::log2(q[k] / std::max(m, 1e-10));
  }
  return std::clamp(acc, 0.0, 1.0);
}

double jsd(const std::vector<objects::PointSet>& real,
           const std::vector<objects::PointSet>& gen, int grid) {
  if (real.empty() || gen.empty()) throw ContractError("jsd: empty sample set");
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (const std::vector<objects::PointSet>* sets : {&real, &gen}) {
    for (const objects::PointSet& ps : *sets) {
      for (const objects::Point& p : ps.points) {
        xmin = std::min(xmin, p.x);
        xmax = std::max(xmax, p.x);
        ymin = std::min(ymin, p.y);
        ymax = std::max(ymax, p.y);
      }
    }
  }
  const std::vector<double> hr = bev_histogram(real, xmin, xmax, ymin, ymax, grid);
  const std::vector<double> hg = bev_histogram(gen, xmin, xmax, ymin, ymax, grid);
  return jsd_histograms(hr, hg);
}

MetricsReport compute_report(
    const std::map<std::string, SampleSets>& per_class_sets,
    const std::map<std::string, std::vector<int>>& gen_labels,
    const FeatureExtractor& extractor3, const FeatureExtractor& extractor4,
    const ReportOptions& opts) {
  if (per_class_sets.empty()) throw ContractError("compute_report: no classes");
  MetricsReport rep;
  rep.metadata_json = opts.metadata_json;
  for (const auto& [cls, sets] : per_class_sets) {
    if (sets.real.size() != sets.gen.size() || sets.real.empty())
      throw ContractError("compute_report: real/gen sets must be index-aligned: " + cls);
    ClassMetrics m;
    double cd_sum = 0, emd_sum = 0;
    for (std::size_t j = 0; j < sets.real.size(); ++j) {
      double cdv = chamfer(sets.real[j], sets.gen[j], 4);
      bool approx = false;
      // Aligned pairs must match in size (generation reuses the real
      // object's point count); refuse rather than silently resample.
      double emdv = emd(sets.real[j], sets.gen[j], 4, &approx);
      m.emd_approximate = m.emd_approximate || approx;
      if (opts.per_point) {
        cdv /= static_cast<double>(sets.real[j].size() + sets.gen[j].size());
        emdv /= static_cast<double>(
            std::min(sets.real[j].size(), sets.gen[j].size()));
      }
      cd_sum += cdv;
      emd_sum += emdv;
    }
    m.cd = cd_sum / static_cast<double>(sets.real.size());
    m.emd_v = emd_sum / static_cast<double>(sets.real.size());
    m.cov_cd = coverage(sets, PairMetric::kCD, 4, opts.threads);
    m.cov_emd = coverage(sets, PairMetric::kEMD, 4, opts.threads);
    m.cov_int = coverage(sets, PairMetric::kINT, 4, opts.threads);
    m.nna_cd = one_nna(sets, PairMetric::kCD, 4, opts.threads);
    m.nna_emd = one_nna(sets, PairMetric::kEMD, 4, opts.threads);
    m.nna_int = one_nna(sets, PairMetric::kINT, 4, opts.threads);
    const FpdResult f3 = fpd(sets.real, sets.gen, extractor3);
    const FpdResult f4 = fpd(sets.real, sets.gen, extractor4);
    m.fpd_3ch = f3.value;
    m.fpd_4ch = f4.value;
    m.fpd_ridge = f3.ridge_applied || f4.ridge_applied;
    m.kpd_3ch = kpd(sets.real, sets.gen, extractor3).value;
    m.kpd_4ch = kpd(sets.real, sets.gen, extractor4).value;
    auto it = gen_labels.find(cls);
    if (it == gen_labels.end())
      throw ContractError("compute_report: missing labels for class " + cls);
    m.apc_v = apc(sets.gen, it->second, extractor4);
    m.jsd_v = jsd(sets.real, sets.gen);
    rep.per_class[cls] = m;
  }
  ClassMetrics& mean = rep.mean;
  const double nc = static_cast<double>(rep.per_class.size());
  for (const auto& [cls, m] : rep.per_class) {
    mean.cd += m.cd / nc;
    mean.emd_v += m.emd_v / nc;
    mean.cov_cd += m.cov_cd / nc;
    mean.cov_emd += m.cov_emd / nc;
    mean.cov_int += m.cov_int / nc;
    mean.nna_cd += m.nna_cd / nc;
    mean.nna_emd += m.nna_emd / nc;
    mean.nna_int += m.nna_int / nc;
    mean.fpd_3ch += m.fpd_3ch / nc;
    mean.fpd_4ch += m.fpd_4ch / nc;
    mean.kpd_3ch += m.kpd_3ch / nc;
    mean.kpd_4ch += m.kpd_4ch / nc;
    mean.apc_v += m.apc_v / nc;
    mean.jsd_v += m.jsd_v / nc;
    mean.emd_approximate = mean.emd_approximate || m.emd_approximate;
    mean.fpd_ridge = mean.fpd_ridge || m.fpd_ridge;
  }
  return rep;
}

namespace {

nlohmann::json metrics_json(const ClassMetrics& m) {
  return {{"cd", m.cd},           {"emd", m.emd_v},
          {"cov_cd", m.cov_cd},   {"cov_emd", m.cov_emd},
          {"cov_int", m.cov_int}, {"nna_cd", m.nna_cd},
          {"nna_emd", m.nna_emd}, {"nna_int", m.nna_int},
          {"fpd_3ch", m.fpd_3ch}, {"fpd_4ch", m.fpd_4ch},
          {"kpd_3ch", m.kpd_3ch}, {"kpd_4ch", m.kpd_4ch},
          {"apc", m.apc_v},       {"jsd", m.jsd_v},
          {"emd_approximate", m.emd_approximate},
          {"fpd_ridge", m.fpd_ridge}};
}

}  // namespace

std::string MetricsReport::to_json() const {
  nlohmann::json j;
  j["metadata"] = nlohmann::json::parse(metadata_json);
  for (const auto& [cls, m] : per_class) j["per_class"][cls] = metrics_json(m);
  j["mean"] = metrics_json(mean);
  return j.dump(2);
}

std::string MetricsReport::to_table() const {
  std::string out;
  char line[512];
  std::snprintf(line, sizeof(line),
                "%-16s %9s %9s %7s %7s %7s %7s %7s %7s %9s %9s %9s %9s %6s %6s\n",
                "class", "CD", "EMD", "COVcd", "COVemd", "COVint", "NNAcd", "NNAemd",
                "NNAint", "FPD3", "FPD4", "KPD3", "KPD4", "APC", "JSD");
  out += line;
  auto row = [&](const std::string& name, const ClassMetrics& m) {
    std::snprintf(line, sizeof(line),
                  "%-16s %9.4f %9.4f %7.3f %7.3f %7.3f %7.3f %7.3f %7.3f %9.4f %9.4f "
                  "%9.5f %9.5f %6.3f %6.3f\n",
                  name.c_str(), m.cd, m.emd_v, m.cov_cd, m.cov_emd, m.cov_int, m.nna_cd,
                  m.nna_emd, m.nna_int, m.fpd_3ch, m.fpd_4ch, m.kpd_3ch, m.kpd_4ch,
                  m.apc_v, m.jsd_v);
    out += line;
  };
  for (const auto& [cls, m] : per_class) row(cls, m);
  row("mean", mean);
  if (mean.emd_approximate) out += "note: EMD computed in approximate mode\n";
  if (mean.fpd_ridge) out += "note: FPD covariance ridge applied\n";
  return out;
}

}  // namespace scandiff::metrics
