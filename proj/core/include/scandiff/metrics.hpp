// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

#include "scandiff/objects.hpp"
#include "scandiff/tensor.hpp"

namespace scandiff::metrics {

enum class PairMetric { kCD, kEMD, kINT };

// Index-aligned evaluation sets: S_g[j] was generated from S_r[j]'s
// condition.
struct SampleSets {
  std::vector<objects::PointSet> real;
  std::vector<objects::PointSet> gen;
};

// Symmetric sum of squared nearest-neighbor distances (kd-tree
// accelerated, bit-matching the naive double loop).
double chamfer(const objects::PointSet& x, const objects::PointSet& y, int channels);
double chamfer_naive(const objects::PointSet& x, const objects::PointSet& y, int channels);

// Exact optimal-assignment cost, sum of unsquared Euclidean distances.
// Requires |x| == |y|. n > exact_limit switches to a greedy approximate
// mode, reported via `approximate`.
double emd(const objects::PointSet& x, const objects::PointSet& y, int channels,
           bool* approximate = nullptr, int exact_limit = 1024);

// 256-bin L1-normalized intensity histogram.
std::vector<double> intensity_features(const objects::PointSet& x);

// Pairwise distance matrix gen x real (or merged) under the metric;
// `threads` > 1 computes cells in parallel, bit-matching serial.
std::vector<std::vector<double>> pair_distances(
    const std::vector<objects::PointSet>& a, const std::vector<objects::PointSet>& b,
    PairMetric metric, int channels, int threads = 1);

// Fraction of real sets that are the argmin match of >= 1 generated set.
double coverage(const SampleSets& sets, PairMetric metric, int channels,
                int threads = 1);

// Leave-one-out nearest-neighbor same-source fraction; exact-duplicate
// distance ties prefer the cross-source neighbor (warned).
double one_nna(const SampleSets& sets, PairMetric metric, int channels,
               int threads = 1, bool* duplicate_ties = nullptr);

// Small point-cloud classifier: shared per-point MLP, masked max-pool,
// dense head. Penultimate features back FPD/KPD; logits back APC.
struct FeatureExtractor {
  int channels = 4;  // 3 drops the intensity channel
  int feature_dim = 64;
  std::vector<std::string> classes;
  tensor::NamedTensors params;

  std::vector<double> features(const objects::PointSet& ps) const;
  int classify(const objects::PointSet& ps) const;
  void save(const std::string& path) const;
  static FeatureExtractor load(const std::string& path);
};

struct ExtractorTrainConfig {
  int steps = 600;
  int batch_size = 16;
  double lr = 1e-3;
  uint64_t seed = 1;
  int hidden = 64;
};

FeatureExtractor train_feature_extractor(
    const std::vector<objects::PointSet>& pts, const std::vector<int>& labels,
    const std::vector<std::string>& classes, int channels,
    const ExtractorTrainConfig& cfg);

struct FpdResult {
  double value = 0;
  bool ridge_applied = false;
};

FpdResult fpd(const std::vector<objects::PointSet>& real,
              const std::vector<objects::PointSet>& gen,
              const FeatureExtractor& extractor);
// Frechet distance between feature moments (exposed for oracle tests).
FpdResult frechet_gaussians(const std::vector<std::vector<double>>& fr,
                            const std::vector<std::vector<double>>& fg);

struct KpdResult {
  double value = 0;       // unbiased MMD^2, cubic polynomial kernel
  double std_error = 0;   // block-based standard error
};

KpdResult kpd(const std::vector<objects::PointSet>& real,
              const std::vector<objects::PointSet>& gen,
              const FeatureExtractor& extractor, int block_size = 40);
KpdResult kpd_features(const std::vector<std::vector<double>>& fr,
                       const std::vector<std::vector<double>>& fg, int block_size = 40);

// Fraction of generated objects classified into their conditioning class.
double apc(const std::vector<objects::PointSet>& gen, const std::vector<int>& labels,
           const FeatureExtractor& extractor);

// Base-2 Jensen-Shannon divergence between pooled 64x64 birds-eye-view
// occupancy histograms, range [0, 1].
double jsd(const std::vector<objects::PointSet>& real,
           const std::vector<objects::PointSet>& gen, int grid = 64);
double jsd_histograms(const std::vector<double>& p, const std::vector<double>& q);

struct ClassMetrics {
  double cd = 0, emd_v = 0;
  double cov_cd = 0, cov_emd = 0, cov_int = 0;
  double nna_cd = 0, nna_emd = 0, nna_int = 0;
  double fpd_3ch = 0, fpd_4ch = 0;
  double kpd_3ch = 0, kpd_4ch = 0;
  double apc_v = 0;
  double jsd_v = 0;
  bool emd_approximate = false;
  bool fpd_ridge = false;
};

struct MetricsReport {
  std::map<std::string, ClassMetrics> per_class;
  ClassMetrics mean;
  std::string metadata_json;  // seeds, counts, extractor checkpoint id

  std::string to_json() const;
  std::string to_table() const;  // plain-text, Table-1-style columns
};

struct ReportOptions {
  bool per_point = false;  // report CD/EMD as per-point means
  int threads = 1;
  std::string metadata_json = "{}";
};

MetricsReport compute_report(
    const std::map<std::string, SampleSets>& per_class_sets,
    const std::map<std::string, std::vector<int>>& gen_labels,
    const FeatureExtractor& extractor3, const FeatureExtractor& extractor4,
    const ReportOptions& opts);

}  // namespace scandiff::metrics
