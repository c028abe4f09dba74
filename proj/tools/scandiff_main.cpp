// SPDX-License-Identifier: Apache-2.0
//
// scandiff command-line front end: synth / train / sample / eval / render.
// Exit codes: 0 ok, 1 contract error (bad inputs/config), 2 internal error.
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

#include "CLI11.hpp"
#include "json.hpp"
#include "scandiff/dataset.hpp"
#include "scandiff/diffusion.hpp"
#include "scandiff/metrics.hpp"
#include "scandiff/render.hpp"
#include "scandiff/synthgen.hpp"
#include "scandiff/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace scandiff;

namespace {

constexpr int kConfigVersion = 1;

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
  if (!j.is_object()) throw ContractError(where + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed.count(it.key()))
      throw ContractError(where + ": unknown key \"" + it.key() + "\"");
}

json load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ContractError(std::string("config parse error: ") + e.what());
  }
  if (!j.contains("version")) throw ContractError("config: missing \"version\"");
  if (j.at("version").get<int>() != kConfigVersion)
    throw ContractError("config: unsupported version");
  return j;
}

uint64_t fnv1a(uint64_t h, const void* data, std::size_t n) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

uint64_t hash_file(uint64_t h, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return h;
  char buf[65536];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
    h = fnv1a(h, buf, static_cast<std::size_t>(in.gcount()));
  return h;
}

uint64_t hash_inputs(const std::vector<std::string>& paths) {
  uint64_t h = 1469598103934665603ULL;
  for (const std::string& p : paths) {
    if (fs::is_directory(p)) {
      std::vector<std::string> files;
      for (const auto& e : fs::recursive_directory_iterator(p))
        if (e.is_regular_file()) files.push_back(e.path().string());
      std::sort(files.begin(), files.end());
      for (const std::string& f : files) {
        h = fnv1a(h, f.data(), f.size());
        h = hash_file(h, f);
      }
    } else {
      h = hash_file(h, p);
    }
  }
  return h;
}

void write_run_manifest(const std::string& dir, const std::string& subcommand,
                        const json& config, const std::vector<std::string>& inputs) {
  json m;
  m["subcommand"] = subcommand;
  m["config"] = config;
  m["input_hash"] = hash_inputs(inputs);
  std::ofstream out(fs::path(dir) / "run_manifest.json");
  out << m.dump(2) << "\n";
}

// Populate `out` via fn(tmp) then atomically rename tmp -> out, so a
// failed run never leaves a partial output directory.
void atomic_output(const std::string& out,
                   const std::function<void(const std::string&)>& fn) {
  if (fs::exists(out)) throw ContractError("output directory already exists: " + out);
  const fs::path parent = fs::absolute(out).parent_path();
  fs::create_directories(parent);
  const std::string tmp = (parent / (fs::path(out).filename().string() + ".tmp" +
                                     std::to_string(::getpid())))
                              .string();
  fs::remove_all(tmp);
  fs::create_directories(tmp);
  try {
    fn(tmp);
  } catch (...) {
    fs::remove_all(tmp);
    throw;
  }
  fs::rename(tmp, out);
}

int default_threads() {
  if (const char* e = std::getenv("SCANDIFF_THREADS")) {
    const int v = std::atoi(e);
    if (v >= 1) return v;
  }
  return 1;
}

// ---------------------------------------------------------------- synth

int run_synth(const std::string& config_path, const std::string& out_dir) {
  const json cfg = load_config(config_path);
  check_keys(cfg, {"version", "name", "classes", "seed", "scanner"}, "synth config");
  const std::string name = cfg.value("name", "synthetic");
  const uint64_t seed = cfg.value("seed", 0ULL);
  std::map<std::string, int> counts;
  for (auto it = cfg.at("classes").begin(); it != cfg.at("classes").end(); ++it)
    counts[it.key()] = it.value().get<int>();
  synthgen::ScannerSpec spec;
  if (cfg.contains("scanner")) {
    const json& s = cfg.at("scanner");
    check_keys(s,
               {"num_beams", "vfov_min_deg", "vfov_max_deg", "azimuth_res_deg",
                "sensor_height", "incidence_exponent", "range_attenuation", "i_max",
                "min_points", "max_points"},
               "scanner");
    spec.num_beams = s.value("num_beams", spec.num_beams);
    spec.vfov_min_deg = s.value("vfov_min_deg", spec.vfov_min_deg);
    spec.vfov_max_deg = s.value("vfov_max_deg", spec.vfov_max_deg);
    spec.azimuth_res_deg = s.value("azimuth_res_deg", spec.azimuth_res_deg);
    spec.sensor_height = s.value("sensor_height", spec.sensor_height);
    spec.incidence_exponent = s.value("incidence_exponent", spec.incidence_exponent);
    spec.range_attenuation = s.value("range_attenuation", spec.range_attenuation);
    spec.i_max = s.value("i_max", spec.i_max);
    spec.min_points = s.value("min_points", spec.min_points);
    spec.max_points = s.value("max_points", spec.max_points);
  }
  atomic_output(out_dir, [&](const std::string& tmp) {
    synthgen::make_dataset(tmp, name, counts, spec, seed);
    write_run_manifest(tmp, "synth", cfg, {config_path});
  });
  return 0;
}

// ---------------------------------------------------------------- train

train::TrainConfig parse_train_config(const json& cfg) {
  check_keys(cfg,
             {"version", "class", "model", "steps", "batch_size", "lr", "cond_dropout",
              "T", "seed", "checkpoint_every"},
             "train config");
  train::TrainConfig tc;
  tc.cls = cfg.at("class").get<std::string>();
  if (cfg.contains("model")) {
    const json& m = cfg.at("model");
    check_keys(m,
               {"variant", "depth", "heads", "width", "max_points", "mlp_ratio",
                "num_frequencies", "freq_base", "preset"},
               "model config");
    if (m.value("preset", "") == "xs")
      tc.model = denoiser::xs_config(
          denoiser::variant_from_string(m.value("variant", "logen")));
    if (m.contains("variant"))
      tc.model.variant = denoiser::variant_from_string(m.at("variant").get<std::string>());
    tc.model.depth = m.value("depth", tc.model.depth);
    tc.model.heads = m.value("heads", tc.model.heads);
    tc.model.width = m.value("width", tc.model.width);
    tc.model.max_points = m.value("max_points", tc.model.max_points);
    tc.model.mlp_ratio = m.value("mlp_ratio", tc.model.mlp_ratio);
    tc.model.enc.num_frequencies = m.value("num_frequencies", tc.model.enc.num_frequencies);
    tc.model.enc.base = m.value("freq_base", tc.model.enc.base);
  }
  tc.steps = cfg.value("steps", tc.steps);
  tc.batch_size = cfg.value("batch_size", tc.batch_size);
  tc.lr = cfg.value("lr", tc.lr);
  tc.cond_dropout = cfg.value("cond_dropout", tc.cond_dropout);
  tc.T = cfg.value("T", tc.T);
  tc.seed = cfg.value("seed", tc.seed);
  tc.checkpoint_every = cfg.value("checkpoint_every", tc.checkpoint_every);
  tc.model.validate();
  return tc;
}

int run_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, bool resume, bool quiet) {
  const json cfg = load_config(config_path);
  const train::TrainConfig tc = parse_train_config(cfg);
  dataset::Dataset ds = dataset::load_dataset(data_dir);
  const auto cit = std::find(ds.manifest.classes.begin(), ds.manifest.classes.end(),
                             tc.cls);
  if (cit == ds.manifest.classes.end())
    throw ContractError("train: class \"" + tc.cls + "\" not in dataset manifest");
  const uint32_t cid =
      static_cast<uint32_t>(cit - ds.manifest.classes.begin());
  dataset::Dataset filtered;
  filtered.manifest = ds.manifest;
  for (const objects::CanonicalObject& o : ds.train)
    if (o.class_id == cid) filtered.train.push_back(o);
  for (const objects::CanonicalObject& o : ds.val)
    if (o.class_id == cid) filtered.val.push_back(o);
  if (filtered.train.empty())
    throw ContractError("train: no training objects for class " + tc.cls);

  // Training writes in place: periodic checkpoints plus resume.bin are
  // the recovery mechanism, so the atomic-rename policy does not apply.
  fs::create_directories(out_dir);
  write_run_manifest(out_dir, "train", cfg, {config_path, data_dir});
  auto log = [&](int step, double loss) {
    if (!quiet && step % 100 == 0)
      std::cerr << "step " << step << " loss " << loss << "\n";
  };
  train::train(filtered, tc, out_dir, resume, log);
  return 0;
}

// ---------------------------------------------------------------- sample

struct ConditionLine {
  objects::Condition kappa;
  int n_points = 0;
  uint64_t seed = 0;
  std::string cls;
};

std::vector<ConditionLine> read_conditions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open conditions file " + path);
  std::vector<ConditionLine> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ContractError("conditions line " + std::to_string(lineno) + ": " + e.what());
    }
    check_keys(j, {"phi", "d", "z", "l", "w", "h", "n_points", "seed", "class"},
               "conditions line " + std::to_string(lineno));
    ConditionLine c;
    c.kappa.phi = j.at("phi").get<double>();
    c.kappa.d = j.at("d").get<double>();
    c.kappa.z = j.at("z").get<double>();
    c.kappa.l = j.at("l").get<double>();
    c.kappa.w = j.at("w").get<double>();
    c.kappa.h = j.at("h").get<double>();
    c.n_points = j.at("n_points").get<int>();
    c.seed = j.value("seed", 0ULL);
    c.cls = j.value("class", "");
    if (c.n_points < 1)
      throw ContractError("conditions line " + std::to_string(lineno) +
                          ": n_points must be >= 1");
    out.push_back(c);
  }
  return out;
}

int run_sample(const std::string& ckpt_path, const std::string& cond_path,
               const std::string& out_dir, int steps, double lambda, bool quiet) {
  std::string extra;
  const denoiser::DenoiserWeights w = denoiser::load_weights(ckpt_path, &extra);
  const std::string ckpt_cls = json::parse(extra).value("class", "");
  const std::vector<ConditionLine> conds = read_conditions(cond_path);
  for (std::size_t i = 0; i < conds.size(); ++i) {
    if (!conds[i].cls.empty() && !ckpt_cls.empty() && conds[i].cls != ckpt_cls)
      throw ContractError("sample: condition class \"" + conds[i].cls +
                          "\" does not match checkpoint class \"" + ckpt_cls + "\"");
    if (conds[i].n_points > w.cfg.max_points)
      throw ContractError("sample: n_points exceeds model max_points");
  }
  const diffusion::DiffusionSchedule sched = diffusion::make_schedule(1000);
  diffusion::SamplerConfig sc;
  sc.inference_steps = steps;
  sc.lambda = lambda;
  const diffusion::NoisePredictor pred = diffusion::make_denoiser_predictor(w);

  atomic_output(out_dir, [&](const std::string& tmp) {
    std::vector<objects::CanonicalObject> objs;
    for (std::size_t i = 0; i < conds.size(); ++i) {
      diffusion::SamplerConfig ci = sc;
      ci.seed = conds[i].seed;
      objects::CanonicalObject o;
      o.pts = diffusion::sample(pred, conds[i].kappa, conds[i].n_points, sched, ci);
      o.kappa = conds[i].kappa;
      o.class_id = 0;
      objs.push_back(std::move(o));
      if (!quiet) std::cerr << "sampled " << (i + 1) << "/" << conds.size() << "\n";
    }
    dataset::Manifest m;
    m.name = "generated";
    m.classes = {ckpt_cls.empty() ? std::string("unknown") : ckpt_cls};
    dataset::write_dataset(tmp, m, objs, {});
    json cfg;
    cfg["checkpoint"] = ckpt_path;
    cfg["conditions"] = cond_path;
    cfg["inference_steps"] = steps;
    cfg["lambda"] = lambda;
    write_run_manifest(tmp, "sample", cfg, {ckpt_path, cond_path});
  });
  return 0;
}

// ---------------------------------------------------------------- eval

// Pair the generated objects with same-class real validation objects in
// file order (generation walks the validation conditions in order).
metrics::SampleSets aligned_sets(const dataset::Dataset& real,
                                 const dataset::Dataset& gen,
                                 const std::string& gcls) {
  metrics::SampleSets s;
  const std::vector<objects::CanonicalObject>* rl = &real.val;
  if (rl->empty()) rl = &real.train;
  const std::vector<objects::CanonicalObject>* gl = &gen.train;
  if (gl->empty()) gl = &gen.val;
  uint32_t cid = 0;
  bool found = false;
  for (std::size_t k = 0; k < real.manifest.classes.size(); ++k)
    if (real.manifest.classes[k] == gcls) {
      cid = static_cast<uint32_t>(k);
      found = true;
    }
  for (const objects::CanonicalObject& o : *rl) {
    if (found && o.class_id != cid) continue;
    if (s.real.size() == gl->size()) break;
    s.real.push_back(o.pts);
    s.gen.push_back((*gl)[s.gen.size()].pts);
  }
  return s;
}

int run_eval(const std::string& real_dir, const std::string& gen_dir,
             const std::string& out_dir, std::string fx3_path, std::string fx4_path,
             bool per_point, int threads) {
  dataset::Dataset real = dataset::load_dataset(real_dir);
  dataset::Dataset gen = dataset::load_dataset(gen_dir);
  if (real.train.empty() && real.val.empty())
    throw ContractError("eval: real dataset is empty");
  if (gen.train.empty() && gen.val.empty())
    throw ContractError("eval: generated dataset is empty");

  atomic_output(out_dir, [&](const std::string& tmp) {
    metrics::FeatureExtractor fx3, fx4;
    if (!fx3_path.empty() && !fx4_path.empty()) {
      fx3 = metrics::FeatureExtractor::load(fx3_path);
      fx4 = metrics::FeatureExtractor::load(fx4_path);
    } else {
      // No extractor supplied: fit one on the real dataset (both
      // channel layouts) and save alongside the report.
      std::vector<objects::PointSet> pts;
      std::vector<int> labels;
      for (const objects::CanonicalObject& o : real.train) {
        pts.push_back(o.pts);
        labels.push_back(static_cast<int>(o.class_id));
      }
      if (pts.empty())
        for (const objects::CanonicalObject& o : real.val) {
          pts.push_back(o.pts);
          labels.push_back(static_cast<int>(o.class_id));
        }
      metrics::ExtractorTrainConfig xc;
      fx3 = metrics::train_feature_extractor(pts, labels, real.manifest.classes, 3, xc);
      fx4 = metrics::train_feature_extractor(pts, labels, real.manifest.classes, 4, xc);
      fx3.save((fs::path(tmp) / "extractor3.ckpt").string());
      fx4.save((fs::path(tmp) / "extractor4.ckpt").string());
      fx3_path = "extractor3.ckpt";
      fx4_path = "extractor4.ckpt";
    }
    // Group index-aligned pairs by the generated class label.
    std::map<std::string, metrics::SampleSets> by_class;
    std::map<std::string, std::vector<int>> labels;
    const std::string gcls = gen.manifest.classes.empty() ? std::string("all")
                                                          : gen.manifest.classes[0];
    const metrics::SampleSets all = aligned_sets(real, gen, gcls);
    by_class[gcls] = all;
    int cid = 0;
    for (std::size_t k = 0; k < real.manifest.classes.size(); ++k)
      if (real.manifest.classes[k] == gcls) cid = static_cast<int>(k);
    labels[gcls] = std::vector<int>(all.gen.size(), cid);

    metrics::ReportOptions opts;
    opts.per_point = per_point;
    opts.threads = threads;
    json meta;
    meta["real"] = real_dir;
    meta["gen"] = gen_dir;
    meta["pairs"] = all.real.size();
    meta["extractor3"] = fx3_path;
    meta["extractor4"] = fx4_path;
    meta["per_point"] = per_point;
    opts.metadata_json = meta.dump();
    const metrics::MetricsReport rep =
        metrics::compute_report(by_class, labels, fx3, fx4, opts);
    std::ofstream(fs::path(tmp) / "report.json") << rep.to_json() << "\n";
    std::ofstream(fs::path(tmp) / "report.txt") << rep.to_table();
    json cfg;
    cfg["real"] = real_dir;
    cfg["gen"] = gen_dir;
    cfg["per_point"] = per_point;
    write_run_manifest(tmp, "eval", cfg, {real_dir, gen_dir});
  });
  return 0;
}

// ---------------------------------------------------------------- render

int run_render(const std::string& data_dir, const std::string& out_dir,
               const std::string& format, int index) {
  if (format != "svg" && format != "ply" && format != "both")
    throw ContractError("render: format must be svg, ply, or both");
  const dataset::Dataset ds = dataset::load_dataset(data_dir);
  std::vector<const objects::CanonicalObject*> objs;
  for (const objects::CanonicalObject& o : ds.train) objs.push_back(&o);
  for (const objects::CanonicalObject& o : ds.val) objs.push_back(&o);
  if (objs.empty()) throw ContractError("render: dataset has no objects");
  if (index >= static_cast<int>(objs.size()))
    throw ContractError("render: index out of range");
  atomic_output(out_dir, [&](const std::string& tmp) {
    const std::size_t lo = index < 0 ? 0 : static_cast<std::size_t>(index);
    const std::size_t hi = index < 0 ? objs.size() : static_cast<std::size_t>(index) + 1;
    char name[64];
    for (std::size_t i = lo; i < hi; ++i) {
      if (format != "ply") {
        std::snprintf(name, sizeof(name), "object_%06zu.svg", i);
        render::write_svg((fs::path(tmp) / name).string(), objs[i]->pts);
      }
      if (format != "svg") {
        std::snprintf(name, sizeof(name), "object_%06zu.ply", i);
        render::write_ply((fs::path(tmp) / name).string(), objs[i]->pts);
      }
    }
    json cfg;
    cfg["dataset"] = data_dir;
    cfg["format"] = format;
    write_run_manifest(tmp, "render", cfg, {data_dir});
  });
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scandiff: conditional diffusion generation of LiDAR objects"};
  app.require_subcommand(1);
  int threads = default_threads();
  app.add_option("--threads", threads, "worker threads (1 = bit-reproducible)");

  std::string config, out, data, ckpt, conds, real_dir, gen_dir, fx3, fx4;
  std::string format = "both";
  int steps = 500, index = -1;
  double lambda = 1.0;
  bool resume = false, per_point = false, quiet = false;

  CLI::App* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  synth->add_option("--config", config)->required();
  synth->add_option("--out", out)->required();

  CLI::App* tr = app.add_subcommand("train", "train a denoiser on one class");
  tr->add_option("--config", config)->required();
  tr->add_option("--dataset", data)->required();
  tr->add_option("--out", out)->required();
  tr->add_flag("--resume", resume, "continue from resume.bin in --out");
  tr->add_flag("--quiet", quiet);

  CLI::App* sa = app.add_subcommand("sample", "sample objects from conditions");
  sa->add_option("--checkpoint", ckpt)->required();
  sa->add_option("--conditions", conds, "JSON-lines condition file")->required();
  sa->add_option("--out", out)->required();
  sa->add_option("--steps", steps, "inference steps");
  sa->add_option("--lambda", lambda, "guidance strength");
  sa->add_flag("--quiet", quiet);

  CLI::App* ev = app.add_subcommand("eval", "metric report for generated vs real");
  ev->add_option("--real", real_dir)->required();
  ev->add_option("--gen", gen_dir)->required();
  ev->add_option("--out", out)->required();
  ev->add_option("--extractor3", fx3, "3-channel feature extractor checkpoint");
  ev->add_option("--extractor4", fx4, "4-channel feature extractor checkpoint");
  ev->add_flag("--per-point", per_point, "report CD/EMD as per-point means");

  CLI::App* re = app.add_subcommand("render", "SVG/PLY export of a dataset");
  re->add_option("--dataset", data)->required();
  re->add_option("--out", out)->required();
  re->add_option("--format", format, "svg, ply, or both");
  re->add_option("--index", index, "render a single object");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (synth->parsed()) return run_synth(config, out);
    if (tr->parsed()) return run_train(config, data, out, resume, quiet);
    if (sa->parsed()) return run_sample(ckpt, conds, out, steps, lambda, quiet);
    if (ev->parsed()) return run_eval(real_dir, gen_dir, out, fx3, fx4, per_point, threads);
    if (re->parsed()) return run_render(data, out, format, index);
  } catch (const ContractError& e) {
    std::cerr << "contract error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
