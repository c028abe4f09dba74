// SPDX-License-Identifier: Apache-2.0
#include "scandiff/train.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "scandiff/diffusion.hpp"
#include "scandiff/optim.hpp"

namespace scandiff::train {

namespace fs = std::filesystem;

namespace {

constexpr char kResumeMagic[8] = {'S', 'D', 'R', 'S', 'N', 'A', 'P', '1'};

void write_bytes(std::ofstream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_bytes(std::ifstream& in, void* p, std::size_t n) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
}

// Full-precision snapshot: step, RNG state, parameter doubles (in
// declaration order), Adam state doubles.
void save_resume(const std::string& path, int step, const Rng& rng,
                 const denoiser::DenoiserWeights& w, const optim::Adam& opt) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("save_resume: cannot open " + tmp);
    write_bytes(out, kResumeMagic, sizeof(kResumeMagic));
    const uint64_t s = static_cast<uint64_t>(step);
    write_bytes(out, &s, sizeof(s));
    const std::string rs = rng.save_state();
    const uint64_t rl = rs.size();
    write_bytes(out, &rl, sizeof(rl));
    write_bytes(out, rs.data(), rs.size());
    const uint64_t np = w.params.items.size();
    write_bytes(out, &np, sizeof(np));
    for (const auto& [name, t] : w.params.items) {
      const uint64_t n = t.size();
      write_bytes(out, &n, sizeof(n));
      write_bytes(out, t.data(), n * sizeof(double));
    }
    const std::vector<double> os = opt.state();
    const uint64_t ol = os.size();
    write_bytes(out, &ol, sizeof(ol));
    write_bytes(out, os.data(), ol * sizeof(double));
    if (!out) throw std::runtime_error("save_resume: write failed " + tmp);
  }
  fs::rename(tmp, path);
}

int load_resume(const std::string& path, Rng& rng, denoiser::DenoiserWeights& w,
                optim::Adam& opt) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ContractError("load_resume: cannot open " + path);
  char magic[8];
  read_bytes(in, magic, sizeof(magic));
  if (std::memcmp(magic, kResumeMagic, sizeof(magic)) != 0)
    throw ContractError("load_resume: bad snapshot header in " + path);
  uint64_t step = 0;
  read_bytes(in, &step, sizeof(step));
  uint64_t rl = 0;
  read_bytes(in, &rl, sizeof(rl));
  std::string rs(rl, '\0');
  read_bytes(in, rs.data(), rl);
  rng.load_state(rs);
  uint64_t np = 0;
  read_bytes(in, &np, sizeof(np));
  if (np != w.params.items.size())
    throw ContractError("load_resume: parameter count mismatch");
  for (auto& [name, t] : w.params.items) {
    uint64_t n = 0;
    read_bytes(in, &n, sizeof(n));
    if (n != t.size()) throw ContractError("load_resume: shape mismatch for " + name);
    read_bytes(in, t.data(), n * sizeof(double));
  }
  uint64_t ol = 0;
  read_bytes(in, &ol, sizeof(ol));
  std::vector<double> os(ol);
  read_bytes(in, os.data(), ol * sizeof(double));
  if (!in) throw ContractError("load_resume: truncated snapshot " + path);
  opt.load_state(os);
  return static_cast<int>(step);
}

// Keep loss.csv lines for steps <= keep (resume may rewind past a crash).
void trim_loss_csv(const std::string& path, int keep) {
  std::ifstream in(path);
  if (!in) return;
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("step", 0) == 0) {
      lines.push_back(line);
      continue;
    }
    const int step = std::atoi(line.c_str());
    if (step <= keep) lines.push_back(line);
  }
  in.close();
  std::ofstream out(path, std::ios::trunc);
  for (const std::string& l : lines) out << l << "\n";
}

}  // namespace

TrainResult train(const dataset::Dataset& ds, const TrainConfig& cfg,
                  const std::string& out_dir, bool resume,
                  const std::function<void(int, double)>& on_step) {
  if (ds.train.empty()) throw ContractError("train: empty training split");
  if (cfg.steps < 0 || cfg.batch_size < 1) throw ContractError("train: bad config");
  cfg.model.validate();
  fs::create_directories(out_dir);
  const std::string loss_path = (fs::path(out_dir) / "loss.csv").string();
  const std::string resume_path = (fs::path(out_dir) / "resume.bin").string();

  const diffusion::DiffusionSchedule sched = diffusion::make_schedule(cfg.T);
  Rng init_rng(derive_seed(cfg.seed, 0));
  denoiser::DenoiserWeights w = denoiser::init_weights(cfg.model, init_rng);
  std::vector<tensor::Tensor> plist;
  for (auto& [name, t] : w.params.items) plist.push_back(t);
  optim::Adam opt(plist, cfg.lr);
  Rng rng(derive_seed(cfg.seed, 1));

  int start_step = 0;
  if (resume && fs::exists(resume_path)) {
    start_step = load_resume(resume_path, rng, w, opt);
    trim_loss_csv(loss_path, start_step);
  } else {
    std::ofstream(loss_path, std::ios::trunc) << "step,loss\n";
  }

  std::ofstream loss_csv(loss_path, std::ios::app);
  if (!loss_csv) throw std::runtime_error("train: cannot open " + loss_path);

  TrainResult res;
  res.steps_run = start_step;
  for (int step = start_step + 1; step <= cfg.steps; ++step) {
    std::vector<std::size_t> idx(static_cast<std::size_t>(cfg.batch_size));
    std::vector<objects::PointSet> pts;
    std::vector<objects::Condition> kappas;
    for (std::size_t b = 0; b < idx.size(); ++b) {
      idx[b] = rng.uniform_int(ds.train.size());
      pts.push_back(ds.train[idx[b]].pts);
      kappas.push_back(ds.train[idx[b]].kappa);
    }
    const objects::PaddedBatch batch = objects::pad_batch(pts);
    tensor::Tape tape;
    tensor::Tensor loss =
        diffusion::training_loss(tape, batch, kappas, w, sched, rng, cfg.cond_dropout);
    const double lv = loss.item();
    if (!std::isfinite(lv)) {
      nlohmann::json dump;
      dump["step"] = step;
      dump["loss"] = "non-finite";
      dump["batch_indices"] = idx;
      std::ofstream(fs::path(out_dir) / "nan_batch.json") << dump.dump(2) << "\n";
      throw std::runtime_error("train: non-finite loss at step " +
                               std::to_string(step) + "; batch dumped");
    }
    opt.zero_grad();
    tape.backward(loss);
    opt.step();
    loss_csv << step << "," << std::setprecision(17) << lv << "\n";
    loss_csv.flush();
    res.final_loss = lv;
    res.steps_run = step;
    if (on_step) on_step(step, lv);
    if (cfg.checkpoint_every > 0 &&
        (step % cfg.checkpoint_every == 0 || step == cfg.steps)) {
      char name[64];
      std::snprintf(name, sizeof(name), "ckpt_%06d.ckpt", step);
      nlohmann::json extra;
      extra["step"] = step;
      extra["seed"] = cfg.seed;
      extra["class"] = cfg.cls;
      denoiser::save_weights((fs::path(out_dir) / name).string(), w, extra.dump());
      save_resume(resume_path, step, rng, w, opt);
    }
  }
  nlohmann::json extra;
  extra["step"] = res.steps_run;
  extra["seed"] = cfg.seed;
  extra["class"] = cfg.cls;
  denoiser::save_weights((fs::path(out_dir) / "model.ckpt").string(), w, extra.dump());
  save_resume(resume_path, res.steps_run, rng, w, opt);
  res.weights = std::move(w);
  return res;
}

}  // namespace scandiff::train
