// SPDX-License-Identifier: Apache-2.0
#include "scandiff/denoiser.hpp"

#include <cmath>

#include "json.hpp"

namespace scandiff::denoiser {

using tensor::Tape;
using tensor::Tensor;

Variant variant_from_string(const std::string& s) {
  if (s == "dit3d_adaln_zero") return Variant::kDit3dAdalnZero;
  if (s == "pixart_adaln_single") return Variant::kPixartAdalnSingle;
  if (s == "logen") return Variant::kLogen;
  throw ContractError("unknown denoiser variant: " + s);
}

std::string variant_to_string(Variant v) {
  switch (v) {
    case Variant::kDit3dAdalnZero: return "dit3d_adaln_zero";
    case Variant::kPixartAdalnSingle: return "pixart_adaln_single";
    case Variant::kLogen: return "logen";
  }
  throw ContractError("unknown denoiser variant");
}

void DenoiserConfig::validate() const {
  if (depth < 1) throw ContractError("DenoiserConfig: depth must be >= 1");
  if (width % heads != 0) throw ContractError("DenoiserConfig: width not divisible by heads");
  if (max_points < 1) throw ContractError("DenoiserConfig: max_points must be >= 1");
}

std::string DenoiserConfig::to_json() const {
  nlohmann::json j;
  j["variant"] = variant_to_string(variant);
  j["depth"] = depth;
  j["heads"] = heads;
  j["width"] = width;
  j["max_points"] = max_points;
  j["mlp_ratio"] = mlp_ratio;
  j["num_frequencies"] = enc.num_frequencies;
  j["freq_base"] = enc.base;
  return j.dump();
}

DenoiserConfig DenoiserConfig::from_json(const std::string& json) {
  nlohmann::json j = nlohmann::json::parse(json);
  DenoiserConfig c;
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.depth = j.at("depth").get<int>();
  c.heads = j.at("heads").get<int>();
  c.width = j.at("width").get<int>();
  c.max_points = j.at("max_points").get<int>();
  c.mlp_ratio = j.value("mlp_ratio", 4);
  c.enc.num_frequencies = j.value("num_frequencies", 8);
  c.enc.base = j.value("freq_base", 1000.0);
  c.validate();
  return c;
}

DenoiserConfig xs_config(Variant v) {
  DenoiserConfig c;
  c.variant = v;
  c.depth = 12;
  c.heads = 3;
  c.width = 192;
  c.max_points = 1024;
  return c;
}

Tensor DenoiserWeights::get(const std::string& name) const {
  const Tensor* t = params.find(name);
  if (!t) throw ContractError("DenoiserWeights: missing parameter " + name);
  return *t;
}

std::vector<float> DenoiserWeights::null_embedding() const {
  Tensor t = get("null_cond");
  std::vector<float> v(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) v[i] = static_cast<float>(t.data()[i]);
  return v;
}

namespace {
bool uses_cross_attention(Variant v) { return v != Variant::kDit3dAdalnZero; }

void push(tensor::NamedTensors& p, const std::string& name, Tensor t) {
  p.items.emplace_back(name, std::move(t));
}

Tensor ones(std::vector<int> shape) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  std::fill(t.values().begin(), t.values().end(), tensor::real(1));
  return t;
}
}  // namespace

DenoiserWeights init_weights(const DenoiserConfig& cfg, Rng& rng) {
  cfg.validate();
  const int w = cfg.width;
  const int ed = cfg.enc.embed_dim();
  const int cd = cfg.enc.cond_dim();
  const tensor::real std0 = 0.02;
  DenoiserWeights dw;
  dw.cfg = cfg;
  auto& p = dw.params;

  push(p, "embed.w", Tensor::randn({4, w}, rng, std0, true));
  push(p, "embed.b", Tensor::zeros({w}, true));
  push(p, "pos", Tensor::zeros({cfg.max_points, w}, true));
  push(p, "null_cond", Tensor::zeros({cd}, true));

  if (uses_cross_attention(cfg.variant)) {
    push(p, "cond_tokens.w", Tensor::randn({ed, w}, rng, std0, true));
    push(p, "cond_tokens.b", Tensor::zeros({w}, true));
    // shared time-only modulation MLP, zero-init
    push(p, "adaln_shared.w", Tensor::zeros({ed, 6 * w}, true));
    push(p, "adaln_shared.b", Tensor::zeros({6 * w}, true));
  }

  for (int b = 0; b < cfg.depth; ++b) {
    const std::string pre = "blocks." + std::to_string(b) + ".";
    push(p, pre + "ln1.g", ones({w}));
    push(p, pre + "ln1.b", Tensor::zeros({w}, true));
    push(p, pre + "ln2.g", ones({w}));
    push(p, pre + "ln2.b", Tensor::zeros({w}, true));
    for (const char* nm : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"})
      push(p, pre + nm, Tensor::randn({w, w}, rng, std0, true));
    for (const char* nm : {"attn.bq", "attn.bk", "attn.bv", "attn.bo"})
      push(p, pre + nm, Tensor::zeros({w}, true));
    if (uses_cross_attention(cfg.variant)) {
      for (const char* nm : {"cross.wq", "cross.wk", "cross.wv", "cross.wo"})
        push(p, pre + nm, Tensor::randn({w, w}, rng, std0, true));
      for (const char* nm : {"cross.bq", "cross.bk", "cross.bv", "cross.bo"})
        push(p, pre + nm, Tensor::zeros({w}, true));
      push(p, pre + "adaln_off", Tensor::zeros({6 * w}, true));
    } else {
      // per-block modulation from concat(time, cond), zero-init
      push(p, pre + "adaln.w", Tensor::zeros({ed + cd, 6 * w}, true));
      push(p, pre + "adaln.b", Tensor::zeros({6 * w}, true));
    }
    push(p, pre + "mlp.w1", Tensor::randn({w, cfg.mlp_ratio * w}, rng, std0, true));
    push(p, pre + "mlp.b1", Tensor::zeros({cfg.mlp_ratio * w}, true));
    push(p, pre + "mlp.w2", Tensor::randn({cfg.mlp_ratio * w, w}, rng, std0, true));
    push(p, pre + "mlp.b2", Tensor::zeros({w}, true));
  }

  push(p, "final.ln.g", ones({w}));
  push(p, "final.ln.b", Tensor::zeros({w}, true));
  push(p, "head.w", Tensor::randn({w, 4}, rng, std0, true));
  push(p, "head.b", Tensor::zeros({4}, true));
  return dw;
}

void save_weights(const std::string& path, const DenoiserWeights& w,
                  const std::string& extra_json) {
  tensor::save_checkpoint(path, w.params, w.cfg.to_json(), extra_json);
}

DenoiserWeights load_weights(const std::string& path, std::string* extra_json) {
  tensor::Checkpoint ck = tensor::load_checkpoint(path);
  DenoiserWeights w;
  w.cfg = DenoiserConfig::from_json(ck.config_json);
  w.params = std::move(ck.params);
  if (extra_json) *extra_json = ck.extra_json;
  return w;
}

Tensor embed_points(Tape& tape, const Tensor& x, const DenoiserWeights& w) {
  const int n = x.rows();
  if (n > w.cfg.max_points)
    throw ContractError("embed_points: point count exceeds max_points capacity");
  Tensor proj = tape.linear(x, w.get("embed.w"), w.get("embed.b"));
  Tensor pos = tape.slice_rows(w.get("pos"), 0, n);
  return tape.add(proj, pos);
}

namespace {

Tensor attention(Tape& tape, const Tensor& q_in, const Tensor& kv_in,
                 const std::vector<char>* key_mask, const DenoiserWeights& w,
                 const std::string& pre) {
  const int width = w.cfg.width;
  const int heads = w.cfg.heads;
  const int hd = width / heads;
  Tensor q = tape.linear(q_in, w.get(pre + "wq"), w.get(pre + "bq"));
  Tensor k = tape.linear(kv_in, w.get(pre + "wk"), w.get(pre + "bk"));
  Tensor v = tape.linear(kv_in, w.get(pre + "wv"), w.get(pre + "bv"));
  std::vector<Tensor> outs;
  const tensor::real scl = tensor::real(1) / std::sqrt(static_cast<tensor::real>(hd));
  for (int hix = 0; hix < heads; ++hix) {
    Tensor qh = tape.slice_cols(q, hix * hd, hd);
    Tensor kh = tape.slice_cols(k, hix * hd, hd);
    Tensor vh = tape.slice_cols(v, hix * hd, hd);
    Tensor scores = tape.scale(tape.matmul_nt(qh, kh), scl);
    Tensor attn = tape.softmax_lastdim(scores, key_mask);
    outs.push_back(tape.matmul(attn, vh));
  }
  Tensor merged = tape.concat_cols(outs);
  return tape.linear(merged, w.get(pre + "wo"), w.get(pre + "bo"));
}

struct Modulation {
  Tensor shift1, scale1, gate1, shift2, scale2, gate2;  // each [1 x width]
};

Modulation split_modulation(Tape& tape, const Tensor& m, int width) {
  Modulation md;
  md.shift1 = tape.slice_cols(m, 0 * width, width);
  md.scale1 = tape.slice_cols(m, 1 * width, width);
  md.gate1 = tape.slice_cols(m, 2 * width, width);
  md.shift2 = tape.slice_cols(m, 3 * width, width);
  md.scale2 = tape.slice_cols(m, 4 * width, width);
  md.gate2 = tape.slice_cols(m, 5 * width, width);
  return md;
}

// x * (1 + scale) + shift, scale/shift broadcast across rows
Tensor modulate(Tape& tape, const Tensor& x, const Tensor& shift, const Tensor& scale) {
  return tape.add_rowvec(tape.mul_rowvec(x, tape.add_scalar(scale, 1)), shift);
}

Tensor mlp(Tape& tape, const Tensor& x, const DenoiserWeights& w, const std::string& pre) {
  Tensor h = tape.gelu(tape.linear(x, w.get(pre + "mlp.w1"), w.get(pre + "mlp.b1")));
  return tape.linear(h, w.get(pre + "mlp.w2"), w.get(pre + "mlp.b2"));
}

Tensor cond_tokens(Tape& tape, const Tensor& cond_vec, const DenoiserWeights& w) {
  // six per-scalar embeddings presented as six tokens, width-projected
  Tensor toks = tape.reshape(cond_vec, {6, w.cfg.enc.embed_dim()});
  return tape.linear(toks, w.get("cond_tokens.w"), w.get("cond_tokens.b"));
}

}  // namespace

Tensor block_forward(Tape& tape, const Tensor& h, const Tensor& cond_vec,
                     const Tensor& time_vec, const std::vector<char>& mask,
                     const DenoiserWeights& w, int block) {
  const DenoiserConfig& cfg = w.cfg;
  const int width = cfg.width;
  const std::string pre = "blocks." + std::to_string(block) + ".";

  Modulation md;
  if (cfg.variant == Variant::kDit3dAdalnZero) {
    Tensor cin = tape.reshape(tape.concat_flat({time_vec, cond_vec}),
                              {1, cfg.enc.embed_dim() + cfg.enc.cond_dim()});
    Tensor m = tape.linear(tape.silu(cin), w.get(pre + "adaln.w"), w.get(pre + "adaln.b"));
    md = split_modulation(tape, m, width);
  } else {
    Tensor cin = tape.reshape(time_vec, {1, cfg.enc.embed_dim()});
    Tensor m = tape.linear(tape.silu(cin), w.get("adaln_shared.w"), w.get("adaln_shared.b"));
    m = tape.add(m, tape.reshape(w.get(pre + "adaln_off"), {1, 6 * width}));
    md = split_modulation(tape, m, width);
  }

  Tensor x = h;
  Tensor normed = modulate(tape, tape.layer_norm(x, w.get(pre + "ln1.g"), w.get(pre + "ln1.b")),
                           md.shift1, md.scale1);
  switch (cfg.variant) {
    case Variant::kDit3dAdalnZero: {
      Tensor sa = attention(tape, normed, normed, &mask, w, pre + "attn.");
      x = tape.add(x, tape.mul_rowvec(sa, md.gate1));
      break;
    }
    case Variant::kPixartAdalnSingle: {
      // self-attention branch closed by its gate, then a separate
      // cross-attention residual on the condition tokens
      Tensor sa = attention(tape, normed, normed, &mask, w, pre + "attn.");
      x = tape.add(x, tape.mul_rowvec(sa, md.gate1));
      Tensor toks = cond_tokens(tape, cond_vec, w);
      Tensor ca = attention(tape, x, toks, nullptr, w, pre + "cross.");
      x = tape.add(x, ca);
      break;
    }
    case Variant::kLogen: {
      // cross-attention immediately after self-attention, one residual
      // branch, gate applied after both
      Tensor sa = attention(tape, normed, normed, &mask, w, pre + "attn.");
      Tensor toks = cond_tokens(tape, cond_vec, w);
      Tensor ca = attention(tape, sa, toks, nullptr, w, pre + "cross.");
      x = tape.add(x, tape.mul_rowvec(ca, md.gate1));
      break;
    }
  }

  Tensor normed2 = modulate(tape, tape.layer_norm(x, w.get(pre + "ln2.g"), w.get(pre + "ln2.b")),
                            md.shift2, md.scale2);
  Tensor m2 = mlp(tape, normed2, w, pre);
  return tape.add(x, tape.mul_rowvec(m2, md.gate2));
}

Tensor predict_noise(Tape& tape, const Tensor& x_t, double t,
                     const objects::Condition& kappa, const DenoiserWeights& w,
                     const std::vector<char>& mask) {
  const DenoiserConfig& cfg = w.cfg;
  encodings::ConditionEncoding enc =
      encodings::encode_condition(kappa, t, cfg.enc, w.null_embedding());
  Tensor cond_vec = kappa.is_null ? w.get("null_cond")
                                  : Tensor::from_floats({cfg.enc.cond_dim()}, enc.cond);
  Tensor time_vec = Tensor::from_floats({cfg.enc.embed_dim()}, enc.time);

  Tensor h = embed_points(tape, x_t, w);
  for (int b = 0; b < cfg.depth; ++b)
    h = block_forward(tape, h, cond_vec, time_vec, mask, w, b);
  Tensor out = tape.layer_norm(h, w.get("final.ln.g"), w.get("final.ln.b"));
  return tape.linear(out, w.get("head.w"), w.get("head.b"));
}

std::vector<float> predict_noise_values(const std::vector<float>& x_t, int n_points,
                                        double t, const objects::Condition& kappa,
                                        const DenoiserWeights& w) {
  Tape tape;
  Tensor x = Tensor::from_floats({n_points, 4}, x_t);
  std::vector<char> mask(static_cast<std::size_t>(n_points), 1);
  Tensor eps = predict_noise(tape, x, t, kappa, w, mask);
  std::vector<float> out(eps.size());
  for (std::size_t i = 0; i < eps.size(); ++i) out[i] = static_cast<float>(eps.data()[i]);
  return out;
}

}  // namespace scandiff::denoiser
