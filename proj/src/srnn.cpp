/**
 * @file srnn.cpp
 * @brief Spiking recurrent model: forward, surrogate-gradient BPTT, SGD, sampling.
 */

#include "muspike/srnn.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

#include "muspike/checkpoint.h"
#include "muspike/error.h"
#include "muspike/rng.h"

namespace muspike {

namespace {

constexpr int kType = static_cast<int>(Field::Type);

// y += W x, W row-major rows x cols.
void gemv(const double* w, int rows, int cols, const double* x, double* y) {
  for (int r = 0; r < rows; ++r) {
    const double* row = w + static_cast<std::size_t>(r) * cols;
    double acc = 0.0;
    for (int c = 0; c < cols; ++c) acc += row[c] * x[c];
    y[r] += acc;
  }
}

// x += W^T g
void gemv_t(const double* w, int rows, int cols, const double* g, double* x) {
  for (int r = 0; r < rows; ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    const double* row = w + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) x[c] += row[c] * gr;
  }
}

// dW += g x^T
void outer_add(double* dw, int rows, int cols, const double* g, const double* x) {
  for (int r = 0; r < rows; ++r) {
    const double gr = g[r];
    if (gr == 0.0) continue;
    double* row = dw + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) row[c] += gr * x[c];
  }
}

void softmax(std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (auto& x : v) {
    x = std::exp(x - m);
    sum += x;
  }
  for (auto& x : v) x /= sum;
}

int argmax(std::span<const double> v) {
  return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

double spike_fn(double u, SpikeMode mode, double alpha) {
  if (mode == SpikeMode::Hard) return u >= 0.0 ? 1.0 : 0.0;
  return atan_surrogate(u, alpha);
}

}  // namespace

void ToySRNNConfig::validate() const {
  for (int d : embed_dims) {
    if (d <= 0) throw Error(ErrorCode::InvalidParams, "embedding dimensions must be positive");
  }
  if (enc_dim <= 0 || hidden <= 0 || type_embed_dim <= 0) {
    throw Error(ErrorCode::InvalidParams, "layer sizes must be positive");
  }
  if (!(surrogate_alpha > 0.0)) throw Error(ErrorCode::InvalidParams, "surrogate alpha must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw Error(ErrorCode::InvalidParams, "learning rate must be positive");
  }
  if (bptt_window <= 0) throw Error(ErrorCode::InvalidParams, "BPTT window must be positive");
  if (!(clip_norm > 0.0)) throw Error(ErrorCode::InvalidParams, "clip norm must be positive");
}

ToySRNN::ToySRNN(ToySRNNConfig cfg, Vocab vocab) : cfg_(cfg), vocab_(std::move(vocab)) {
  cfg_.validate();
  for (int t = 0; t < 3; ++t) vocab_.add(Field::Type, t);
  sizes_ = vocab_.sizes();
  in_dim_ = std::accumulate(cfg_.embed_dims.begin(), cfg_.embed_dims.end(), 0);
  const int h = cfg_.hidden;
  const int e = cfg_.enc_dim;

  std::size_t offset = 0;
  auto add = [&](std::string name, int rows, int cols) {
    views_.push_back({std::move(name), rows, cols, offset});
    offset += static_cast<std::size_t>(rows) * cols;
    return views_.back().offset;
  };
  for (int f = 0; f < kNumFields; ++f) {
    emb_[f] = add("emb." + std::string(field_name(static_cast<Field>(f))), sizes_[f], cfg_.embed_dims[f]);
  }
  enc_w_ = add("enc.w", e, in_dim_);
  enc_b_ = add("enc.b", e, 1);
  in_w_ = add("rnn.w_in", h, e);
  hh_w_ = add("rnn.w_hh", h, h);
  h_b_ = add("rnn.b", h, 1);
  type_w_ = add("head.type.w", sizes_[kType], h);
  type_b_ = add("head.type.b", sizes_[kType], 1);
  type_emb_ = add("proj.type_emb", sizes_[kType], cfg_.type_embed_dim);
  proj_w_ = add("proj.w", h, h + cfg_.type_embed_dim);
  proj_b_ = add("proj.b", h, 1);
  for (int f = 1; f < kNumFields; ++f) {
    const std::string name(field_name(static_cast<Field>(f)));
    head_w_[f] = add("head." + name + ".w", sizes_[f], h);
    head_b_[f] = add("head." + name + ".b", sizes_[f], 1);
  }
  params_.assign(offset, 0.0);

  Rng rng(cfg_.seed);
  auto fill = [&](std::size_t off, std::size_t n, double a) {
    for (std::size_t i = 0; i < n; ++i) params_[off + i] = rng.uniform(-a, a);
  };
  for (int f = 0; f < kNumFields; ++f) {
    fill(emb_[f], static_cast<std::size_t>(sizes_[f]) * cfg_.embed_dims[f], 1.0);
  }
  fill(enc_w_, static_cast<std::size_t>(e) * in_dim_, 3.0 / std::sqrt(static_cast<double>(in_dim_)));
  fill(in_w_, static_cast<std::size_t>(h) * e, 2.0 / std::sqrt(static_cast<double>(e)));
  fill(hh_w_, static_cast<std::size_t>(h) * h, 1.0 / std::sqrt(static_cast<double>(h)));
  fill(type_w_, static_cast<std::size_t>(sizes_[kType]) * h, 1.0 / std::sqrt(static_cast<double>(h)));
  fill(type_emb_, static_cast<std::size_t>(sizes_[kType]) * cfg_.type_embed_dim, 1.0);
  fill(proj_w_, static_cast<std::size_t>(h) * (h + cfg_.type_embed_dim),
       1.0 / std::sqrt(static_cast<double>(h + cfg_.type_embed_dim)));
  for (int f = 1; f < kNumFields; ++f) {
    fill(head_w_[f], static_cast<std::size_t>(sizes_[f]) * h, 1.0 / std::sqrt(static_cast<double>(h)));
  }
}

const TensorView& ToySRNN::tensor(std::string_view name) const {
  for (const auto& v : views_) {
    if (v.name == name) return v;
  }
  throw Error(ErrorCode::InvalidArgument, "no tensor named " + std::string(name));
}

std::vector<IndexToken> ToySRNN::to_indices(std::span<const CompoundToken> tokens) const {
  std::vector<IndexToken> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(vocab_.to_indices(t));
  return out;
}

ToySRNN::State ToySRNN::initial_state() const {
  const double vr = cfg_.lif.v_reset();
  return {std::vector<double>(cfg_.enc_dim, vr), std::vector<double>(cfg_.hidden, vr),
          std::vector<double>(cfg_.hidden, 0.0)};
}

// ---------------------------------------------------------------------------
// Forward / backward over one window

struct ToySRNN::Window {
  struct Step {
    std::vector<double> x;       // concatenated embeddings
    std::vector<double> v_enc0;  // membrane before the step
    std::vector<double> v_enc1;  // pre-reset membrane
    std::vector<double> s_enc;
    std::vector<double> v_hid0;
    std::vector<double> v_hid1;
    std::vector<double> s_hid;
    std::vector<double> s_hid_prev;
    std::vector<double> z;
    std::array<std::vector<double>, kNumFields> probs;
  };
  std::vector<Step> steps;
};

double ToySRNN::run_window(std::span<const IndexToken> seq, std::size_t begin, std::size_t end, State& state,
                           SpikeMode mode, double* grad, std::array<std::size_t, kNumFields>* correct) const {
  const int h = cfg_.hidden;
  const int e = cfg_.enc_dim;
  const int dt = cfg_.type_embed_dim;
  const double tau = cfg_.lif.tau_m();
  const double vr = cfg_.lif.v_reset();
  const double vth = cfg_.lif.v_th();
  const double r = cfg_.lif.r();
  const double alpha = cfg_.surrogate_alpha;
  const double* p = params_.data();

  Window win;
  win.steps.resize(end - begin);
  double loss = 0.0;
  std::vector<double> proj_in(h + dt);

  for (std::size_t t = begin; t < end; ++t) {
    auto& st = win.steps[t - begin];
    const IndexToken& in = seq[t];
    const IndexToken& tgt = seq[t + 1];

    st.x.resize(in_dim_);
    int off = 0;
    for (int f = 0; f < kNumFields; ++f) {
      const double* row = p + emb_[f] + static_cast<std::size_t>(in[f]) * cfg_.embed_dims[f];
      std::copy(row, row + cfg_.embed_dims[f], st.x.begin() + off);
      off += cfg_.embed_dims[f];
    }

    std::vector<double> cur(p + enc_b_, p + enc_b_ + e);
    gemv(p + enc_w_, e, in_dim_, st.x.data(), cur.data());
    st.v_enc0 = state.v_enc;
    st.v_enc1.resize(e);
    st.s_enc.resize(e);
    for (int i = 0; i < e; ++i) {
      const double v = state.v_enc[i] + (-(state.v_enc[i] - vr) + r * cur[i]) / tau;
      const double s = spike_fn(v - vth, mode, alpha);
      st.v_enc1[i] = v;
      st.s_enc[i] = s;
      state.v_enc[i] = v * (1.0 - s) + vr * s;
    }

    std::vector<double> c(p + h_b_, p + h_b_ + h);
    gemv(p + in_w_, h, e, st.s_enc.data(), c.data());
    gemv(p + hh_w_, h, h, state.s_hid.data(), c.data());
    st.s_hid_prev = state.s_hid;
    st.v_hid0 = state.v_hid;
    st.v_hid1.resize(h);
    st.s_hid.resize(h);
    for (int i = 0; i < h; ++i) {
      const double v = state.v_hid[i] + (-(state.v_hid[i] - vr) + r * c[i]) / tau;
      const double s = spike_fn(v - vth, mode, alpha);
      st.v_hid1[i] = v;
      st.s_hid[i] = s;
      state.v_hid[i] = v * (1.0 - s) + vr * s;
    }
    state.s_hid = st.s_hid;

    // Heads.
    auto& pt = st.probs[kType];
    pt.assign(p + type_b_, p + type_b_ + sizes_[kType]);
    gemv(p + type_w_, sizes_[kType], h, st.s_hid.data(), pt.data());
    if (correct && argmax(pt) == tgt[kType]) ++(*correct)[kType];
    softmax(pt);
    loss -= std::log(std::max(pt[tgt[kType]], std::numeric_limits<double>::min()));

    std::copy(st.s_hid.begin(), st.s_hid.end(), proj_in.begin());
    const double* temb = p + type_emb_ + static_cast<std::size_t>(tgt[kType]) * dt;
    std::copy(temb, temb + dt, proj_in.begin() + h);
    st.z.assign(p + proj_b_, p + proj_b_ + h);
    gemv(p + proj_w_, h, h + dt, proj_in.data(), st.z.data());
    for (int f = 1; f < kNumFields; ++f) {
      auto& pf = st.probs[f];
      pf.assign(p + head_b_[f], p + head_b_[f] + sizes_[f]);
      gemv(p + head_w_[f], sizes_[f], h, st.z.data(), pf.data());
      if (correct && argmax(pf) == tgt[f]) ++(*correct)[f];
      softmax(pf);
      loss -= std::log(std::max(pf[tgt[f]], std::numeric_limits<double>::min()));
    }
  }

  if (grad == nullptr) return loss;

  double* g = grad;
  std::vector<double> dv_enc_next(e, 0.0), dv_hid_next(h, 0.0), ds_hid_next(h, 0.0);
  std::vector<double> dz(h), dproj_in(h + dt), dm(h), dc(h), ds_enc(e), da(e), dx(in_dim_);
  for (std::size_t t = end; t-- > begin;) {
    const auto& st = win.steps[t - begin];
    const IndexToken& in = seq[t];
    const IndexToken& tgt = seq[t + 1];

    std::fill(dz.begin(), dz.end(), 0.0);
    std::fill(dm.begin(), dm.end(), 0.0);
    for (int f = 1; f < kNumFields; ++f) {
      std::vector<double> gf = st.probs[f];
      gf[tgt[f]] -= 1.0;
      outer_add(g + head_w_[f], sizes_[f], h, gf.data(), st.z.data());
      for (int k = 0; k < sizes_[f]; ++k) g[head_b_[f] + k] += gf[k];
      gemv_t(p + head_w_[f], sizes_[f], h, gf.data(), dz.data());
    }
    std::copy(st.s_hid.begin(), st.s_hid.end(), proj_in.begin());
    const double* temb = p + type_emb_ + static_cast<std::size_t>(tgt[kType]) * dt;
    std::copy(temb, temb + dt, proj_in.begin() + h);
    outer_add(g + proj_w_, h, h + dt, dz.data(), proj_in.data());
    for (int k = 0; k < h; ++k) g[proj_b_ + k] += dz[k];
    std::fill(dproj_in.begin(), dproj_in.end(), 0.0);
    gemv_t(p + proj_w_, h, h + dt, dz.data(), dproj_in.data());
    for (int k = 0; k < h; ++k) dm[k] += dproj_in[k];
    double* gtemb = g + type_emb_ + static_cast<std::size_t>(tgt[kType]) * dt;
    for (int k = 0; k < dt; ++k) gtemb[k] += dproj_in[h + k];

    std::vector<double> gt = st.probs[kType];
    gt[tgt[kType]] -= 1.0;
    outer_add(g + type_w_, sizes_[kType], h, gt.data(), st.s_hid.data());
    for (int k = 0; k < sizes_[kType]; ++k) g[type_b_ + k] += gt[k];
    gemv_t(p + type_w_, sizes_[kType], h, gt.data(), dm.data());

    // Hidden LIF layer.
    for (int i = 0; i < h; ++i) {
      const double s = st.s_hid[i];
      const double v1 = st.v_hid1[i];
      const double dv_post = dv_hid_next[i];
      const double ds = dm[i] + ds_hid_next[i] + dv_post * (vr - v1);
      const double dv1 = dv_post * (1.0 - s) + ds * atan_surrogate_grad(v1 - vth, alpha);
      dc[i] = dv1 * r / tau;
      dv_hid_next[i] = dv1 * (1.0 - 1.0 / tau);
    }
    outer_add(g + in_w_, h, e, dc.data(), st.s_enc.data());
    outer_add(g + hh_w_, h, h, dc.data(), st.s_hid_prev.data());
    for (int k = 0; k < h; ++k) g[h_b_ + k] += dc[k];
    std::fill(ds_enc.begin(), ds_enc.end(), 0.0);
    gemv_t(p + in_w_, h, e, dc.data(), ds_enc.data());
    std::fill(ds_hid_next.begin(), ds_hid_next.end(), 0.0);
    gemv_t(p + hh_w_, h, h, dc.data(), ds_hid_next.data());

    // Encoder LIF layer.
    for (int i = 0; i < e; ++i) {
      const double s = st.s_enc[i];
      const double v1 = st.v_enc1[i];
      const double dv_post = dv_enc_next[i];
      const double ds = ds_enc[i] + dv_post * (vr - v1);
      const double dv1 = dv_post * (1.0 - s) + ds * atan_surrogate_grad(v1 - vth, alpha);
      da[i] = dv1 * r / tau;
      dv_enc_next[i] = dv1 * (1.0 - 1.0 / tau);
    }
    outer_add(g + enc_w_, e, in_dim_, da.data(), st.x.data());
    for (int k = 0; k < e; ++k) g[enc_b_ + k] += da[k];
    std::fill(dx.begin(), dx.end(), 0.0);
    gemv_t(p + enc_w_, e, in_dim_, da.data(), dx.data());
    int off = 0;
    for (int f = 0; f < kNumFields; ++f) {
      double* row = g + emb_[f] + static_cast<std::size_t>(in[f]) * cfg_.embed_dims[f];
      for (int k = 0; k < cfg_.embed_dims[f]; ++k) row[k] += dx[off + k];
      off += cfg_.embed_dims[f];
    }
  }
  return loss;
}

double ToySRNN::loss(std::span<const IndexToken> seq, SpikeMode mode) const {
  if (seq.size() < 2) return 0.0;
  State state = initial_state();
  return run_window(seq, 0, seq.size() - 1, state, mode, nullptr, nullptr) / static_cast<double>(seq.size() - 1);
}

double ToySRNN::loss_and_grad(std::span<const IndexToken> seq, SpikeMode mode, std::vector<double>& grad,
                              int window) const {
  grad.assign(params_.size(), 0.0);
  if (seq.size() < 2) return 0.0;
  const std::size_t steps = seq.size() - 1;
  const std::size_t w = window <= 0 ? steps : static_cast<std::size_t>(window);
  State state = initial_state();
  double total = 0.0;
  for (std::size_t b = 0; b < steps; b += w) {
    total += run_window(seq, b, std::min(steps, b + w), state, mode, grad.data(), nullptr);
  }
  for (auto& gi : grad) gi /= static_cast<double>(steps);
  return total / static_cast<double>(steps);
}

FieldAccuracy ToySRNN::accuracy(std::span<const std::vector<IndexToken>> corpus) const {
  std::array<std::size_t, kNumFields> correct{};
  std::size_t steps = 0;
  for (const auto& seq : corpus) {
    if (seq.size() < 2) continue;
    State state = initial_state();
    run_window(seq, 0, seq.size() - 1, state, SpikeMode::Hard, nullptr, &correct);
    steps += seq.size() - 1;
  }
  FieldAccuracy acc;
  acc.predictions = steps * kNumFields;
  if (steps == 0) return acc;
  std::size_t total = 0;
  for (int f = 0; f < kNumFields; ++f) {
    acc.per_field[f] = static_cast<double>(correct[f]) / static_cast<double>(steps);
    total += correct[f];
  }
  acc.overall = static_cast<double>(total) / static_cast<double>(acc.predictions);
  return acc;
}

const std::vector<double>& ToySRNN::step(State& state, const IndexToken& input, SpikeMode mode) const {
  // A one-step window needs a target; the heads' output is discarded.
  const IndexToken seq[2] = {input, IndexToken{}};
  run_window(seq, 0, 1, state, mode, nullptr, nullptr);
  return state.s_hid;
}

std::vector<double> ToySRNN::type_logits(std::span<const double> hidden) const {
  std::vector<double> out(params_.begin() + static_cast<std::ptrdiff_t>(type_b_),
                          params_.begin() + static_cast<std::ptrdiff_t>(type_b_ + sizes_[kType]));
  gemv(params_.data() + type_w_, sizes_[kType], cfg_.hidden, hidden.data(), out.data());
  return out;
}

std::vector<double> ToySRNN::field_logits(std::span<const double> hidden, int type_index, Field f) const {
  const int h = cfg_.hidden;
  const int dt = cfg_.type_embed_dim;
  const int fi = static_cast<int>(f);
  std::vector<double> in(h + dt);
  std::copy(hidden.begin(), hidden.end(), in.begin());
  const double* temb = params_.data() + type_emb_ + static_cast<std::size_t>(type_index) * dt;
  std::copy(temb, temb + dt, in.begin() + h);
  std::vector<double> z(params_.begin() + static_cast<std::ptrdiff_t>(proj_b_),
                        params_.begin() + static_cast<std::ptrdiff_t>(proj_b_ + h));
  gemv(params_.data() + proj_w_, h, h + dt, in.data(), z.data());
  std::vector<double> out(params_.begin() + static_cast<std::ptrdiff_t>(head_b_[fi]),
                          params_.begin() + static_cast<std::ptrdiff_t>(head_b_[fi] + sizes_[fi]));
  gemv(params_.data() + head_w_[fi], sizes_[fi], h, z.data(), out.data());
  return out;
}

// ---------------------------------------------------------------------------
// Training

TrainResult train_toy(const ToySRNN& model, std::span<const std::vector<CompoundToken>> corpus, int epochs) {
  if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "training corpus is empty");
  if (epochs < 0) throw Error(ErrorCode::InvalidArgument, "epochs must be non-negative");
  std::vector<std::vector<IndexToken>> data;
  for (const auto& seq : corpus) data.push_back(model.to_indices(seq));

  auto corpus_loss = [&](const ToySRNN& m) {
    double total = 0.0;
    std::size_t steps = 0;
    for (const auto& seq : data) {
      if (seq.size() < 2) continue;
      total += m.loss(seq) * static_cast<double>(seq.size() - 1);
      steps += seq.size() - 1;
    }
    return steps ? total / static_cast<double>(steps) : 0.0;
  };

  TrainResult result{model, {}, {}};
  ToySRNN current = model;
  double best = corpus_loss(current);
  if (!std::isfinite(best)) throw Error(ErrorCode::NonFiniteLoss, "initial loss is not finite");
  result.loss_curve.push_back(best);

  const auto& cfg = current.config();
  const std::size_t window = static_cast<std::size_t>(cfg.bptt_window);
  std::vector<double> grad(current.parameters().size());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    for (const auto& seq : data) {
      if (seq.size() < 2) continue;
      const std::size_t steps = seq.size() - 1;
      ToySRNN::State state = current.initial_state();
      for (std::size_t b = 0; b < steps; b += window) {
        const std::size_t end = std::min(steps, b + window);
        std::fill(grad.begin(), grad.end(), 0.0);
        const double l = current.run_window(seq, b, end, state, SpikeMode::Hard, grad.data(), nullptr);
        if (!std::isfinite(l)) {
          throw Error(ErrorCode::NonFiniteLoss, "loss diverged in epoch " + std::to_string(epoch + 1));
        }
        const double scale = 1.0 / static_cast<double>(end - b);
        double norm2 = 0.0;
        for (auto& gi : grad) {
          gi *= scale;
          norm2 += gi * gi;
        }
        const double norm = std::sqrt(norm2);
        if (!std::isfinite(norm)) throw Error(ErrorCode::NonFiniteLoss, "gradient is not finite");
        const double clip = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
        auto& params = current.parameters();
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= cfg.learning_rate * clip * grad[i];
      }
    }
    const double l = corpus_loss(current);
    if (!std::isfinite(l)) throw Error(ErrorCode::NonFiniteLoss, "loss diverged after epoch " + std::to_string(epoch + 1));
    result.loss_curve.push_back(l);
    if (l < best) {
      best = l;
      result.model = current;
    }
  }
  result.accuracy = result.model.accuracy(data);
  return result;
}

// ---------------------------------------------------------------------------
// Sampling

namespace {

int sample(std::vector<double> logits, const std::vector<bool>& allowed, double temperature, Rng& rng) {
  double m = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (allowed[i]) m = std::max(m, logits[i]);
  }
  std::vector<double> w(logits.size(), 0.0);
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!allowed[i]) continue;
    w[i] = std::exp((logits[i] - m) / temperature);
    sum += w[i];
  }
  double u = rng.uniform01() * sum;
  int last = -1;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!allowed[i]) continue;
    last = static_cast<int>(i);
    if (u < w[i]) return last;
    u -= w[i];
  }
  return last;
}

}  // namespace

std::vector<CompoundToken> generate(const ToySRNN& model, std::span<const CompoundToken> prompt,
                                    const GenerateOptions& opts) {
  if (opts.length < 1) throw Error(ErrorCode::InvalidArgument, "length must be >= 1");
  if (!(opts.temperature > 0.0)) throw Error(ErrorCode::InvalidArgument, "temperature must be positive");
  if (prompt.empty()) throw Error(ErrorCode::InvalidPrompt, "prompt is empty");
  const Vocab& vocab = model.vocab();
  for (const auto& t : prompt) {
    if (t.type == static_cast<int>(TokenType::EOS)) throw Error(ErrorCode::InvalidPrompt, "prompt contains EOS");
  }
  {
    std::vector<CompoundToken> probe(prompt.begin(), prompt.end());
    probe.push_back(CompoundToken::eos());
    try {
      decode(probe, vocab);
    } catch (const Error& e) {
      throw Error(ErrorCode::InvalidPrompt, e.what());
    }
  }

  const int res = vocab.resolution();
  const int metric_idx = vocab.index_of(Field::Type, static_cast<int>(TokenType::Metric));
  const int note_idx = vocab.index_of(Field::Type, static_cast<int>(TokenType::Note));
  const int eos_idx = vocab.index_of(Field::Type, static_cast<int>(TokenType::EOS));
  const auto& sizes = model.field_sizes();

  Rng rng(opts.seed);
  std::vector<CompoundToken> out(prompt.begin(), prompt.end());
  ToySRNN::State state = model.initial_state();
  std::vector<double> hidden;
  int beat_pos = 0;
  for (const auto& t : prompt) {
    hidden = model.step(state, vocab.to_indices(t));
    if (t.type == static_cast<int>(TokenType::Metric)) beat_pos = t.bar_beat;
  }

  auto value_mask = [&](Field f, auto pred) {
    const int fi = static_cast<int>(f);
    std::vector<bool> m(sizes[fi], false);
    for (int i = 1; i < sizes[fi]; ++i) m[i] = pred(vocab.value_of(f, i));
    return m;
  };
  auto any = [](const std::vector<bool>& m) { return std::find(m.begin(), m.end(), true) != m.end(); };
  auto only_none = [&](Field f) {
    std::vector<bool> m(sizes[static_cast<int>(f)], false);
    m[0] = true;
    return m;
  };
  auto any_value = [&](Field f) { return value_mask(f, [](int) { return true; }); };
  auto with_none = [](std::vector<bool> m) {
    m[0] = true;
    return m;
  };

  for (int n = 0; n < opts.length; ++n) {
    const bool last = n + 1 == opts.length;
    const auto metric_pos = value_mask(Field::BarBeat, [&](int v) { return v % res == 0; });
    const auto note_pos = value_mask(Field::BarBeat, [&](int v) { return v >= beat_pos && v < beat_pos + res; });
    std::vector<bool> type_mask(sizes[kType], false);
    type_mask[eos_idx] = true;
    if (!last) {
      type_mask[metric_idx] = any(metric_pos);
      type_mask[note_idx] = any(note_pos) && any(any_value(Field::Pitch)) && any(any_value(Field::Duration)) &&
                            any(any_value(Field::Velocity));
    }
    const int type_index = sample(model.type_logits(hidden), type_mask, opts.temperature, rng);
    const int type = vocab.value_of(Field::Type, type_index);
    if (type == static_cast<int>(TokenType::EOS)) {
      out.push_back(CompoundToken::eos());
      break;
    }

    std::array<std::vector<bool>, kNumFields> masks;
    if (type == static_cast<int>(TokenType::Metric)) {
      masks[static_cast<int>(Field::Tempo)] = with_none(any_value(Field::Tempo));
      masks[static_cast<int>(Field::Chord)] = with_none(any_value(Field::Chord));
      masks[static_cast<int>(Field::BarBeat)] = metric_pos;
      masks[static_cast<int>(Field::Pitch)] = only_none(Field::Pitch);
      masks[static_cast<int>(Field::Duration)] = only_none(Field::Duration);
      masks[static_cast<int>(Field::Velocity)] = only_none(Field::Velocity);
    } else {
      masks[static_cast<int>(Field::Tempo)] = only_none(Field::Tempo);
      masks[static_cast<int>(Field::Chord)] = only_none(Field::Chord);
      masks[static_cast<int>(Field::BarBeat)] = note_pos;
      masks[static_cast<int>(Field::Pitch)] = any_value(Field::Pitch);
      masks[static_cast<int>(Field::Duration)] = any_value(Field::Duration);
      masks[static_cast<int>(Field::Velocity)] = any_value(Field::Velocity);
    }
    IndexToken idx{};
    idx[kType] = type_index;
    for (int f = 1; f < kNumFields; ++f) {
      idx[f] = sample(model.field_logits(hidden, type_index, static_cast<Field>(f)), masks[f], opts.temperature,
                      rng);
    }
    const CompoundToken tok = vocab.from_indices(idx);
    if (tok.type == static_cast<int>(TokenType::Metric)) beat_pos = tok.bar_beat;
    out.push_back(tok);
    hidden = model.step(state, idx);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr std::array<std::string_view, kNumFields> kVocabTensorNames{
    "vocab.type", "vocab.tempo", "vocab.chord", "vocab.bar_beat", "vocab.pitch", "vocab.duration", "vocab.velocity"};

// Config values are doubles; each is stored as its two 32-bit halves
// reinterpreted as float so the loaded model matches bit for bit.
void put_f64(std::vector<float>& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  out.push_back(std::bit_cast<float>(static_cast<std::uint32_t>(bits)));
  out.push_back(std::bit_cast<float>(static_cast<std::uint32_t>(bits >> 32)));
}

double get_f64(const std::vector<float>& in, std::size_t i) {
  const std::uint64_t lo = std::bit_cast<std::uint32_t>(in[2 * i]);
  const std::uint64_t hi = std::bit_cast<std::uint32_t>(in[2 * i + 1]);
  return std::bit_cast<double>(lo | (hi << 32));
}

constexpr std::size_t kConfigValues = kNumFields + 12;

}  // namespace

std::vector<std::uint8_t> save_checkpoint(const ToySRNN& model) {
  const auto& c = model.config();
  std::vector<NamedTensor> tensors;
  std::vector<float> cfg;
  for (int d : c.embed_dims) put_f64(cfg, d);
  for (double v : {static_cast<double>(c.enc_dim), static_cast<double>(c.hidden),
                   static_cast<double>(c.type_embed_dim), c.lif.tau_m(), c.lif.v_th(), c.lif.v_reset(), c.lif.r(),
                   c.surrogate_alpha, c.learning_rate, static_cast<double>(c.bptt_window), c.clip_norm}) {
    put_f64(cfg, v);
  }
  put_f64(cfg, std::bit_cast<double>(c.seed));
  tensors.push_back({"config", {static_cast<std::uint32_t>(kConfigValues), 2}, cfg});
  tensors.push_back({"vocab.resolution", {1}, {static_cast<float>(model.vocab().resolution())}});
  for (int f = 0; f < kNumFields; ++f) {
    const auto& vals = model.vocab().values(static_cast<Field>(f));
    tensors.push_back({std::string(kVocabTensorNames[f]),
                       {static_cast<std::uint32_t>(vals.size())},
                       std::vector<float>(vals.begin(), vals.end())});
  }
  const auto& params = model.parameters();
  for (const auto& v : model.tensors()) {
    NamedTensor t{v.name, {static_cast<std::uint32_t>(v.rows), static_cast<std::uint32_t>(v.cols)}, {}};
    t.data.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) t.data.push_back(static_cast<float>(params[v.offset + i]));
    tensors.push_back(std::move(t));
  }
  return write_tensor_container(tensors);
}

ToySRNN load_checkpoint(std::span<const std::uint8_t> bytes) {
  const auto tensors = read_tensor_container(bytes);
  auto find = [&](std::string_view name) -> const NamedTensor& {
    for (const auto& t : tensors) {
      if (t.name == name) return t;
    }
    throw Error(ErrorCode::MalformedCheckpoint, "missing tensor " + std::string(name));
  };
  const auto& cfgt = find("config");
  if (cfgt.data.size() != 2 * kConfigValues) throw Error(ErrorCode::MalformedCheckpoint, "bad config tensor");
  std::size_t i = 0;
  auto next = [&] { return get_f64(cfgt.data, i++); };
  ToySRNNConfig cfg;
  for (int f = 0; f < kNumFields; ++f) cfg.embed_dims[f] = static_cast<int>(next());
  cfg.enc_dim = static_cast<int>(next());
  cfg.hidden = static_cast<int>(next());
  cfg.type_embed_dim = static_cast<int>(next());
  const double tau = next(), vth = next(), vreset = next(), r = next();
  try {
    cfg.lif = LIFParams(tau, vth, vreset, r);
  } catch (const Error& e) {
    throw Error(ErrorCode::MalformedCheckpoint, e.what());
  }
  cfg.surrogate_alpha = next();
  cfg.learning_rate = next();
  cfg.bptt_window = static_cast<int>(next());
  cfg.clip_norm = next();
  cfg.seed = std::bit_cast<std::uint64_t>(next());
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::MalformedCheckpoint, e.what());
  }

  Vocab vocab(static_cast<int>(find("vocab.resolution").data.at(0)));
  for (int f = 0; f < kNumFields; ++f) {
    for (float v : find(kVocabTensorNames[f]).data) vocab.add(static_cast<Field>(f), static_cast<int>(v));
  }
  ToySRNN model(cfg, vocab);
  auto& params = model.parameters();
  for (const auto& v : model.tensors()) {
    const auto& t = find(v.name);
    if (t.dims.size() != 2 || t.dims[0] != static_cast<std::uint32_t>(v.rows) ||
        t.dims[1] != static_cast<std::uint32_t>(v.cols)) {
      throw Error(ErrorCode::MalformedCheckpoint, "shape mismatch for " + v.name);
    }
    for (std::size_t k = 0; k < v.size(); ++k) params[v.offset + k] = t.data[k];
  }
  return model;
}

}  // namespace muspike
