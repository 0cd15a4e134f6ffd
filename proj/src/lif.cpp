#include "muspike/lif.h"

#include <cmath>
#include <random>
#include <string>

#include "muspike/error.h"
#include "muspike/rng.h"

namespace muspike {

LIFParams::LIFParams(double tau_m, double v_th, double v_reset, double r)
    : tau_m_(tau_m), v_th_(v_th), v_reset_(v_reset), r_(r) {
  if (!std::isfinite(tau_m) || !std::isfinite(v_th) || !std::isfinite(v_reset) || !std::isfinite(r)) {
    throw Error(ErrorCode::InvalidParams, "LIF parameters must be finite");
  }
  if (tau_m < 1.0) throw Error(ErrorCode::InvalidParams, "tau_m must be >= 1");
  if (!(v_th > v_reset)) throw Error(ErrorCode::InvalidParams, "v_th must exceed v_reset");
}

LIFStepResult lif_step(const LIFState& state, std::span<const double> input_current, const LIFParams& p) {
  if (input_current.size() != state.v.size()) {
    throw Error(ErrorCode::DimensionMismatch, "input has " + std::to_string(input_current.size()) +
                                                  " entries for " + std::to_string(state.v.size()) + " neurons");
  }
  LIFStepResult out;
  out.state.v.resize(state.v.size());
  out.spikes.resize(state.v.size());
  const double k = 1.0 / p.tau_m();
  for (std::size_t i = 0; i < state.v.size(); ++i) {
    const double v = state.v[i] + k * (-(state.v[i] - p.v_reset()) + p.r() * input_current[i]);
    const bool fire = v >= p.v_th();
    out.spikes[i] = fire ? 1 : 0;
    out.state.v[i] = fire ? p.v_reset() : v;
  }
  out.state.spiked = out.spikes;
  return out;
}

double atan_surrogate(double u, double alpha) {
  return std::atan(std::numbers::pi * alpha * u / 2.0) / std::numbers::pi + 0.5;
}

void SpikeEncoderConfig::validate() const {
  if (in_dim <= 0 || out_dim <= 0) throw Error(ErrorCode::InvalidParams, "encoder dimensions must be positive");
  if (!(surrogate_alpha > 0.0)) throw Error(ErrorCode::InvalidParams, "surrogate alpha must be positive");
}

SpikeEncoder::SpikeEncoder(SpikeEncoderConfig cfg) : cfg_(cfg) {
  cfg_.validate();
  weights_.assign(static_cast<std::size_t>(cfg_.out_dim) * cfg_.in_dim, 0.0);
  bias_.assign(cfg_.out_dim, 0.0);
}

SpikeEncoder::SpikeEncoder(SpikeEncoderConfig cfg, std::uint64_t seed) : SpikeEncoder(cfg) {
  Rng rng(seed);
  const double a = 1.0 / std::sqrt(static_cast<double>(cfg_.in_dim));
  for (auto& w : weights_) w = rng.uniform(-a, a);
}

std::vector<std::vector<std::uint8_t>> SpikeEncoder::encode(std::span<const std::vector<double>> embeddings) const {
  LIFState state(cfg_.out_dim, cfg_.lif.v_reset());
  std::vector<std::vector<std::uint8_t>> out;
  out.reserve(embeddings.size());
  std::vector<double> current(cfg_.out_dim);
  for (const auto& x : embeddings) {
    if (static_cast<int>(x.size()) != cfg_.in_dim) {
      throw Error(ErrorCode::DimensionMismatch, "embedding of size " + std::to_string(x.size()) +
                                                    ", expected " + std::to_string(cfg_.in_dim));
    }
    for (int o = 0; o < cfg_.out_dim; ++o) {
      double acc = bias_[o];
      const double* row = weights_.data() + static_cast<std::size_t>(o) * cfg_.in_dim;
      for (int i = 0; i < cfg_.in_dim; ++i) acc += row[i] * x[i];
      current[o] = acc;
    }
    auto step = lif_step(state, current, cfg_.lif);
    state = std::move(step.state);
    out.push_back(std::move(step.spikes));
  }
  return out;
}

}  // namespace muspike
