/**
 * @file lif.h
 * @brief Leaky integrate-and-fire neurons, the ATan surrogate derivative and a
 *        linear-projection spike encoder.
 *
 * Membrane update (explicit Euler, unit step):
 *   v' = v + (1/tau_m) * (-(v - v_reset) + r * I)
 *   spike = v' >= v_th ; spiking neurons are reset to v_reset.
 */
#pragma once

#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

namespace muspike {

class LIFParams {
 public:
  /// Throws InvalidParams unless tau_m >= 1, v_th > v_reset and r is finite.
  explicit LIFParams(double tau_m = 2.0, double v_th = 0.5, double v_reset = 0.0, double r = 1.0);

  double tau_m() const { return tau_m_; }
  double v_th() const { return v_th_; }
  double v_reset() const { return v_reset_; }
  double r() const { return r_; }

  friend bool operator==(const LIFParams&, const LIFParams&) = default;

 private:
  double tau_m_;
  double v_th_;
  double v_reset_;
  double r_;
};

struct LIFState {
  std::vector<double> v;
  std::vector<std::uint8_t> spiked;

  LIFState() = default;
  LIFState(std::size_t neurons, double v_init) : v(neurons, v_init), spiked(neurons, 0) {}
  std::size_t size() const { return v.size(); }
};

struct LIFStepResult {
  LIFState state;
  std::vector<std::uint8_t> spikes;
};

LIFStepResult lif_step(const LIFState& state, std::span<const double> input_current, const LIFParams& p);

/// d/du of the smooth ATan spike primitive: (alpha/2) / (1 + (pi*alpha*u/2)^2).
inline double atan_surrogate_grad(double u, double alpha) {
  const double x = std::numbers::pi * alpha * u / 2.0;
  return (alpha / 2.0) / (1.0 + x * x);
}

/// The smooth primitive itself, (1/pi)*atan(pi*alpha*u/2) + 1/2.
double atan_surrogate(double u, double alpha);

struct SpikeEncoderConfig {
  int in_dim = 128;
  int out_dim = 256;
  LIFParams lif{2.0, 0.5};
  double surrogate_alpha = 2.0;

  /// Throws InvalidParams on non-positive dimensions or sharpness.
  void validate() const;
};

/// Linear projection followed by a stateful LIF layer.
class SpikeEncoder {
 public:
  /// Zero-initialized weights.
  explicit SpikeEncoder(SpikeEncoderConfig cfg);
  /// Uniform(-1/sqrt(in), 1/sqrt(in)) weights from a seed.
  SpikeEncoder(SpikeEncoderConfig cfg, std::uint64_t seed);

  const SpikeEncoderConfig& config() const { return cfg_; }
  /// Row-major out_dim x in_dim.
  std::vector<double>& weights() { return weights_; }
  const std::vector<double>& weights() const { return weights_; }
  std::vector<double>& bias() { return bias_; }

  /// One binary spike vector per input step; membrane state starts at v_reset.
  std::vector<std::vector<std::uint8_t>> encode(std::span<const std::vector<double>> embeddings) const;

 private:
  SpikeEncoderConfig cfg_;
  std::vector<double> weights_;
  std::vector<double> bias_;
};

inline std::vector<std::vector<std::uint8_t>> spike_encode(std::span<const std::vector<double>> embeddings,
                                                           const SpikeEncoder& encoder) {
  return encoder.encode(embeddings);
}

}  // namespace muspike
