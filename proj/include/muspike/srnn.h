/**
 * @file srnn.h
 * @brief Desk-scale spiking recurrent sequence model over compound-word tokens.
 *
 * Per step:
 *   x      = concat of the seven field embeddings of the input token
 *   s_enc  = LIF(W_enc x + b_enc)                      spike encoder
 *   s_hid  = LIF(W_in s_enc + W_hh s_hid[t-1] + b_h)   recurrent unit, LIF on outputs
 *   type   = W_type s_hid + b_type
 *   z      = W_proj [s_hid ; E_type(next type)] + b_proj
 *   field  = W_f z + b_f                               for the six attribute heads
 *
 * The next type is teacher-forced during training and sampled first during
 * generation. The backward pass substitutes the ATan surrogate derivative for
 * the spike step; in SpikeMode::Smooth the forward pass uses the ATan primitive
 * itself so that gradients are exact and can be checked numerically.
 */
#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "muspike/lif.h"
#include "muspike/tokenizer.h"

namespace muspike {

using IndexToken = std::array<int, kNumFields>;

enum class SpikeMode { Hard, Smooth };

struct ToySRNNConfig {
  std::array<int, kNumFields> embed_dims{8, 16, 16, 24, 32, 16, 16};
  int enc_dim = 256;
  int hidden = 256;
  int type_embed_dim = 16;
  LIFParams lif{2.0, 0.6};
  double surrogate_alpha = 2.0;
  double learning_rate = 0.05;
  int bptt_window = 32;
  double clip_norm = 1.0;
  std::uint64_t seed = 0;

  /// Throws InvalidParams on non-positive sizes or rates.
  void validate() const;
  friend bool operator==(const ToySRNNConfig&, const ToySRNNConfig&) = default;
};

struct TensorView {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;
  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
};

struct FieldAccuracy {
  std::array<double, kNumFields> per_field{};
  double overall = 0.0;
  std::size_t predictions = 0;  // steps x fields
};

class ToySRNN {
 public:
  /// Initializes all weights from cfg.seed. The vocabulary is widened to hold
  /// every token type so that generation can always terminate.
  ToySRNN(ToySRNNConfig cfg, Vocab vocab);

  const ToySRNNConfig& config() const { return cfg_; }
  const Vocab& vocab() const { return vocab_; }
  const std::array<int, kNumFields>& field_sizes() const { return sizes_; }

  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }
  const std::vector<TensorView>& tensors() const { return views_; }
  const TensorView& tensor(std::string_view name) const;

  std::vector<IndexToken> to_indices(std::span<const CompoundToken> tokens) const;

  /// Mean over predicted steps of the summed seven-field next-token cross-entropy.
  double loss(std::span<const IndexToken> seq, SpikeMode mode = SpikeMode::Hard) const;
  /// Same loss plus its gradient (sized like parameters()), backpropagated
  /// through time in windows of `window` steps (0 = whole sequence).
  double loss_and_grad(std::span<const IndexToken> seq, SpikeMode mode, std::vector<double>& grad,
                       int window = 0) const;
  FieldAccuracy accuracy(std::span<const std::vector<IndexToken>> corpus) const;

  /// Recurrent state carried between steps.
  struct State {
    std::vector<double> v_enc;
    std::vector<double> v_hid;
    std::vector<double> s_hid;
  };
  State initial_state() const;
  /// Advances one input token and returns the hidden spike vector.
  const std::vector<double>& step(State& state, const IndexToken& input, SpikeMode mode = SpikeMode::Hard) const;
  std::vector<double> type_logits(std::span<const double> hidden) const;
  /// Logits of attribute field `f` (not Type) given the hidden spikes and the next token type index.
  std::vector<double> field_logits(std::span<const double> hidden, int type_index, Field f) const;

 private:
  friend struct TrainResult train_toy(const ToySRNN&, std::span<const std::vector<CompoundToken>>, int);
  struct Window;
  double run_window(std::span<const IndexToken> seq, std::size_t begin, std::size_t end, State& state,
                    SpikeMode mode, double* grad, std::array<std::size_t, kNumFields>* correct) const;

  ToySRNNConfig cfg_;
  Vocab vocab_;
  std::array<int, kNumFields> sizes_{};
  int in_dim_ = 0;
  std::vector<double> params_;
  std::vector<TensorView> views_;
  // Offsets into params_.
  std::array<std::size_t, kNumFields> emb_{};
  std::size_t enc_w_ = 0, enc_b_ = 0, in_w_ = 0, hh_w_ = 0, h_b_ = 0;
  std::size_t type_w_ = 0, type_b_ = 0, type_emb_ = 0, proj_w_ = 0, proj_b_ = 0;
  std::array<std::size_t, kNumFields> head_w_{}, head_b_{};
};

struct TrainResult {
  ToySRNN model;
  /// Evaluated corpus loss before training followed by one entry per epoch.
  std::vector<double> loss_curve;
  FieldAccuracy accuracy;
};

/// Truncated-BPTT SGD with global-norm clipping. Deterministic given the model
/// seed. Returns the parameters with the lowest evaluated corpus loss, so the
/// final loss never exceeds the initial one. Throws NonFiniteLoss on divergence.
TrainResult train_toy(const ToySRNN& model, std::span<const std::vector<CompoundToken>> corpus, int epochs);

struct GenerateOptions {
  int length = 64;  // new tokens, the last of which is EOS
  double temperature = 1.0;
  std::uint64_t seed = 0;
};

/// Autoregressive sampling: type first, then each attribute under a mask that
/// keeps the token valid for its type and decodable. Returns prompt + continuation.
std::vector<CompoundToken> generate(const ToySRNN& model, std::span<const CompoundToken> prompt,
                                    const GenerateOptions& opts);

/// Model checkpoint container ("MSPK", version, named float32 tensors).
std::vector<std::uint8_t> save_checkpoint(const ToySRNN& model);
ToySRNN load_checkpoint(std::span<const std::uint8_t> bytes);

}  // namespace muspike
