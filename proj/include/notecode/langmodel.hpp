#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "notecode/checkpoint.hpp"
#include "notecode/errors.hpp"
#include "notecode/evalmetrics.hpp"
#include "notecode/numcore/kernels.hpp"
#include "notecode/numcore/optim.hpp"
#include "notecode/rng.hpp"
#include "notecode/textprep.hpp"

namespace notecode::num {

inline void to_json(nlohmann::json& j, const DropoutSpec& d) {
  j = {{"p_encoder", d.p_encoder},   {"p_input", d.p_input},   {"p_weight", d.p_weight},
       {"p_hidden", d.p_hidden},     {"p_output", d.p_output}, {"p_classifier", d.p_classifier}};
}

inline void from_json(const nlohmann::json& j, DropoutSpec& d) {
  d.p_encoder = j.value("p_encoder", 0.0);
  d.p_input = j.value("p_input", 0.0);
  d.p_weight = j.value("p_weight", 0.0);
  d.p_hidden = j.value("p_hidden", 0.0);
  d.p_output = j.value("p_output", 0.0);
  d.p_classifier = j.value("p_classifier", 0.5);
}

}  // namespace notecode::num

namespace notecode::langmodel {

using num::IdMat;
using num::Mat;
using num::Parameter;

// Desk-scale defaults; the full published sizes live in canonical_lm_config().
struct LMConfig {
  int vocab_size = 0;   // V, including the unk/pad specials
  int embed_dim = 48;   // d_e
  int hidden_dim = 96;  // d_h
  int num_layers = 3;   // L
  int bptt_len = 35;
  int batch_size = 16;
  num::DropoutSpec dropout;
  bool tie_weights = true;  // decoder weight aliases the embedding
  std::uint64_t seed = 42;

  void validate() const {
    if (vocab_size < 3) throw ConfigError("vocab_size must be >= 3 (unk, pad, one real token)");
    if (embed_dim < 1 || hidden_dim < 1) throw ConfigError("model dims must be positive");
    if (num_layers < 1) throw ConfigError("num_layers must be >= 1");
    if (bptt_len < 2) throw ConfigError("bptt_len must be >= 2");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    dropout.validate();
  }

  // With tied weights the last LSTM layer produces embedding-sized vectors so
  // the decoder can reuse the embedding matrix.
  int layer_output_dim(int layer) const {
    return (layer == num_layers - 1 && tie_weights) ? embed_dim : hidden_dim;
  }
  int layer_input_dim(int layer) const {
    return layer == 0 ? embed_dim : layer_output_dim(layer - 1);
  }
  int decoder_input_dim() const { return layer_output_dim(num_layers - 1); }
};

// The published configuration this pipeline inherits its shape from.
inline LMConfig canonical_lm_config() {
  LMConfig config;
  config.embed_dim = 400;
  config.hidden_dim = 1150;
  config.num_layers = 3;
  config.bptt_len = 70;
  config.batch_size = 32;
  return config;
}

inline void to_json(nlohmann::json& j, const LMConfig& c) {
  j = {{"vocab_size", c.vocab_size}, {"embed_dim", c.embed_dim},
       {"hidden_dim", c.hidden_dim}, {"num_layers", c.num_layers},
       {"bptt_len", c.bptt_len},     {"batch_size", c.batch_size},
       {"dropout", c.dropout},       {"tie_weights", c.tie_weights},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, LMConfig& c) {
  const LMConfig defaults;
  c.vocab_size = j.value("vocab_size", defaults.vocab_size);
  c.embed_dim = j.value("embed_dim", defaults.embed_dim);
  c.hidden_dim = j.value("hidden_dim", defaults.hidden_dim);
  c.num_layers = j.value("num_layers", defaults.num_layers);
  c.bptt_len = j.value("bptt_len", defaults.bptt_len);
  c.batch_size = j.value("batch_size", defaults.batch_size);
  c.dropout = j.value("dropout", defaults.dropout);
  c.tie_weights = j.value("tie_weights", defaults.tie_weights);
  c.seed = j.value("seed", defaults.seed);
}

template <typename T>
struct LmModel {
  LMConfig config;
  Parameter<T> embedding;                  // [V x d_e]
  std::vector<num::LstmParams<T>> layers;  // stacked, input d_e then d_h
  Parameter<T> decoder_w;                  // [V x d_last]; empty when tied
  Parameter<T> decoder_b;                  // [1 x V]

  Mat<T>& decoder_weight() { return config.tie_weights ? embedding.value : decoder_w.value; }
  const Mat<T>& decoder_weight() const {
    return config.tie_weights ? embedding.value : decoder_w.value;
  }
  Mat<T>& decoder_weight_grad() { return config.tie_weights ? embedding.grad : decoder_w.grad; }

  std::vector<Parameter<T>*> params() {
    std::vector<Parameter<T>*> out{&embedding};
    for (auto& layer : layers) {
      out.push_back(&layer.W);
      out.push_back(&layer.U);
      out.push_back(&layer.b);
    }
    if (!config.tie_weights) out.push_back(&decoder_w);
    out.push_back(&decoder_b);
    return out;
  }

  long long param_count() const {
    long long n = embedding.value.size() + decoder_b.value.size();
    for (const auto& layer : layers)
      n += layer.W.value.size() + layer.U.value.size() + layer.b.value.size();
    if (!config.tie_weights) n += decoder_w.value.size();
    return n;
  }
};

// Uniform(-0.1, 0.1) embedding/decoder, uniform(-1/sqrt(d), 1/sqrt(d)) LSTM
// matrices, zero biases except the forget-gate block, which starts at 1.
// Deterministic per config.seed.
template <typename T>
LmModel<T> init_lm(const LMConfig& config) {
  config.validate();
  LmModel<T> model;
  model.config = config;
  Rng rng(config.seed);

  model.embedding = Parameter<T>("embedding", config.vocab_size, config.embed_dim);
  num::fill_uniform(model.embedding.value, -0.1, 0.1, rng);

  for (int l = 0; l < config.num_layers; ++l) {
    const int d_in = config.layer_input_dim(l);
    const int d_out = config.layer_output_dim(l);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d_out));
    const std::string prefix = "lstm" + std::to_string(l);
    num::LstmParams<T> layer{Parameter<T>(prefix + ".W", d_in, 4 * d_out),
                             Parameter<T>(prefix + ".U", d_out, 4 * d_out),
                             Parameter<T>(prefix + ".b", 1, 4 * d_out)};
    num::fill_uniform(layer.W.value, -bound, bound, rng);
    num::fill_uniform(layer.U.value, -bound, bound, rng);
    layer.b.value.block(0, d_out, 1, d_out).setOnes();  // forget-gate bias
    model.layers.push_back(std::move(layer));
  }

  if (config.tie_weights) {
    model.decoder_w = Parameter<T>("decoder.W", 0, 0);
  } else {
    model.decoder_w = Parameter<T>("decoder.W", config.vocab_size, config.decoder_input_dim());
    num::fill_uniform(model.decoder_w.value, -0.1, 0.1, rng);
  }
  model.decoder_b = Parameter<T>("decoder.b", 1, config.vocab_size);
  return model;
}

// Per-layer recurrent state, carried across BPTT blocks within an epoch and
// reset between epochs. Gradients never flow across block boundaries.
template <typename T>
struct LmState {
  std::vector<Mat<T>> h, c;

  void reset(const LMConfig& config, int batch) {
    h.assign(static_cast<std::size_t>(config.num_layers), Mat<T>());
    c.assign(static_cast<std::size_t>(config.num_layers), Mat<T>());
    for (int l = 0; l < config.num_layers; ++l) {
      h[static_cast<std::size_t>(l)] = Mat<T>::Zero(batch, config.layer_output_dim(l));
      c[static_cast<std::size_t>(l)] = Mat<T>::Zero(batch, config.layer_output_dim(l));
    }
  }

  bool matches(const LMConfig& config, int batch) const {
    return static_cast<int>(h.size()) == config.num_layers && !h.empty() &&
           h[0].rows() == batch;
  }
};

namespace detail {

inline std::vector<int> step_ids(const IdMat& ids, Eigen::Index t) {
  std::vector<int> out(static_cast<std::size_t>(ids.rows()));
  for (Eigen::Index b = 0; b < ids.rows(); ++b) out[static_cast<std::size_t>(b)] = ids(b, t);
  return out;
}

// Everything the backward pass needs from one block's forward pass.
template <typename T>
struct LmTapes {
  std::vector<std::vector<int>> ids;       // per step
  std::vector<T> enc_scale;                // per vocab row; empty in eval mode
  Mat<T> input_mask;                       // [B x d_e]; empty in eval mode
  std::vector<Mat<T>> hidden_masks;        // layers 0..L-2
  Mat<T> output_mask;                      // [B x d_last]
  std::vector<num::LstmSeqCache<T>> seq;   // per layer
  std::vector<Mat<T>> final_out;           // decoder inputs per step (masked)
};

// Shared forward. Training mode draws one mask per site per block
// (variational discipline: reused across the block's timesteps); evaluation
// mode applies no masks and is deterministic. Returns per-step logits.
template <typename T>
std::vector<Mat<T>> lm_forward_impl(const LmModel<T>& model, const IdMat& ids, LmState<T>& state,
                                    bool train, Rng* rng, LmTapes<T>* tapes) {
  const LMConfig& config = model.config;
  const int batch = static_cast<int>(ids.rows());
  const Eigen::Index steps = ids.cols();
  const int n_layers = config.num_layers;
  if (batch < 1 || steps < 1) throw ShapeError("lm_forward: empty id block");
  if (!state.matches(config, batch)) state.reset(config, batch);
  if (train && !rng) throw ConfigError("lm_forward: training mode needs an rng");

  // Masks, drawn in a fixed order for reproducibility.
  std::vector<T> enc_scale;
  Mat<T> input_mask, output_mask;
  std::vector<Mat<T>> weight_masks(static_cast<std::size_t>(n_layers));
  std::vector<Mat<T>> hidden_masks;
  if (train) {
    enc_scale = num::embedding_row_scales<T>(config.vocab_size, config.dropout.p_encoder, *rng);
    input_mask = num::dropout_mask<T>(batch, config.embed_dim, config.dropout.p_input, *rng);
    for (int l = 0; l < n_layers; ++l) {
      const int d_out = config.layer_output_dim(l);
      weight_masks[static_cast<std::size_t>(l)] =
          num::keep_mask<T>(d_out, 4 * d_out, config.dropout.p_weight, *rng);
    }
    for (int l = 0; l + 1 < n_layers; ++l)
      hidden_masks.push_back(
          num::dropout_mask<T>(batch, config.layer_output_dim(l), config.dropout.p_hidden, *rng));
    output_mask =
        num::dropout_mask<T>(batch, config.decoder_input_dim(), config.dropout.p_output, *rng);
  }
  const T inv_keep = static_cast<T>(1.0 / (1.0 - config.dropout.p_weight));

  if (tapes) {
    tapes->ids.resize(static_cast<std::size_t>(steps));
    tapes->enc_scale = enc_scale;
    tapes->input_mask = input_mask;
    tapes->hidden_masks = hidden_masks;
    tapes->output_mask = output_mask;
    tapes->seq.assign(static_cast<std::size_t>(n_layers), num::LstmSeqCache<T>{});
    tapes->final_out.resize(static_cast<std::size_t>(steps));
  }

  // Embedding with whole-word (encoder) and input dropout.
  std::vector<Mat<T>> xs(static_cast<std::size_t>(steps));
  for (Eigen::Index t = 0; t < steps; ++t) {
    std::vector<int> ids_t = step_ids(ids, t);
    Mat<T> emb = num::embedding_fwd(ids_t, model.embedding.value);
    if (train) {
      for (int b = 0; b < batch; ++b)
        emb.row(b) *= enc_scale[static_cast<std::size_t>(ids_t[static_cast<std::size_t>(b)])];
      emb = emb.cwiseProduct(input_mask);
    }
    if (tapes) tapes->ids[static_cast<std::size_t>(t)] = std::move(ids_t);
    xs[static_cast<std::size_t>(t)] = std::move(emb);
  }

  // LSTM stack with DropConnect on U and hidden dropout between layers.
  for (int l = 0; l < n_layers; ++l) {
    std::vector<Mat<T>> hs;
    num::lstm_layer_fwd(model.layers[static_cast<std::size_t>(l)], xs,
                        state.h[static_cast<std::size_t>(l)],
                        state.c[static_cast<std::size_t>(l)],
                        train ? &weight_masks[static_cast<std::size_t>(l)] : nullptr, inv_keep,
                        nullptr, hs, tapes ? &tapes->seq[static_cast<std::size_t>(l)] : nullptr);
    if (l + 1 < n_layers && train) {
      for (auto& h : hs) h = h.cwiseProduct(hidden_masks[static_cast<std::size_t>(l)]);
    }
    xs = std::move(hs);
  }

  // Output dropout, then the (possibly tied) decoder.
  const Mat<T>& w_dec = model.decoder_weight();
  std::vector<Mat<T>> logits(static_cast<std::size_t>(steps));
  for (Eigen::Index t = 0; t < steps; ++t) {
    Mat<T> out = train ? Mat<T>(xs[static_cast<std::size_t>(t)].cwiseProduct(output_mask))
                       : xs[static_cast<std::size_t>(t)];
    Mat<T> lg = out * w_dec.transpose();
    lg.rowwise() += model.decoder_b.value.row(0);
    if (tapes) tapes->final_out[static_cast<std::size_t>(t)] = std::move(out);
    logits[static_cast<std::size_t>(t)] = std::move(lg);
  }
  return logits;
}

// Reverse pass over one block given d(loss)/d(logits) per step. Parameter
// gradients accumulate; nothing flows across the block boundary.
template <typename T>
void lm_backward_impl(LmModel<T>& model, const LmTapes<T>& tapes, std::vector<Mat<T>>& d_logits) {
  const LMConfig& config = model.config;
  const std::size_t steps = tapes.ids.size();
  const bool masked = tapes.input_mask.size() > 0;
  const Mat<T>& w_dec = model.decoder_weight();

  std::vector<Mat<T>> d_hs(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    model.decoder_b.grad += d_logits[t].colwise().sum();
    model.decoder_weight_grad() += d_logits[t].transpose() * tapes.final_out[t];
    Mat<T> d_out = d_logits[t] * w_dec;
    d_hs[t] = masked ? Mat<T>(d_out.cwiseProduct(tapes.output_mask)) : std::move(d_out);
  }

  for (int l = config.num_layers - 1; l >= 0; --l) {
    std::vector<Mat<T>> d_xs = num::lstm_layer_bwd(
        model.layers[static_cast<std::size_t>(l)], tapes.seq[static_cast<std::size_t>(l)], d_hs,
        nullptr);
    if (l > 0) {
      for (std::size_t t = 0; t < steps; ++t)
        d_hs[t] = masked
                      ? Mat<T>(d_xs[t].cwiseProduct(tapes.hidden_masks[static_cast<std::size_t>(l - 1)]))
                      : std::move(d_xs[t]);
    } else {
      for (std::size_t t = 0; t < steps; ++t) {
        Mat<T> d_emb = masked ? Mat<T>(d_xs[t].cwiseProduct(tapes.input_mask)) : std::move(d_xs[t]);
        if (masked) {
          for (Eigen::Index b = 0; b < d_emb.rows(); ++b)
            d_emb.row(b) *=
                tapes.enc_scale[static_cast<std::size_t>(tapes.ids[t][static_cast<std::size_t>(b)])];
        }
        num::embedding_bwd(tapes.ids[t], d_emb, model.embedding.grad);
      }
    }
  }
}

}  // namespace detail

// Per-step logits [B x V] for an id block [B x T]. Training mode draws fresh
// per-block dropout masks from rng; evaluation mode is deterministic.
template <typename T>
std::vector<Mat<T>> lm_forward(const LmModel<T>& model, const IdMat& ids, LmState<T>& state,
                               bool train = false, Rng* rng = nullptr) {
  return detail::lm_forward_impl<T>(model, ids, state, train, rng, nullptr);
}

// One training step over a block: forward with dropout, mean next-token
// cross-entropy over the block's B x T predictions, full backward into the
// parameter gradients. Returns the mean loss.
template <typename T>
double lm_block_grad(LmModel<T>& model, const IdMat& inputs, const IdMat& targets,
                     LmState<T>& state, Rng& rng) {
  if (inputs.rows() != targets.rows() || inputs.cols() != targets.cols())
    throw ShapeError("lm_block_grad: input/target shape mismatch");
  detail::LmTapes<T> tapes;
  std::vector<Mat<T>> logits = detail::lm_forward_impl(model, inputs, state, true, &rng, &tapes);
  double loss = 0.0;
  std::vector<Mat<T>> d_logits(logits.size());
  for (std::size_t t = 0; t < logits.size(); ++t) {
    loss += num::softmax_xent_rows(logits[t], detail::step_ids(targets, static_cast<Eigen::Index>(t)),
                                   &d_logits[t]);
  }
  const double denom = static_cast<double>(inputs.size());
  const T scale = static_cast<T>(1.0 / denom);
  for (auto& d : d_logits) d *= scale;
  detail::lm_backward_impl(model, tapes, d_logits);
  return loss / denom;
}

// Mean evaluation-mode loss over a block (no gradients).
template <typename T>
double lm_block_loss(const LmModel<T>& model, const IdMat& inputs, const IdMat& targets,
                     LmState<T>& state) {
  if (inputs.rows() != targets.rows() || inputs.cols() != targets.cols())
    throw ShapeError("lm_block_loss: input/target shape mismatch");
  std::vector<Mat<T>> logits =
      detail::lm_forward_impl<T>(model, inputs, state, false, nullptr, nullptr);
  double loss = 0.0;
  for (std::size_t t = 0; t < logits.size(); ++t)
    loss += num::softmax_xent_rows<T>(
        logits[t], detail::step_ids(targets, static_cast<Eigen::Index>(t)), nullptr);
  return loss / static_cast<double>(inputs.size());
}

// ---------------------------------------------------------------------------
// Continuous batching
// ---------------------------------------------------------------------------

struct LmBatch {
  IdMat inputs;   // [B x T_block]
  IdMat targets;  // inputs shifted one step within each stream
};

// Reshapes the stream column-wise into batch_size parallel streams (trailing
// remainder dropped) and cuts them into bptt-length blocks; the final block
// may be shorter. Hidden state persists across consecutive blocks.
inline std::vector<LmBatch> make_lm_batches(const std::vector<int>& stream, int batch_size,
                                            int bptt_len) {
  if (batch_size < 1) throw ConfigError("make_lm_batches: batch_size must be >= 1");
  if (bptt_len < 1) throw ConfigError("make_lm_batches: bptt_len must be >= 1");
  const std::size_t per_stream = stream.size() / static_cast<std::size_t>(batch_size);
  if (per_stream < 2)
    throw DataError("make_lm_batches: stream too short for " + std::to_string(batch_size) +
                    " parallel streams (need at least 2 tokens each)");

  std::vector<LmBatch> batches;
  const std::size_t predictions = per_stream - 1;  // last token has no target
  for (std::size_t t0 = 0; t0 < predictions; t0 += static_cast<std::size_t>(bptt_len)) {
    const std::size_t len = std::min<std::size_t>(static_cast<std::size_t>(bptt_len),
                                                  predictions - t0);
    LmBatch batch;
    batch.inputs.resize(batch_size, static_cast<Eigen::Index>(len));
    batch.targets.resize(batch_size, static_cast<Eigen::Index>(len));
    for (int b = 0; b < batch_size; ++b) {
      const std::size_t base = static_cast<std::size_t>(b) * per_stream + t0;
      for (std::size_t j = 0; j < len; ++j) {
        batch.inputs(b, static_cast<Eigen::Index>(j)) = stream[base + j];
        batch.targets(b, static_cast<Eigen::Index>(j)) = stream[base + j + 1];
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

// ---------------------------------------------------------------------------
// Transfer
// ---------------------------------------------------------------------------

// New-vocabulary model from a pretrained one: embedding rows and decoder bias
// entries are copied for tokens the old vocabulary knows and start at zero
// otherwise; the LSTM stack is copied verbatim.
template <typename T>
LmModel<T> transfer_remap(const LmModel<T>& pretrained, const textprep::Vocabulary& old_vocab,
                          const textprep::Vocabulary& new_vocab) {
  if (pretrained.config.vocab_size != old_vocab.size())
    throw ConfigError("transfer_remap: pretrained model and old vocabulary disagree on size");
  if (new_vocab.size() < 3) throw ConfigError("transfer_remap: new vocabulary too small");

  LMConfig config = pretrained.config;
  config.vocab_size = new_vocab.size();

  LmModel<T> model;
  model.config = config;
  model.layers = pretrained.layers;
  model.embedding = Parameter<T>("embedding", config.vocab_size, config.embed_dim);
  model.decoder_b = Parameter<T>("decoder.b", 1, config.vocab_size);
  if (config.tie_weights)
    model.decoder_w = Parameter<T>("decoder.W", 0, 0);
  else
    model.decoder_w = Parameter<T>("decoder.W", config.vocab_size, config.decoder_input_dim());

  for (int i = 0; i < new_vocab.size(); ++i) {
    auto it = old_vocab.stoi_map.find(new_vocab.itos[static_cast<std::size_t>(i)]);
    if (it == old_vocab.stoi_map.end()) continue;  // new token: stays zero
    const int j = it->second;
    model.embedding.value.row(i) = pretrained.embedding.value.row(j);
    model.decoder_b.value(0, i) = pretrained.decoder_b.value(0, j);
    if (!config.tie_weights) model.decoder_w.value.row(i) = pretrained.decoder_w.value.row(j);
  }
  return model;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct LmTrainConfig {
  int epochs = 3;
  int stage_a_epochs = 1;   // decoder-only (plus tied embedding) epochs
  double lr_head = 0.01;    // decoder group
  double lr_other = 0.001;  // embedding and LSTM stack
  double momentum = 0.8;
  double clip_norm = 0.25;
  bool shuffle_blocks = false;  // breaks hidden-state continuity; diagnostics only
  std::uint64_t seed = 1;       // dropout and shuffle stream

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (stage_a_epochs < 0 || stage_a_epochs > epochs)
      throw ConfigError("stage_a_epochs must lie in [0, epochs]");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0,1)");
    if (lr_head <= 0.0 || lr_other <= 0.0) throw ConfigError("learning rates must be positive");
    if (clip_norm <= 0.0) throw ConfigError("clip_norm must be positive");
  }
};

inline void to_json(nlohmann::json& j, const LmTrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"stage_a_epochs", c.stage_a_epochs},
       {"lr_head", c.lr_head},
       {"lr_other", c.lr_other},
       {"momentum", c.momentum},
       {"clip_norm", c.clip_norm},
       {"shuffle_blocks", c.shuffle_blocks},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, LmTrainConfig& c) {
  const LmTrainConfig defaults;
  c.epochs = j.value("epochs", defaults.epochs);
  c.stage_a_epochs = j.value("stage_a_epochs", defaults.stage_a_epochs);
  c.lr_head = j.value("lr_head", defaults.lr_head);
  c.lr_other = j.value("lr_other", defaults.lr_other);
  c.momentum = j.value("momentum", defaults.momentum);
  c.clip_norm = j.value("clip_norm", defaults.clip_norm);
  c.shuffle_blocks = j.value("shuffle_blocks", defaults.shuffle_blocks);
  c.seed = j.value("seed", defaults.seed);
}

template <typename T>
bool is_lm_head_param(const LmModel<T>& model, const Parameter<T>& p) {
  if (p.name == "decoder.b" || p.name == "decoder.W") return true;
  return model.config.tie_weights && p.name == "embedding";
}

// Mean evaluation-mode next-token cross-entropy over the stream, batched the
// same way as training (remainder tokens dropped when batch_size > 1).
template <typename T>
double lm_stream_loss(const LmModel<T>& model, const std::vector<int>& stream, int batch_size,
                      int bptt_len) {
  auto batches = make_lm_batches(stream, batch_size, bptt_len);
  LmState<T> state;
  state.reset(model.config, batch_size);
  double loss = 0.0;
  long long tokens = 0;
  for (const auto& batch : batches) {
    loss += lm_block_loss(model, batch.inputs, batch.targets, state) *
            static_cast<double>(batch.inputs.size());
    tokens += batch.inputs.size();
  }
  return loss / static_cast<double>(tokens);
}

// exp(mean next-token cross-entropy) over the stream as one continuous
// sequence (batch 1: every prediction counted), evaluation mode.
template <typename T>
double perplexity(const LmModel<T>& model, const std::vector<int>& stream) {
  return std::exp(lm_stream_loss(model, stream, 1, model.config.bptt_len));
}

// Top-1 next-token accuracy over the stream (batch 1, evaluation mode).
template <typename T>
double next_token_accuracy(const LmModel<T>& model, const std::vector<int>& stream) {
  auto batches = make_lm_batches(stream, 1, model.config.bptt_len);
  LmState<T> state;
  state.reset(model.config, 1);
  long long hits = 0, total = 0;
  for (const auto& batch : batches) {
    std::vector<Mat<T>> logits = lm_forward(model, batch.inputs, state);
    for (std::size_t t = 0; t < logits.size(); ++t) {
      Eigen::Index best = 0;
      logits[t].row(0).maxCoeff(&best);
      hits += best == batch.targets(0, static_cast<Eigen::Index>(t));
      ++total;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

// Staged training: stage A freezes everything except the decoder group for
// stage_a_epochs, stage B trains the full model. Two-tier learning rates
// (head lr_head, everything deeper lr_other). Hidden state carries across
// blocks within an epoch and resets between epochs.
template <typename T>
std::vector<evalmetrics::EpochLoss> train_lm(LmModel<T>& model,
                                             const std::vector<int>& train_stream,
                                             const std::vector<int>& valid_stream,
                                             const LmTrainConfig& tc) {
  tc.validate();
  if (train_stream.empty() || valid_stream.empty())
    throw DataError("train_lm: empty token stream");
  const LMConfig& config = model.config;
  auto batches = make_lm_batches(train_stream, config.batch_size, config.bptt_len);

  Rng rng(tc.seed);
  num::SgdMomentum<T> opt(tc.momentum);
  std::vector<Parameter<T>*> params = model.params();
  auto lr_of = [&](const Parameter<T>& p) {
    return is_lm_head_param(model, p) ? tc.lr_head : tc.lr_other;
  };

  std::vector<evalmetrics::EpochLoss> history;
  std::vector<std::size_t> order(batches.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    const bool stage_a = epoch <= tc.stage_a_epochs;
    for (auto* p : params) p->frozen = stage_a && !is_lm_head_param(model, *p);
    std::vector<Parameter<T>*> trainable;
    for (auto* p : params)
      if (!p->frozen) trainable.push_back(p);

    if (tc.shuffle_blocks) rng.shuffle(order);
    LmState<T> state;
    state.reset(config, config.batch_size);
    double loss_sum = 0.0;
    long long tokens = 0;
    for (std::size_t idx : order) {
      const LmBatch& batch = batches[idx];
      num::zero_grads(params);
      loss_sum += lm_block_grad(model, batch.inputs, batch.targets, state, rng) *
                  static_cast<double>(batch.inputs.size());
      tokens += batch.inputs.size();
      num::clip_gradients(trainable, tc.clip_norm);
      opt.step(params, lr_of);
    }
    const double valid =
        lm_stream_loss(model, valid_stream, config.batch_size, config.bptt_len);
    history.push_back({epoch, loss_sum / static_cast<double>(tokens), valid});
  }
  for (auto* p : params) p->frozen = false;
  return history;
}

// ---------------------------------------------------------------------------
// Snapshots
// ---------------------------------------------------------------------------

// Embedding + LSTM stack without the decoder: the transferable portion.
struct EncoderSnapshot {
  LMConfig config;
  std::vector<std::string> vocab_itos;
  std::uint64_t vocab_fingerprint = 0;
  num::Mat<float> embedding;
  struct LayerWeights {
    num::Mat<float> w, u, b;
  };
  std::vector<LayerWeights> layers;
};

template <typename T>
EncoderSnapshot make_encoder_snapshot(const LmModel<T>& model,
                                      const textprep::Vocabulary& vocab) {
  if (vocab.size() != model.config.vocab_size)
    throw ConfigError("encoder snapshot: vocabulary size disagrees with the model");
  EncoderSnapshot snap;
  snap.config = model.config;
  snap.vocab_itos = vocab.itos;
  snap.vocab_fingerprint = vocab.fingerprint();
  snap.embedding = model.embedding.value.template cast<float>();
  for (const auto& layer : model.layers)
    snap.layers.push_back({layer.W.value.template cast<float>(),
                           layer.U.value.template cast<float>(),
                           layer.b.value.template cast<float>()});
  return snap;
}

inline void save_encoder(const EncoderSnapshot& snap, const std::string& path) {
  checkpoint::Checkpoint ckpt;
  ckpt.kind = "encoder";
  ckpt.config = snap.config;
  ckpt.vocab_itos = snap.vocab_itos;
  ckpt.vocab_fingerprint = snap.vocab_fingerprint;
  ckpt.add("embedding", snap.embedding);
  for (std::size_t l = 0; l < snap.layers.size(); ++l) {
    const std::string prefix = "lstm" + std::to_string(l);
    ckpt.add(prefix + ".W", snap.layers[l].w);
    ckpt.add(prefix + ".U", snap.layers[l].u);
    ckpt.add(prefix + ".b", snap.layers[l].b);
  }
  checkpoint::save(ckpt, path);
}

template <typename T>
void save_encoder(const LmModel<T>& model, const textprep::Vocabulary& vocab,
                  const std::string& path) {
  save_encoder(make_encoder_snapshot(model, vocab), path);
}

inline EncoderSnapshot load_encoder(const std::string& path) {
  checkpoint::Checkpoint ckpt = checkpoint::load(path);
  if (ckpt.kind != "encoder")
    throw SchemaError("expected an encoder checkpoint, found kind '" + ckpt.kind + "': " + path);
  EncoderSnapshot snap;
  snap.config = ckpt.config.get<LMConfig>();
  snap.vocab_itos = ckpt.vocab_itos;
  snap.vocab_fingerprint = ckpt.vocab_fingerprint;
  snap.embedding = ckpt.get("embedding");
  for (int l = 0; l < snap.config.num_layers; ++l) {
    const std::string prefix = "lstm" + std::to_string(l);
    snap.layers.push_back(
        {ckpt.get(prefix + ".W"), ckpt.get(prefix + ".U"), ckpt.get(prefix + ".b")});
  }
  return snap;
}

// Full language model (decoder included), for continuing training.
template <typename T>
void save_lm(const LmModel<T>& model, const textprep::Vocabulary& vocab,
             const std::string& path) {
  if (vocab.size() != model.config.vocab_size)
    throw ConfigError("save_lm: vocabulary size disagrees with the model");
  checkpoint::Checkpoint ckpt;
  ckpt.kind = "lm";
  ckpt.config = model.config;
  ckpt.vocab_itos = vocab.itos;
  ckpt.vocab_fingerprint = vocab.fingerprint();
  ckpt.add("embedding", num::Mat<float>(model.embedding.value.template cast<float>()));
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const std::string prefix = "lstm" + std::to_string(l);
    ckpt.add(prefix + ".W", num::Mat<float>(model.layers[l].W.value.template cast<float>()));
    ckpt.add(prefix + ".U", num::Mat<float>(model.layers[l].U.value.template cast<float>()));
    ckpt.add(prefix + ".b", num::Mat<float>(model.layers[l].b.value.template cast<float>()));
  }
  if (!model.config.tie_weights)
    ckpt.add("decoder.W", num::Mat<float>(model.decoder_w.value.template cast<float>()));
  ckpt.add("decoder.b", num::Mat<float>(model.decoder_b.value.template cast<float>()));
  checkpoint::save(ckpt, path);
}

template <typename T>
struct LoadedLm {
  LmModel<T> model;
  textprep::Vocabulary vocab;
};

template <typename T>
LoadedLm<T> load_lm(const std::string& path) {
  checkpoint::Checkpoint ckpt = checkpoint::load(path);
  if (ckpt.kind != "lm")
    throw SchemaError("expected a language model checkpoint, found kind '" + ckpt.kind +
                      "': " + path);
  LoadedLm<T> loaded;
  LMConfig config = ckpt.config.get<LMConfig>();
  loaded.model.config = config;
  loaded.model.embedding = Parameter<T>("embedding", config.vocab_size, config.embed_dim);
  loaded.model.embedding.value = ckpt.get("embedding").cast<T>();
  for (int l = 0; l < config.num_layers; ++l) {
    const std::string prefix = "lstm" + std::to_string(l);
    const int d_in = config.layer_input_dim(l);
    const int d_out = config.layer_output_dim(l);
    num::LstmParams<T> layer{Parameter<T>(prefix + ".W", d_in, 4 * d_out),
                             Parameter<T>(prefix + ".U", d_out, 4 * d_out),
                             Parameter<T>(prefix + ".b", 1, 4 * d_out)};
    layer.W.value = ckpt.get(prefix + ".W").cast<T>();
    layer.U.value = ckpt.get(prefix + ".U").cast<T>();
    layer.b.value = ckpt.get(prefix + ".b").cast<T>();
    loaded.model.layers.push_back(std::move(layer));
  }
  if (config.tie_weights) {
    loaded.model.decoder_w = Parameter<T>("decoder.W", 0, 0);
  } else {
    loaded.model.decoder_w =
        Parameter<T>("decoder.W", config.vocab_size, config.decoder_input_dim());
    loaded.model.decoder_w.value = ckpt.get("decoder.W").cast<T>();
  }
  loaded.model.decoder_b = Parameter<T>("decoder.b", 1, config.vocab_size);
  loaded.model.decoder_b.value = ckpt.get("decoder.b").cast<T>();
  loaded.vocab = textprep::vocab_from_itos(ckpt.vocab_itos);
  return loaded;
}

}  // namespace notecode::langmodel
