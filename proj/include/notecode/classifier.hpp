#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "notecode/checkpoint.hpp"
#include "notecode/errors.hpp"
#include "notecode/langmodel.hpp"
#include "notecode/numcore/kernels.hpp"
#include "notecode/numcore/optim.hpp"
#include "notecode/rng.hpp"

namespace notecode::classifier {

using num::IdMat;
using num::Mat;
using num::Parameter;

struct ClfConfig {
  int num_classes = 0;      // K
  int head_hidden_dim = 50;
  int max_doc_len = 1000;   // documents keep their final max_doc_len tokens
  int epochs = 10;
  int batch_size = 1;  // per-document steps: fixed small LRs need step count
  double lr_head = 0.01;    // head group
  double lr_other = 0.001;  // encoder groups
  double momentum = 0.8;
  double clip_norm = 10.0;  // loose guard; mean-over-batch gradients are already small
  num::DropoutSpec dropout;  // encoder sites + p_classifier for the head
  // unfreeze_at[g] = first epoch at which layer group g trains. Group 0 is
  // the head, group 1 the last LSTM layer, deeper layers follow, and the
  // last group is the embedding. Empty = one additional group per epoch.
  std::vector<int> unfreeze_at;
  std::uint64_t seed = 7;

  void validate() const {
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (head_hidden_dim < 1) throw ConfigError("head_hidden_dim must be >= 1");
    if (max_doc_len < 1) throw ConfigError("max_doc_len must be >= 1");
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (lr_head <= 0.0 || lr_other <= 0.0) throw ConfigError("learning rates must be positive");
    if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must be in [0,1)");
    if (clip_norm <= 0.0) throw ConfigError("clip_norm must be positive");
    dropout.validate();
    for (int e : unfreeze_at)
      if (e < 1) throw ConfigError("unfreeze epochs must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const ClfConfig& c) {
  j = {{"num_classes", c.num_classes},
       {"head_hidden_dim", c.head_hidden_dim},
       {"max_doc_len", c.max_doc_len},
       {"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"lr_head", c.lr_head},
       {"lr_other", c.lr_other},
       {"momentum", c.momentum},
       {"clip_norm", c.clip_norm},
       {"dropout", c.dropout},
       {"unfreeze_at", c.unfreeze_at},
       {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, ClfConfig& c) {
  const ClfConfig defaults;
  c.num_classes = j.value("num_classes", defaults.num_classes);
  c.head_hidden_dim = j.value("head_hidden_dim", defaults.head_hidden_dim);
  c.max_doc_len = j.value("max_doc_len", defaults.max_doc_len);
  c.epochs = j.value("epochs", defaults.epochs);
  c.batch_size = j.value("batch_size", defaults.batch_size);
  c.lr_head = j.value("lr_head", defaults.lr_head);
  c.lr_other = j.value("lr_other", defaults.lr_other);
  c.momentum = j.value("momentum", defaults.momentum);
  c.clip_norm = j.value("clip_norm", defaults.clip_norm);
  c.dropout = j.value("dropout", defaults.dropout);
  c.unfreeze_at = j.value("unfreeze_at", defaults.unfreeze_at);
  c.seed = j.value("seed", defaults.seed);
}

// Encoder (embedding + LSTM stack) with a two-layer softmax head over
// concat-pooled features. Feature width is 3x the encoder output dim.
template <typename T>
struct ClassifierModel {
  langmodel::LMConfig enc_config;  // architecture the encoder was trained with
  ClfConfig config;
  std::vector<std::string> vocab_itos;
  std::uint64_t vocab_fingerprint = 0;

  Parameter<T> embedding;
  std::vector<num::LstmParams<T>> layers;
  Parameter<T> head_w1;  // [3*d_enc x head_hidden]
  Parameter<T> head_b1;  // [1 x head_hidden]
  Parameter<T> head_w2;  // [head_hidden x K]
  Parameter<T> head_b2;  // [1 x K]

  int encoder_output_dim() const { return enc_config.decoder_input_dim(); }
  int num_layer_groups() const { return enc_config.num_layers + 2; }

  std::vector<Parameter<T>*> params() {
    std::vector<Parameter<T>*> out{&embedding};
    for (auto& layer : layers) {
      out.push_back(&layer.W);
      out.push_back(&layer.U);
      out.push_back(&layer.b);
    }
    out.push_back(&head_w1);
    out.push_back(&head_b1);
    out.push_back(&head_w2);
    out.push_back(&head_b2);
    return out;
  }

  // Layer group of a parameter: 0 = head, 1 = top LSTM layer, ...,
  // num_layers = bottom LSTM layer, num_layers+1 = embedding.
  int group_of(const Parameter<T>& p) const {
    if (p.name.rfind("head.", 0) == 0) return 0;
    if (p.name == "embedding") return enc_config.num_layers + 1;
    const int layer = std::stoi(p.name.substr(4, p.name.find('.') - 4));  // "lstm<l>.X"
    return enc_config.num_layers - layer;
  }
};

// Default gradual-unfreezing schedule: group g starts training at epoch g+1.
inline std::vector<int> default_unfreeze_at(int num_groups) {
  std::vector<int> at(static_cast<std::size_t>(num_groups));
  for (int g = 0; g < num_groups; ++g) at[static_cast<std::size_t>(g)] = g + 1;
  return at;
}

// Builds the classifier from a saved encoder: encoder weights copied, head
// initialized uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) per config.seed.
template <typename T>
ClassifierModel<T> init_classifier(const langmodel::EncoderSnapshot& encoder,
                                   const ClfConfig& config) {
  config.validate();
  ClassifierModel<T> model;
  model.enc_config = encoder.config;
  model.config = config;
  if (model.config.unfreeze_at.empty())
    model.config.unfreeze_at = default_unfreeze_at(model.num_layer_groups());
  if (static_cast<int>(model.config.unfreeze_at.size()) != model.num_layer_groups())
    throw ConfigError("unfreeze_at must name every layer group once");
  model.vocab_itos = encoder.vocab_itos;
  model.vocab_fingerprint = encoder.vocab_fingerprint;

  model.embedding = Parameter<T>("embedding", encoder.embedding.rows(), encoder.embedding.cols());
  model.embedding.value = encoder.embedding.template cast<T>();
  for (std::size_t l = 0; l < encoder.layers.size(); ++l) {
    const std::string prefix = "lstm" + std::to_string(l);
    num::LstmParams<T> layer{
        Parameter<T>(prefix + ".W", encoder.layers[l].w.rows(), encoder.layers[l].w.cols()),
        Parameter<T>(prefix + ".U", encoder.layers[l].u.rows(), encoder.layers[l].u.cols()),
        Parameter<T>(prefix + ".b", encoder.layers[l].b.rows(), encoder.layers[l].b.cols())};
    layer.W.value = encoder.layers[l].w.template cast<T>();
    layer.U.value = encoder.layers[l].u.template cast<T>();
    layer.b.value = encoder.layers[l].b.template cast<T>();
    model.layers.push_back(std::move(layer));
  }

  Rng rng(config.seed);
  const int feat = 3 * model.encoder_output_dim();
  model.head_w1 = Parameter<T>("head.w1", feat, config.head_hidden_dim);
  model.head_b1 = Parameter<T>("head.b1", 1, config.head_hidden_dim);
  model.head_w2 = Parameter<T>("head.w2", config.head_hidden_dim, config.num_classes);
  model.head_b2 = Parameter<T>("head.b2", 1, config.num_classes);
  // He-style bound for the ReLU layer, conventional 1/sqrt(fan_in) for the
  // logit layer.
  num::fill_uniform(model.head_w1.value, -std::sqrt(6.0 / static_cast<double>(feat)),
                    std::sqrt(6.0 / static_cast<double>(feat)), rng);
  num::fill_uniform(model.head_w2.value,
                    -1.0 / std::sqrt(static_cast<double>(config.head_hidden_dim)),
                    1.0 / std::sqrt(static_cast<double>(config.head_hidden_dim)), rng);
  return model;
}

// Feature for one document: [h_last | elementwise max | elementwise mean]
// over the timesteps.
template <typename T>
Mat<T> concat_pool(const Mat<T>& hs) {
  if (hs.rows() < 1) throw DataError("concat_pool: need at least one timestep");
  const Eigen::Index d = hs.cols();
  Mat<T> feature(1, 3 * d);
  feature.block(0, 0, 1, d) = hs.row(hs.rows() - 1);
  feature.block(0, d, 1, d) = hs.colwise().maxCoeff();
  feature.block(0, 2 * d, 1, d) = hs.colwise().mean();
  return feature;
}

namespace detail {

// Documents left-padded to a common length so the last step is real for
// every row; rows are inactive (h = c = 0, no gradient) before their start.
struct PaddedBatch {
  std::vector<std::vector<int>> ids;      // per step, size B
  std::vector<std::vector<char>> active;  // per step, size B
  std::vector<int> lengths;               // per row, post-truncation
  int steps = 0;
};

inline PaddedBatch pad_batch(const std::vector<std::vector<int>>& docs, int max_doc_len,
                             int pad_id) {
  PaddedBatch batch;
  const int b_n = static_cast<int>(docs.size());
  if (b_n == 0) throw DataError("pad_batch: empty batch");
  batch.lengths.resize(static_cast<std::size_t>(b_n));
  std::vector<std::size_t> starts(static_cast<std::size_t>(b_n));
  int steps = 0;
  for (int b = 0; b < b_n; ++b) {
    const auto& doc = docs[static_cast<std::size_t>(b)];
    if (doc.empty()) throw DataError("pad_batch: empty document");
    const int len = std::min<int>(static_cast<int>(doc.size()), max_doc_len);
    starts[static_cast<std::size_t>(b)] = doc.size() - static_cast<std::size_t>(len);
    batch.lengths[static_cast<std::size_t>(b)] = len;
    steps = std::max(steps, len);
  }
  batch.steps = steps;
  batch.ids.assign(static_cast<std::size_t>(steps),
                   std::vector<int>(static_cast<std::size_t>(b_n), pad_id));
  batch.active.assign(static_cast<std::size_t>(steps),
                      std::vector<char>(static_cast<std::size_t>(b_n), 0));
  for (int b = 0; b < b_n; ++b) {
    const auto& doc = docs[static_cast<std::size_t>(b)];
    const int len = batch.lengths[static_cast<std::size_t>(b)];
    const int offset = steps - len;  // left padding
    for (int j = 0; j < len; ++j) {
      batch.ids[static_cast<std::size_t>(offset + j)][static_cast<std::size_t>(b)] =
          doc[starts[static_cast<std::size_t>(b)] + static_cast<std::size_t>(j)];
      batch.active[static_cast<std::size_t>(offset + j)][static_cast<std::size_t>(b)] = 1;
    }
  }
  return batch;
}

template <typename T>
struct ClfTapes {
  PaddedBatch batch;
  std::vector<T> enc_scale;
  Mat<T> input_mask;
  std::vector<Mat<T>> hidden_masks;
  Mat<T> output_mask;
  Mat<T> head_mask;  // [B x head_hidden]
  std::vector<num::LstmSeqCache<T>> seq;
  std::vector<Mat<T>> final_out;  // masked top-layer outputs per step
  Mat<T> feature;                 // pooled [B x 3d]
  Mat<T> z1, a1, a1_dropped;      // head intermediates
  std::vector<std::vector<Eigen::Index>> argmax;  // per row, per dim: max step
};

// Encoder + pooling + head in one pass. Returns logits [B x K].
template <typename T>
Mat<T> classifier_forward_impl(const ClassifierModel<T>& model,
                               const std::vector<std::vector<int>>& docs, bool train, Rng* rng,
                               ClfTapes<T>* tapes) {
  const langmodel::LMConfig& enc = model.enc_config;
  const ClfConfig& config = model.config;
  if (train && !rng) throw ConfigError("classifier_forward: training mode needs an rng");
  PaddedBatch batch = pad_batch(docs, config.max_doc_len, 1);  // pad token id 1
  const int b_n = static_cast<int>(docs.size());
  const int steps = batch.steps;
  const int n_layers = enc.num_layers;
  const int d_out = model.encoder_output_dim();

  std::vector<T> enc_scale;
  Mat<T> input_mask, output_mask, head_mask;
  std::vector<Mat<T>> weight_masks(static_cast<std::size_t>(n_layers));
  std::vector<Mat<T>> hidden_masks;
  if (train) {
    enc_scale = num::embedding_row_scales<T>(enc.vocab_size, config.dropout.p_encoder, *rng);
    input_mask = num::dropout_mask<T>(b_n, enc.embed_dim, config.dropout.p_input, *rng);
    for (int l = 0; l < n_layers; ++l) {
      const int d_l = enc.layer_output_dim(l);
      weight_masks[static_cast<std::size_t>(l)] =
          num::keep_mask<T>(d_l, 4 * d_l, config.dropout.p_weight, *rng);
    }
    for (int l = 0; l + 1 < n_layers; ++l)
      hidden_masks.push_back(
          num::dropout_mask<T>(b_n, enc.layer_output_dim(l), config.dropout.p_hidden, *rng));
    output_mask = num::dropout_mask<T>(b_n, d_out, config.dropout.p_output, *rng);
    head_mask = num::dropout_mask<T>(b_n, config.head_hidden_dim,
                                     config.dropout.p_classifier, *rng);
  }
  const T inv_keep = static_cast<T>(1.0 / (1.0 - config.dropout.p_weight));

  // Embedding.
  std::vector<Mat<T>> xs(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) {
    const auto& ids_t = batch.ids[static_cast<std::size_t>(t)];
    Mat<T> emb = num::embedding_fwd(ids_t, model.embedding.value);
    if (train) {
      for (int b = 0; b < b_n; ++b)
        emb.row(b) *= enc_scale[static_cast<std::size_t>(ids_t[static_cast<std::size_t>(b)])];
      emb = emb.cwiseProduct(input_mask);
    }
    xs[static_cast<std::size_t>(t)] = std::move(emb);
  }

  // LSTM stack; per-document state starts at zero (fresh h, c per batch).
  if (tapes) tapes->seq.assign(static_cast<std::size_t>(n_layers), num::LstmSeqCache<T>{});
  for (int l = 0; l < n_layers; ++l) {
    Mat<T> h = Mat<T>::Zero(b_n, enc.layer_output_dim(l));
    Mat<T> c = Mat<T>::Zero(b_n, enc.layer_output_dim(l));
    std::vector<Mat<T>> hs;
    num::lstm_layer_fwd(model.layers[static_cast<std::size_t>(l)], xs, h, c,
                        train ? &weight_masks[static_cast<std::size_t>(l)] : nullptr, inv_keep,
                        &batch.active, hs,
                        tapes ? &tapes->seq[static_cast<std::size_t>(l)] : nullptr);
    if (l + 1 < n_layers && train)
      for (auto& hm : hs) hm = hm.cwiseProduct(hidden_masks[static_cast<std::size_t>(l)]);
    xs = std::move(hs);
  }
  if (train)
    for (auto& hm : xs) hm = hm.cwiseProduct(output_mask);

  // Concat pooling over each row's active steps. Left padding makes the
  // final step the document's last token for every row.
  Mat<T> feature = Mat<T>::Zero(b_n, 3 * d_out);
  std::vector<std::vector<Eigen::Index>> argmax(
      static_cast<std::size_t>(b_n), std::vector<Eigen::Index>(static_cast<std::size_t>(d_out)));
  for (int b = 0; b < b_n; ++b) {
    const int len = batch.lengths[static_cast<std::size_t>(b)];
    const int start = steps - len;
    feature.block(b, 0, 1, d_out) = xs[static_cast<std::size_t>(steps - 1)].row(b);
    for (int j = 0; j < d_out; ++j) {
      T best = xs[static_cast<std::size_t>(start)](b, j);
      Eigen::Index best_t = start;
      T sum = T(0);
      for (int t = start; t < steps; ++t) {
        const T v = xs[static_cast<std::size_t>(t)](b, j);
        if (v > best) {
          best = v;
          best_t = t;
        }
        sum += v;
      }
      feature(b, d_out + j) = best;
      feature(b, 2 * d_out + j) = sum / static_cast<T>(len);
      argmax[static_cast<std::size_t>(b)][static_cast<std::size_t>(j)] = best_t;
    }
  }

  // Head: linear -> ReLU -> dropout -> linear.
  Mat<T> z1 = num::linear_fwd(feature, model.head_w1.value, model.head_b1.value);
  Mat<T> a1 = num::relu_fwd(z1);
  Mat<T> a1_dropped = train ? Mat<T>(a1.cwiseProduct(head_mask)) : a1;
  Mat<T> logits = num::linear_fwd(a1_dropped, model.head_w2.value, model.head_b2.value);

  if (tapes) {
    tapes->batch = std::move(batch);
    tapes->enc_scale = std::move(enc_scale);
    tapes->input_mask = std::move(input_mask);
    tapes->hidden_masks = std::move(hidden_masks);
    tapes->output_mask = std::move(output_mask);
    tapes->head_mask = std::move(head_mask);
    tapes->final_out = std::move(xs);
    tapes->feature = std::move(feature);
    tapes->z1 = std::move(z1);
    tapes->a1 = std::move(a1);
    tapes->a1_dropped = std::move(a1_dropped);
    tapes->argmax = std::move(argmax);
  }
  return logits;
}

template <typename T>
void classifier_backward_impl(ClassifierModel<T>& model, const ClfTapes<T>& tapes,
                              const Mat<T>& d_logits) {
  const langmodel::LMConfig& enc = model.enc_config;
  const bool masked = tapes.input_mask.size() > 0;
  const int b_n = static_cast<int>(d_logits.rows());
  const int steps = tapes.batch.steps;
  const int d_out = model.encoder_output_dim();

  // Head.
  Mat<T> d_a1_dropped;
  num::linear_bwd(tapes.a1_dropped, model.head_w2.value, d_logits, d_a1_dropped,
                  model.head_w2.grad, model.head_b2.grad);
  Mat<T> d_a1 = masked ? Mat<T>(d_a1_dropped.cwiseProduct(tapes.head_mask))
                       : std::move(d_a1_dropped);
  Mat<T> d_z1 = num::relu_bwd(tapes.z1, d_a1);
  Mat<T> d_feature;
  num::linear_bwd(tapes.feature, model.head_w1.value, d_z1, d_feature, model.head_w1.grad,
                  model.head_b1.grad);

  // Unpool into per-step gradients on the (masked) top-layer outputs.
  std::vector<Mat<T>> d_hs(static_cast<std::size_t>(steps));
  for (int t = 0; t < steps; ++t) d_hs[static_cast<std::size_t>(t)] = Mat<T>::Zero(b_n, d_out);
  for (int b = 0; b < b_n; ++b) {
    const int len = tapes.batch.lengths[static_cast<std::size_t>(b)];
    const int start = steps - len;
    d_hs[static_cast<std::size_t>(steps - 1)].row(b) += d_feature.block(b, 0, 1, d_out);
    for (int j = 0; j < d_out; ++j) {
      d_hs[static_cast<std::size_t>(
          tapes.argmax[static_cast<std::size_t>(b)][static_cast<std::size_t>(j)])](b, j) +=
          d_feature(b, d_out + j);
      const T mean_grad = d_feature(b, 2 * d_out + j) / static_cast<T>(len);
      for (int t = start; t < steps; ++t) d_hs[static_cast<std::size_t>(t)](b, j) += mean_grad;
    }
  }
  if (masked)
    for (auto& d : d_hs) d = d.cwiseProduct(tapes.output_mask);

  // LSTM stack.
  for (int l = enc.num_layers - 1; l >= 0; --l) {
    std::vector<Mat<T>> d_xs =
        num::lstm_layer_bwd(model.layers[static_cast<std::size_t>(l)],
                            tapes.seq[static_cast<std::size_t>(l)], d_hs, &tapes.batch.active);
    if (l > 0) {
      d_hs = std::move(d_xs);
      if (masked)
        for (auto& d : d_hs)
          d = d.cwiseProduct(tapes.hidden_masks[static_cast<std::size_t>(l - 1)]);
    } else {
      for (int t = 0; t < steps; ++t) {
        Mat<T> d_emb = masked
                           ? Mat<T>(d_xs[static_cast<std::size_t>(t)].cwiseProduct(tapes.input_mask))
                           : std::move(d_xs[static_cast<std::size_t>(t)]);
        if (masked) {
          const auto& ids_t = tapes.batch.ids[static_cast<std::size_t>(t)];
          for (int b = 0; b < b_n; ++b)
            d_emb.row(b) *=
                tapes.enc_scale[static_cast<std::size_t>(ids_t[static_cast<std::size_t>(b)])];
        }
        num::embedding_bwd(tapes.batch.ids[static_cast<std::size_t>(t)], d_emb,
                           model.embedding.grad);
      }
    }
  }
}

}  // namespace detail

// Class probabilities for one document (evaluation mode unless train is set).
template <typename T>
std::vector<double> classify_forward(const ClassifierModel<T>& model, const std::vector<int>& doc,
                                     bool train = false, Rng* rng = nullptr) {
  Mat<T> logits = detail::classifier_forward_impl<T>(model, {doc}, train, rng, nullptr);
  Mat<T> probs = num::softmax_rows(logits);
  std::vector<double> out(static_cast<std::size_t>(probs.cols()));
  for (Eigen::Index k = 0; k < probs.cols(); ++k)
    out[static_cast<std::size_t>(k)] = static_cast<double>(probs(0, k));
  return out;
}

// Argmax prediction, ties broken toward the smallest class index.
template <typename T>
std::pair<int, std::vector<double>> predict(const ClassifierModel<T>& model,
                                            const std::vector<int>& doc) {
  std::vector<double> probs = classify_forward(model, doc);
  int best = 0;
  for (int k = 1; k < static_cast<int>(probs.size()); ++k)
    if (probs[static_cast<std::size_t>(k)] > probs[static_cast<std::size_t>(best)]) best = k;
  return {best, std::move(probs)};
}

// One training step over a mini-batch; accumulates gradients of the mean
// cross-entropy over the batch and returns that mean.
template <typename T>
double classifier_batch_grad(ClassifierModel<T>& model, const std::vector<std::vector<int>>& docs,
                             const std::vector<int>& labels, Rng& rng) {
  if (docs.size() != labels.size())
    throw ShapeError("classifier_batch_grad: docs/labels length mismatch");
  detail::ClfTapes<T> tapes;
  Mat<T> logits = detail::classifier_forward_impl(model, docs, true, &rng, &tapes);
  Mat<T> d_logits;
  const double loss = num::softmax_xent_rows(logits, labels, &d_logits);
  d_logits *= static_cast<T>(1.0 / static_cast<double>(docs.size()));
  detail::classifier_backward_impl(model, tapes, d_logits);
  return loss / static_cast<double>(docs.size());
}

struct NumericCorpus {
  std::vector<std::vector<int>> docs;  // numericalized, non-empty
  std::vector<int> labels;             // in [0, K)
};

struct ClfEpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double valid_loss = 0.0;
  double train_accuracy = 0.0;
  double valid_accuracy = 0.0;
};

// Mean loss and accuracy in evaluation mode.
template <typename T>
std::pair<double, double> evaluate_classifier(const ClassifierModel<T>& model,
                                              const NumericCorpus& corpus) {
  double loss = 0.0;
  long long hits = 0;
  for (std::size_t i = 0; i < corpus.docs.size(); ++i) {
    Mat<T> logits =
        detail::classifier_forward_impl<T>(model, {corpus.docs[i]}, false, nullptr, nullptr);
    loss += num::softmax_xent_rows<T>(logits, {corpus.labels[i]}, nullptr);
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < logits.cols(); ++k)
      if (logits(0, k) > logits(0, best)) best = k;
    hits += static_cast<int>(best) == corpus.labels[i];
  }
  const double n = static_cast<double>(corpus.docs.size());
  return {loss / n, static_cast<double>(hits) / n};
}

// Gradual unfreezing: the head trains from epoch 1; each group g joins at
// config.unfreeze_at[g] (default: one more group per epoch, top down).
// Two-tier discriminative learning rates: head lr_head, encoder lr_other.
template <typename T>
std::vector<ClfEpochStats> train_classifier(ClassifierModel<T>& model,
                                            const NumericCorpus& train,
                                            const NumericCorpus& valid) {
  const ClfConfig& config = model.config;
  config.validate();
  if (train.docs.empty()) throw DataError("train_classifier: empty training corpus");
  if (train.docs.size() != train.labels.size() || valid.docs.size() != valid.labels.size())
    throw ShapeError("train_classifier: docs/labels length mismatch");
  for (int label : train.labels)
    if (label < 0 || label >= config.num_classes)
      throw DataError("train_classifier: label outside [0,K)");
  for (int label : valid.labels)
    if (label < 0 || label >= config.num_classes)
      throw DataError("train_classifier: label outside [0,K)");

  Rng rng(config.seed + 1);
  num::SgdMomentum<T> opt(config.momentum);
  std::vector<Parameter<T>*> params = model.params();
  auto lr_of = [&](const Parameter<T>& p) {
    return model.group_of(p) == 0 ? config.lr_head : config.lr_other;
  };

  std::vector<std::size_t> order(train.docs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<ClfEpochStats> history;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    for (auto* p : params) {
      const int g = model.group_of(*p);
      p->frozen = epoch < config.unfreeze_at[static_cast<std::size_t>(g)];
    }
    std::vector<Parameter<T>*> trainable;
    for (auto* p : params)
      if (!p->frozen) trainable.push_back(p);

    rng.shuffle(order);
    for (std::size_t i0 = 0; i0 < order.size(); i0 += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t i1 =
          std::min(order.size(), i0 + static_cast<std::size_t>(config.batch_size));
      std::vector<std::vector<int>> docs;
      std::vector<int> labels;
      docs.reserve(i1 - i0);
      for (std::size_t i = i0; i < i1; ++i) {
        docs.push_back(train.docs[order[i]]);
        labels.push_back(train.labels[order[i]]);
      }
      num::zero_grads(params);
      classifier_batch_grad(model, docs, labels, rng);
      num::clip_gradients(trainable, config.clip_norm);
      opt.step(params, lr_of);
    }

    ClfEpochStats stats;
    stats.epoch = epoch;
    auto [train_loss, train_acc] = evaluate_classifier(model, train);
    stats.train_loss = train_loss;
    stats.train_accuracy = train_acc;
    if (valid.docs.empty()) {
      stats.valid_loss = train_loss;
      stats.valid_accuracy = train_acc;
    } else {
      auto [valid_loss, valid_acc] = evaluate_classifier(model, valid);
      stats.valid_loss = valid_loss;
      stats.valid_accuracy = valid_acc;
    }
    history.push_back(stats);
  }
  for (auto* p : params) p->frozen = false;
  return history;
}

// ---------------------------------------------------------------------------
// Checkpointing
// ---------------------------------------------------------------------------

template <typename T>
void save_classifier(const ClassifierModel<T>& model, const std::string& path) {
  checkpoint::Checkpoint ckpt;
  ckpt.kind = "classifier";
  ckpt.config = {{"encoder", model.enc_config}, {"classifier", model.config}};
  ckpt.vocab_itos = model.vocab_itos;
  ckpt.vocab_fingerprint = model.vocab_fingerprint;
  ckpt.add("embedding", num::Mat<float>(model.embedding.value.template cast<float>()));
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const std::string prefix = "lstm" + std::to_string(l);
    ckpt.add(prefix + ".W", num::Mat<float>(model.layers[l].W.value.template cast<float>()));
    ckpt.add(prefix + ".U", num::Mat<float>(model.layers[l].U.value.template cast<float>()));
    ckpt.add(prefix + ".b", num::Mat<float>(model.layers[l].b.value.template cast<float>()));
  }
  ckpt.add("head.w1", num::Mat<float>(model.head_w1.value.template cast<float>()));
  ckpt.add("head.b1", num::Mat<float>(model.head_b1.value.template cast<float>()));
  ckpt.add("head.w2", num::Mat<float>(model.head_w2.value.template cast<float>()));
  ckpt.add("head.b2", num::Mat<float>(model.head_b2.value.template cast<float>()));
  checkpoint::save(ckpt, path);
}

template <typename T>
ClassifierModel<T> load_classifier(const std::string& path) {
  checkpoint::Checkpoint ckpt = checkpoint::load(path);
  if (ckpt.kind != "classifier")
    throw SchemaError("expected a classifier checkpoint, found kind '" + ckpt.kind +
                      "': " + path);
  ClassifierModel<T> model;
  model.enc_config = ckpt.config.at("encoder").get<langmodel::LMConfig>();
  model.config = ckpt.config.at("classifier").get<ClfConfig>();
  model.vocab_itos = ckpt.vocab_itos;
  model.vocab_fingerprint = ckpt.vocab_fingerprint;

  model.embedding = Parameter<T>("embedding", model.enc_config.vocab_size,
                                 model.enc_config.embed_dim);
  model.embedding.value = ckpt.get("embedding").cast<T>();
  for (int l = 0; l < model.enc_config.num_layers; ++l) {
    const std::string prefix = "lstm" + std::to_string(l);
    const int d_in = model.enc_config.layer_input_dim(l);
    const int d_l = model.enc_config.layer_output_dim(l);
    num::LstmParams<T> layer{Parameter<T>(prefix + ".W", d_in, 4 * d_l),
                             Parameter<T>(prefix + ".U", d_l, 4 * d_l),
                             Parameter<T>(prefix + ".b", 1, 4 * d_l)};
    layer.W.value = ckpt.get(prefix + ".W").cast<T>();
    layer.U.value = ckpt.get(prefix + ".U").cast<T>();
    layer.b.value = ckpt.get(prefix + ".b").cast<T>();
    model.layers.push_back(std::move(layer));
  }
  const int feat = 3 * model.encoder_output_dim();
  model.head_w1 = Parameter<T>("head.w1", feat, model.config.head_hidden_dim);
  model.head_b1 = Parameter<T>("head.b1", 1, model.config.head_hidden_dim);
  model.head_w2 = Parameter<T>("head.w2", model.config.head_hidden_dim,
                               model.config.num_classes);
  model.head_b2 = Parameter<T>("head.b2", 1, model.config.num_classes);
  model.head_w1.value = ckpt.get("head.w1").cast<T>();
  model.head_b1.value = ckpt.get("head.b1").cast<T>();
  model.head_w2.value = ckpt.get("head.w2").cast<T>();
  model.head_b2.value = ckpt.get("head.b2").cast<T>();
  return model;
}

}  // namespace notecode::classifier
