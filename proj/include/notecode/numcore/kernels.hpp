#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "notecode/numcore/tensor.hpp"

namespace notecode::num {

// ---------------------------------------------------------------------------
// Embedding
// ---------------------------------------------------------------------------

template <typename T>
Mat<T> embedding_fwd(const std::vector<int>& ids, const Mat<T>& table) {
  Mat<T> out(static_cast<Eigen::Index>(ids.size()), table.cols());
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || ids[t] >= table.rows())
      throw IndexError("embedding_fwd: id " + std::to_string(ids[t]) + " out of range");
    out.row(static_cast<Eigen::Index>(t)) = table.row(ids[t]);
  }
  return out;
}

// Accumulates into `grad`; repeated ids add up.
template <typename T>
void embedding_bwd(const std::vector<int>& ids, const Mat<T>& d_out, Mat<T>& grad) {
  if (d_out.rows() != static_cast<Eigen::Index>(ids.size()) || d_out.cols() != grad.cols())
    throw ShapeError("embedding_bwd: gradient shape mismatch");
  for (std::size_t t = 0; t < ids.size(); ++t) {
    if (ids[t] < 0 || ids[t] >= grad.rows())
      throw IndexError("embedding_bwd: id out of range");
    grad.row(ids[t]) += d_out.row(static_cast<Eigen::Index>(t));
  }
}

// ---------------------------------------------------------------------------
// LSTM cell and layer
// ---------------------------------------------------------------------------

template <typename T>
struct LstmParams {
  Parameter<T> W;  // [d_in x 4*d_h], gate column blocks ordered i | f | g | o
  Parameter<T> U;  // [d_h x 4*d_h]
  Parameter<T> b;  // [1 x 4*d_h]

  int input_dim() const { return static_cast<int>(W.value.rows()); }
  int hidden_dim() const { return static_cast<int>(U.value.rows()); }
};

template <typename T>
struct LstmCellCache {
  Mat<T> x, h_prev, c_prev;
  Mat<T> i, f, g, o, tanh_c;
};

template <typename T>
inline T sigmoid(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

// Gates: i,f,o = sigmoid, candidate g = tanh;
// c = f*c_prev + i*g; h = o*tanh(c).
// `u_eff` is the recurrent matrix actually applied (masked during training,
// raw during evaluation). `active`, when given, marks which batch rows carry
// a real token this step; inactive rows keep h = c = 0.
template <typename T>
void lstm_cell_fwd(const Mat<T>& x, const Mat<T>& h_prev, const Mat<T>& c_prev,
                   const Mat<T>& w, const Mat<T>& u_eff, const Mat<T>& b,
                   Mat<T>& h_out, Mat<T>& c_out, LstmCellCache<T>* cache,
                   const std::vector<char>* active = nullptr) {
  const Eigen::Index batch = x.rows();
  const Eigen::Index d_h = u_eff.rows();
  if (x.cols() != w.rows()) throw ShapeError("lstm_cell_fwd: input width != W rows");
  if (h_prev.cols() != d_h || c_prev.cols() != d_h)
    throw ShapeError("lstm_cell_fwd: state width != hidden dim");
  if (w.cols() != 4 * d_h || u_eff.cols() != 4 * d_h || b.cols() != 4 * d_h)
    throw ShapeError("lstm_cell_fwd: gate block width mismatch");

  Mat<T> a = x * w + h_prev * u_eff;
  a.rowwise() += b.row(0);

  Mat<T> gi = a.block(0, 0, batch, d_h).unaryExpr([](T v) { return sigmoid(v); });
  Mat<T> gf = a.block(0, d_h, batch, d_h).unaryExpr([](T v) { return sigmoid(v); });
  Mat<T> gg = a.block(0, 2 * d_h, batch, d_h).array().tanh().matrix();
  Mat<T> go = a.block(0, 3 * d_h, batch, d_h).unaryExpr([](T v) { return sigmoid(v); });

  c_out = gf.cwiseProduct(c_prev) + gi.cwiseProduct(gg);
  Mat<T> tc = c_out.array().tanh().matrix();
  h_out = go.cwiseProduct(tc);

  if (active) {
    for (Eigen::Index r = 0; r < batch; ++r) {
      if (!(*active)[static_cast<std::size_t>(r)]) {
        h_out.row(r).setZero();
        c_out.row(r).setZero();
      }
    }
  }

  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->c_prev = c_prev;
    cache->i = std::move(gi);
    cache->f = std::move(gf);
    cache->g = std::move(gg);
    cache->o = std::move(go);
    cache->tanh_c = std::move(tc);
  }
}

// Exact analytic gradients. `d_h_out`/`d_c_out` are the incoming gradients
// w.r.t. this step's h and c. Parameter gradients accumulate into dW/dU/db;
// when the forward pass used a DropConnect mask, pass it with its inverse
// keep-probability scale so dU flows only through kept weights.
template <typename T>
void lstm_cell_bwd(const LstmCellCache<T>& cc, const Mat<T>& w, const Mat<T>& u_eff,
                   Mat<T> d_h_out, Mat<T> d_c_out,
                   Mat<T>& d_x, Mat<T>& d_h_prev, Mat<T>& d_c_prev,
                   Mat<T>& d_w, Mat<T>& d_u, Mat<T>& d_b,
                   const Mat<T>* u_mask = nullptr, T inv_keep = T(1),
                   const std::vector<char>* active = nullptr) {
  const Eigen::Index batch = cc.x.rows();
  const Eigen::Index d_h = u_eff.rows();

  if (active) {
    for (Eigen::Index r = 0; r < batch; ++r) {
      if (!(*active)[static_cast<std::size_t>(r)]) {
        d_h_out.row(r).setZero();
        d_c_out.row(r).setZero();
      }
    }
  }

  Mat<T> d_o = d_h_out.cwiseProduct(cc.tanh_c);
  Mat<T> one_minus_tc2 =
      (Mat<T>::Ones(batch, d_h) - cc.tanh_c.cwiseProduct(cc.tanh_c));
  Mat<T> d_c = d_c_out + d_h_out.cwiseProduct(cc.o).cwiseProduct(one_minus_tc2);

  Mat<T> d_i = d_c.cwiseProduct(cc.g);
  Mat<T> d_f = d_c.cwiseProduct(cc.c_prev);
  Mat<T> d_g = d_c.cwiseProduct(cc.i);
  d_c_prev = d_c.cwiseProduct(cc.f);

  Mat<T> da(batch, 4 * d_h);
  da.block(0, 0, batch, d_h) =
      d_i.cwiseProduct(cc.i).cwiseProduct(Mat<T>::Ones(batch, d_h) - cc.i);
  da.block(0, d_h, batch, d_h) =
      d_f.cwiseProduct(cc.f).cwiseProduct(Mat<T>::Ones(batch, d_h) - cc.f);
  da.block(0, 2 * d_h, batch, d_h) =
      d_g.cwiseProduct(Mat<T>::Ones(batch, d_h) - cc.g.cwiseProduct(cc.g));
  da.block(0, 3 * d_h, batch, d_h) =
      d_o.cwiseProduct(cc.o).cwiseProduct(Mat<T>::Ones(batch, d_h) - cc.o);

  d_x = da * w.transpose();
  d_h_prev = da * u_eff.transpose();

  d_w += cc.x.transpose() * da;
  Mat<T> du_raw = cc.h_prev.transpose() * da;
  if (u_mask)
    d_u += du_raw.cwiseProduct(*u_mask) * inv_keep;
  else
    d_u += du_raw;
  d_b += da.colwise().sum();
}

template <typename T>
struct LstmSeqCache {
  std::vector<LstmCellCache<T>> steps;
  Mat<T> u_eff;
  Mat<T> u_mask;  // empty when no DropConnect mask was applied
  T inv_keep = T(1);
};

// Unrolls the cell over the sequence, carrying (h, c) in place. When a
// weight-drop mask is supplied the recurrent matrix is U*mask*inv_keep for
// the whole sequence; evaluation passes no mask and uses U unchanged.
template <typename T>
void lstm_layer_fwd(const LstmParams<T>& p, const std::vector<Mat<T>>& xs,
                    Mat<T>& h, Mat<T>& c,
                    const Mat<T>* weight_mask, T inv_keep,
                    const std::vector<std::vector<char>>* active,
                    std::vector<Mat<T>>& hs_out, LstmSeqCache<T>* cache) {
  const std::size_t steps = xs.size();
  Mat<T> u_eff;
  if (weight_mask) {
    if (weight_mask->rows() != p.U.value.rows() || weight_mask->cols() != p.U.value.cols())
      throw ShapeError("lstm_layer_fwd: weight mask shape mismatch");
    u_eff = p.U.value.cwiseProduct(*weight_mask) * inv_keep;
  } else {
    u_eff = p.U.value;
  }
  if (cache) {
    cache->steps.resize(steps);
    cache->u_eff = u_eff;
    cache->u_mask = weight_mask ? *weight_mask : Mat<T>();
    cache->inv_keep = inv_keep;
  }
  hs_out.resize(steps);
  for (std::size_t t = 0; t < steps; ++t) {
    const std::vector<char>* act = active ? &(*active)[t] : nullptr;
    Mat<T> h_next, c_next;
    lstm_cell_fwd(xs[t], h, c, p.W.value, u_eff, p.b.value, h_next, c_next,
                  cache ? &cache->steps[t] : nullptr, act);
    h = std::move(h_next);
    c = std::move(c_next);
    hs_out[t] = h;
  }
}

// BPTT over the cached sequence. `d_hs[t]` is the gradient flowing into h_t
// from above (decoder or next layer); the terminal state gradient is zero
// because blocks detach. Returns the per-step input gradients and
// accumulates parameter gradients.
template <typename T>
std::vector<Mat<T>> lstm_layer_bwd(LstmParams<T>& p, const LstmSeqCache<T>& cache,
                                   const std::vector<Mat<T>>& d_hs,
                                   const std::vector<std::vector<char>>* active) {
  const std::size_t steps = cache.steps.size();
  if (d_hs.size() != steps) throw ShapeError("lstm_layer_bwd: step count mismatch");
  const Eigen::Index batch = steps ? cache.steps[0].x.rows() : 0;
  const Eigen::Index d_h = p.U.value.rows();

  std::vector<Mat<T>> d_xs(steps);
  Mat<T> d_h_carry = Mat<T>::Zero(batch, d_h);
  Mat<T> d_c_carry = Mat<T>::Zero(batch, d_h);
  const Mat<T>* mask = cache.u_mask.size() ? &cache.u_mask : nullptr;

  for (std::size_t ti = steps; ti-- > 0;) {
    const std::vector<char>* act = active ? &(*active)[ti] : nullptr;
    Mat<T> d_h_prev, d_c_prev;
    const Mat<T> d_h_total = d_hs[ti] + d_h_carry;
    lstm_cell_bwd(cache.steps[ti], p.W.value, cache.u_eff,
                  d_h_total, d_c_carry,
                  d_xs[ti], d_h_prev, d_c_prev,
                  p.W.grad, p.U.grad, p.b.grad, mask, cache.inv_keep, act);
    d_h_carry = std::move(d_h_prev);
    d_c_carry = std::move(d_c_prev);
  }
  return d_xs;
}

// ---------------------------------------------------------------------------
// Dropout masks
// ---------------------------------------------------------------------------

// The five AWD-LSTM dropout sites plus the classifier head's dropout.
struct DropoutSpec {
  double p_encoder = 0.0;  // whole-word embedding row drop
  double p_input = 0.0;    // embedding output, variational
  double p_weight = 0.0;   // DropConnect on recurrent U, fixed per sequence
  double p_hidden = 0.0;   // between LSTM layers, variational
  double p_output = 0.0;   // final LSTM output, variational
  double p_classifier = 0.5;

  void validate() const {
    for (double p : {p_encoder, p_input, p_weight, p_hidden, p_output, p_classifier})
      if (p < 0.0 || p > 1.0) throw ConfigError("dropout probability must be in [0,1]");
  }
};

// Inverted Bernoulli mask: entries are 0 or 1/(1-p). One mask per sequence
// per site, broadcast over timesteps (variational discipline).
template <typename T>
Mat<T> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  if (p < 0.0 || p > 1.0) throw ConfigError("dropout probability must be in [0,1]");
  if (p == 1.0) throw ConfigError("dropout probability 1 would zero every activation");
  Mat<T> m(rows, cols);
  if (p == 0.0) {
    m.setOnes();
    return m;
  }
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      m(r, c) = rng.bernoulli(p) ? T(0) : keep_scale;
  return m;
}

// Plain 0/1 keep mask (no scaling) for DropConnect; the caller applies the
// 1/(1-p) factor, e.g. through lstm_layer_fwd's inv_keep.
template <typename T>
Mat<T> keep_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  if (p < 0.0 || p > 1.0) throw ConfigError("dropout probability must be in [0,1]");
  if (p == 1.0) throw ConfigError("dropout probability 1 would drop every weight");
  Mat<T> m(rows, cols);
  if (p == 0.0) {
    m.setOnes();
    return m;
  }
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = rng.bernoulli(p) ? T(0) : T(1);
  return m;
}

// Whole-word drop for the embedding table: one scale per vocabulary row.
template <typename T>
std::vector<T> embedding_row_scales(Eigen::Index vocab, double p, Rng& rng) {
  if (p < 0.0 || p > 1.0) throw ConfigError("dropout probability must be in [0,1]");
  if (p == 1.0) throw ConfigError("dropout probability 1 would zero every embedding");
  std::vector<T> scales(static_cast<std::size_t>(vocab), T(1));
  if (p == 0.0) return scales;
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  for (auto& s : scales) s = rng.bernoulli(p) ? T(0) : keep_scale;
  return scales;
}

// ---------------------------------------------------------------------------
// Linear / ReLU
// ---------------------------------------------------------------------------

template <typename T>
Mat<T> linear_fwd(const Mat<T>& x, const Mat<T>& w, const Mat<T>& b) {
  if (x.cols() != w.rows()) throw ShapeError("linear_fwd: inner dimension mismatch");
  if (b.rows() != 1 || b.cols() != w.cols()) throw ShapeError("linear_fwd: bias shape mismatch");
  Mat<T> y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

template <typename T>
void linear_bwd(const Mat<T>& x, const Mat<T>& w, const Mat<T>& d_y,
                Mat<T>& d_x, Mat<T>& d_w, Mat<T>& d_b) {
  d_x = d_y * w.transpose();
  d_w += x.transpose() * d_y;
  d_b += d_y.colwise().sum();
}

template <typename T>
Mat<T> relu_fwd(const Mat<T>& x) {
  return x.cwiseMax(T(0));
}

// Subgradient at 0 is 0.
template <typename T>
Mat<T> relu_bwd(const Mat<T>& x, const Mat<T>& d_y) {
  return (x.array() > T(0)).template cast<T>().matrix().cwiseProduct(d_y);
}

// ---------------------------------------------------------------------------
// Softmax cross-entropy
// ---------------------------------------------------------------------------

template <typename T>
Mat<T> softmax_rows(const Mat<T>& logits) {
  Mat<T> p(logits.rows(), logits.cols());
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const T m = logits.row(r).maxCoeff();
    Eigen::Array<T, 1, Eigen::Dynamic> e = (logits.row(r).array() - m).exp();
    p.row(r) = (e / e.sum()).matrix();
  }
  return p;
}

// Returns the summed loss over rows; d_logits (if non-null) receives the
// gradient of that sum: softmax - onehot(target), row by row.
template <typename T>
double softmax_xent_rows(const Mat<T>& logits, const std::vector<int>& targets,
                         Mat<T>* d_logits) {
  if (logits.rows() != static_cast<Eigen::Index>(targets.size()))
    throw ShapeError("softmax_xent_rows: target count mismatch");
  Mat<T> p = softmax_rows(logits);
  double loss = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const int t = targets[static_cast<std::size_t>(r)];
    if (t < 0 || t >= logits.cols()) throw IndexError("softmax_xent_rows: target out of range");
    // log(p) recomputed stably from the shifted logits.
    const T m = logits.row(r).maxCoeff();
    T log_z = std::log((logits.row(r).array() - m).exp().sum());
    loss += static_cast<double>(m + log_z - logits(r, t));
  }
  if (d_logits) {
    *d_logits = p;
    for (Eigen::Index r = 0; r < logits.rows(); ++r)
      (*d_logits)(r, targets[static_cast<std::size_t>(r)]) -= T(1);
  }
  return loss;
}

// Single-example convenience: loss and dlogits for one logit row.
template <typename T>
std::pair<double, Mat<T>> softmax_xent(const Mat<T>& logits, int target) {
  if (logits.rows() != 1) throw ShapeError("softmax_xent: expected a single logit row");
  Mat<T> d;
  double loss = softmax_xent_rows(logits, std::vector<int>{target}, &d);
  return {loss, d};
}

}  // namespace notecode::num
