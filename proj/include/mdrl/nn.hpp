#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "mdrl/common.hpp"
#include "mdrl/param_vector.hpp"

namespace mdrl {

enum class Activation { relu, tanh, identity };

inline double apply_act(Activation a, double z) {
  switch (a) {
    case Activation::relu: return z > 0.0 ? z : 0.0;
    case Activation::tanh: return std::tanh(z);
    case Activation::identity: return z;
  }
  return z;
}

// derivative in terms of the pre-activation z
inline double act_deriv(Activation a, double z) {
  switch (a) {
    case Activation::relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::tanh: {
      double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::identity: return 1.0;
  }
  return 1.0;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// ---------------------------------------------------------------------------
// Dense layer: a view into a ParamVector. W is out x in, row-major.

struct DenseView {
  std::size_t w_off = 0;
  std::size_t b_off = 0;
  std::size_t in_width = 0;
  std::size_t out_width = 0;
  Activation act = Activation::identity;
};

inline DenseView make_dense(ParamVector& pv, const std::string& name,
                            std::size_t in, std::size_t out, Activation act) {
  DenseView v;
  v.w_off = pv.add(name + ".W", {out, in});
  v.b_off = pv.add(name + ".b", {out});
  v.in_width = in;
  v.out_width = out;
  v.act = act;
  return v;
}

inline void init_dense(double* p, const DenseView& v, Rng& rng,
                       double scale = 1.0) {
  double bound =
      scale * std::sqrt(6.0 / double(v.in_width + v.out_width));
  for (std::size_t i = 0; i < v.out_width * v.in_width; ++i)
    p[v.w_off + i] = rng.uniform_range(-bound, bound);
  for (std::size_t i = 0; i < v.out_width; ++i) p[v.b_off + i] = 0.0;
}

// y = act(Wx + b). If pre != nullptr the pre-activation is stored there
// (needed for backward and jvp).
inline void dense_forward(const double* p, const DenseView& v, const double* x,
                          double* y, double* pre = nullptr) {
  const double* W = p + v.w_off;
  const double* b = p + v.b_off;
  for (std::size_t o = 0; o < v.out_width; ++o) {
    const double* row = W + o * v.in_width;
    double z = b[o];
    for (std::size_t i = 0; i < v.in_width; ++i) z += row[i] * x[i];
    if (pre) pre[o] = z;
    y[o] = apply_act(v.act, z);
  }
}

// Reverse pass. dy is the loss gradient at the layer output; accumulates
// parameter gradients into g and writes the input gradient to dx (may be
// nullptr when the input is not differentiated, e.g. embeddings upstream
// handled separately).
inline void dense_backward(const double* p, const DenseView& v,
                           const double* x, const double* pre,
                           const double* dy, double* g, double* dx) {
  const double* W = p + v.w_off;
  double* gW = g + v.w_off;
  double* gb = g + v.b_off;
  if (dx)
    for (std::size_t i = 0; i < v.in_width; ++i) dx[i] = 0.0;
  for (std::size_t o = 0; o < v.out_width; ++o) {
    double dz = dy[o] * act_deriv(v.act, pre[o]);
    if (dz == 0.0) continue;
    gb[o] += dz;
    const double* row = W + o * v.in_width;
    double* grow = gW + o * v.in_width;
    for (std::size_t i = 0; i < v.in_width; ++i) {
      grow[i] += dz * x[i];
      if (dx) dx[i] += dz * row[i];
    }
  }
}

// Forward-mode tangent: given input x with tangent tx (may be nullptr for
// zero) and a parameter-space direction tp, produces the output tangent ty.
// pre must hold the pre-activations of the corresponding forward call.
inline void dense_jvp(const double* p, const DenseView& v, const double* x,
                      const double* tx, const double* tp, const double* pre,
                      double* ty) {
  const double* W = p + v.w_off;
  const double* tW = tp + v.w_off;
  const double* tb = tp + v.b_off;
  for (std::size_t o = 0; o < v.out_width; ++o) {
    const double* row = W + o * v.in_width;
    const double* trow = tW + o * v.in_width;
    double tz = tb[o];
    for (std::size_t i = 0; i < v.in_width; ++i) {
      tz += trow[i] * x[i];
      if (tx) tz += row[i] * tx[i];
    }
    ty[o] = tz * act_deriv(v.act, pre[o]);
  }
}

// ---------------------------------------------------------------------------
// LSTM cell. Gate order in the stacked weight block: input, forget, output,
// candidate. W is (4h) x (in + h), bias 4h; parameter count 4h(h+in+1).

struct LstmView {
  std::size_t w_off = 0;
  std::size_t b_off = 0;
  std::size_t in_width = 0;
  std::size_t hidden = 0;
};

inline LstmView make_lstm(ParamVector& pv, const std::string& name,
                          std::size_t in, std::size_t hidden) {
  LstmView v;
  v.w_off = pv.add(name + ".W", {4 * hidden, in + hidden});
  v.b_off = pv.add(name + ".b", {4 * hidden});
  v.in_width = in;
  v.hidden = hidden;
  return v;
}

inline void init_lstm(double* p, const LstmView& v, Rng& rng) {
  std::size_t cols = v.in_width + v.hidden;
  double bound = std::sqrt(6.0 / double(cols + v.hidden));
  for (std::size_t i = 0; i < 4 * v.hidden * cols; ++i)
    p[v.w_off + i] = rng.uniform_range(-bound, bound);
  for (std::size_t i = 0; i < 4 * v.hidden; ++i) p[v.b_off + i] = 0.0;
  // forget-gate bias +1
  for (std::size_t i = 0; i < v.hidden; ++i) p[v.b_off + v.hidden + i] = 1.0;
}

// Saved activations of one step, enough to run the exact reverse pass.
struct LstmCache {
  std::vector<double> x, h_prev, c_prev;
  std::vector<double> gi, gf, go, gg;  // post-nonlinearity gate values
  std::vector<double> c, tanh_c;
};

inline void lstm_forward(const double* p, const LstmView& v, const double* x,
                         const double* h_prev, const double* c_prev,
                         double* h_out, double* c_out,
                         LstmCache* cache = nullptr) {
  std::size_t h = v.hidden;
  std::size_t cols = v.in_width + h;
  const double* W = p + v.w_off;
  const double* b = p + v.b_off;
  if (cache) {
    cache->x.assign(x, x + v.in_width);
    cache->h_prev.assign(h_prev, h_prev + h);
    cache->c_prev.assign(c_prev, c_prev + h);
    cache->gi.resize(h);
    cache->gf.resize(h);
    cache->go.resize(h);
    cache->gg.resize(h);
    cache->c.resize(h);
    cache->tanh_c.resize(h);
  }
  for (std::size_t u = 0; u < h; ++u) {
    double z[4];
    for (int gate = 0; gate < 4; ++gate) {
      const double* row = W + (gate * h + u) * cols;
      double s = b[gate * h + u];
      for (std::size_t i = 0; i < v.in_width; ++i) s += row[i] * x[i];
      for (std::size_t i = 0; i < h; ++i) s += row[v.in_width + i] * h_prev[i];
      z[gate] = s;
    }
    double gi = sigmoid(z[0]);
    double gf = sigmoid(z[1]);
    double go = sigmoid(z[2]);
    double gg = std::tanh(z[3]);
    double c = gf * c_prev[u] + gi * gg;
    double tc = std::tanh(c);
    c_out[u] = c;
    h_out[u] = go * tc;
    if (cache) {
      cache->gi[u] = gi;
      cache->gf[u] = gf;
      cache->go[u] = go;
      cache->gg[u] = gg;
      cache->c[u] = c;
      cache->tanh_c[u] = tc;
    }
  }
}

// Reverse pass for one step. dh/dc are the incoming gradients w.r.t. h_out
// and c_out; parameter gradients accumulate into g; dx, dh_prev are written,
// dc_prev is written (all may alias fresh buffers supplied by the caller).
inline void lstm_backward(const double* p, const LstmView& v,
                          const LstmCache& cc, const double* dh,
                          const double* dc_in, double* g, double* dx,
                          double* dh_prev, double* dc_prev) {
  std::size_t h = v.hidden;
  std::size_t cols = v.in_width + h;
  const double* W = p + v.w_off;
  double* gW = g + v.w_off;
  double* gb = g + v.b_off;
  for (std::size_t i = 0; i < v.in_width; ++i) dx[i] = 0.0;
  for (std::size_t i = 0; i < h; ++i) dh_prev[i] = 0.0;
  for (std::size_t u = 0; u < h; ++u) {
    double dho = dh[u];
    double dc = dc_in[u] + dho * cc.go[u] * (1.0 - cc.tanh_c[u] * cc.tanh_c[u]);
    double dgo = dho * cc.tanh_c[u];
    double dgi = dc * cc.gg[u];
    double dgf = dc * cc.c_prev[u];
    double dgg = dc * cc.gi[u];
    dc_prev[u] = dc * cc.gf[u];
    // back through the gate nonlinearities
    double dz[4];
    dz[0] = dgi * cc.gi[u] * (1.0 - cc.gi[u]);
    dz[1] = dgf * cc.gf[u] * (1.0 - cc.gf[u]);
    dz[2] = dgo * cc.go[u] * (1.0 - cc.go[u]);
    dz[3] = dgg * (1.0 - cc.gg[u] * cc.gg[u]);
    for (int gate = 0; gate < 4; ++gate) {
      double d = dz[gate];
      if (d == 0.0) continue;
      std::size_t r = (gate * h + u) * cols;
      gb[gate * h + u] += d;
      const double* row = W + r;
      double* grow = gW + r;
      for (std::size_t i = 0; i < v.in_width; ++i) {
        grow[i] += d * cc.x[i];
        dx[i] += d * row[i];
      }
      for (std::size_t i = 0; i < h; ++i) {
        grow[v.in_width + i] += d * cc.h_prev[i];
        dh_prev[i] += d * row[v.in_width + i];
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Embedding table: vocab x width rows in the ParamVector.

struct EmbeddingView {
  std::size_t off = 0;
  std::size_t vocab = 0;
  std::size_t width = 0;
};

inline EmbeddingView make_embedding(ParamVector& pv, const std::string& name,
                                    std::size_t vocab, std::size_t width) {
  EmbeddingView v;
  v.off = pv.add(name, {vocab, width});
  v.vocab = vocab;
  v.width = width;
  return v;
}

inline void init_embedding(double* p, const EmbeddingView& v, Rng& rng) {
  double bound = std::sqrt(6.0 / double(v.vocab + v.width));
  for (std::size_t i = 0; i < v.vocab * v.width; ++i)
    p[v.off + i] = rng.uniform_range(-bound, bound);
}

inline const double* embedding_row(const double* p, const EmbeddingView& v,
                                   std::size_t idx) {
  if (idx >= v.vocab)
    throw config_error("embedding lookup out of range: " +
                       std::to_string(idx));
  return p + v.off + idx * v.width;
}

inline void embedding_backward(const EmbeddingView& v, std::size_t idx,
                               const double* dvec, double* g) {
  double* row = g + v.off + idx * v.width;
  for (std::size_t i = 0; i < v.width; ++i) row[i] += dvec[i];
}

// ---------------------------------------------------------------------------
// Softmax and cross-entropy. Overflow-safe via max shift.

inline void softmax(const double* logits, std::size_t n, double* probs) {
  double m = logits[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, logits[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] = std::exp(logits[i] - m);
    s += probs[i];
  }
  for (std::size_t i = 0; i < n; ++i) probs[i] /= s;
}

inline std::vector<double> softmax(const std::vector<double>& logits) {
  std::vector<double> p(logits.size());
  softmax(logits.data(), logits.size(), p.data());
  return p;
}

// Returns -log p[target]; fills probs. dlogits of this loss is p - onehot.
inline double cross_entropy_from_logits(const double* logits, std::size_t n,
                                        std::size_t target, double* probs) {
  double m = logits[0];
  for (std::size_t i = 1; i < n; ++i) m = std::max(m, logits[i]);
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    probs[i] = std::exp(logits[i] - m);
    s += probs[i];
  }
  double log_z = std::log(s) + m;
  for (std::size_t i = 0; i < n; ++i) probs[i] /= s;
  return log_z - logits[target];
}

}  // namespace mdrl
