#pragma once

// Parameter registry and transformer building blocks with explicit
// forward/backward passes. Templated on the scalar type so the gradient
// checks can run the whole model in double precision.

#include <cassert>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "uvt/common.hpp"

namespace uvt {

template <class S>
struct Param {
  std::string name;
  Mat<S> v;
  int id = -1;
};

// Registration order is the canonical parameter order used by the optimizer,
// checkpoints and content hashes.
template <class S>
struct ParamStore {
  std::vector<Param<S>*> params;

  void add(Param<S>& p, const std::string& name) {
    p.name = name;
    p.id = static_cast<int>(params.size());
    params.push_back(&p);
  }
  size_t size() const { return params.size(); }
  int64_t scalar_count() const {
    int64_t n = 0;
    for (const auto* p : params) n += p->v.size();
    return n;
  }
};

// Gradient sink aligned with a ParamStore. Kept separate from the parameters
// so concurrent per-sample backward passes can accumulate into private sinks.
template <class S>
struct Grads {
  std::vector<Mat<S>> g;

  void init_like(const ParamStore<S>& store) {
    g.resize(store.params.size());
    for (size_t i = 0; i < g.size(); ++i)
      g[i] = Mat<S>::Zero(store.params[i]->v.rows(), store.params[i]->v.cols());
  }
  void zero() {
    for (auto& m : g) m.setZero();
  }
  Mat<S>& at(const Param<S>& p) { return g[p.id]; }
  void add(const Grads<S>& other) {
    for (size_t i = 0; i < g.size(); ++i) g[i] += other.g[i];
  }
  double sq_norm() const {
    double n = 0;
    for (const auto& m : g) n += static_cast<double>(m.template cast<double>().squaredNorm());
    return n;
  }
  void scale(S a) {
    for (auto& m : g) m *= a;
  }
};

template <class S>
inline void init_normal(Mat<S>& m, Rng& rng, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = static_cast<S>(dist(rng));
}

constexpr double kInitStd = 0.02;

// ---------------------------------------------------------------------------
// Linear: y = x W + b
// ---------------------------------------------------------------------------

template <class S>
struct Linear {
  Param<S> w;  // in x out
  Param<S> b;  // 1 x out
  int in = 0, out = 0;

  void setup(int in_dim, int out_dim) {
    in = in_dim;
    out = out_dim;
    w.v = Mat<S>::Zero(in, out);
    b.v = Mat<S>::Zero(1, out);
  }
  void register_params(ParamStore<S>& ps, const std::string& prefix) {
    ps.add(w, prefix + ".w");
    ps.add(b, prefix + ".b");
  }
  void init(Rng& rng, double stddev = kInitStd) { init_normal(w.v, rng, stddev); }

  Mat<S> fwd(const Mat<S>& x) const { return (x * w.v).rowwise() + b.v.row(0); }

  // Accumulates dW, db and returns dx. x must be the forward input.
  Mat<S> bwd(const Mat<S>& x, const Mat<S>& dy, Grads<S>& gs) const {
    gs.at(w).noalias() += x.transpose() * dy;
    gs.at(b).row(0) += dy.colwise().sum();
    return dy * w.v.transpose();
  }
};

// ---------------------------------------------------------------------------
// LayerNorm over each row
// ---------------------------------------------------------------------------

template <class S>
struct LayerNorm {
  Param<S> gamma;  // 1 x d
  Param<S> beta;   // 1 x d
  int dim = 0;
  static constexpr double kEps = 1e-5;

  void setup(int d) {
    dim = d;
    gamma.v = Mat<S>::Ones(1, d);
    beta.v = Mat<S>::Zero(1, d);
  }
  void register_params(ParamStore<S>& ps, const std::string& prefix) {
    ps.add(gamma, prefix + ".gamma");
    ps.add(beta, prefix + ".beta");
  }

  struct Cache {
    Mat<S> xhat;           // rows x d
    std::vector<S> rstd;   // per row
  };

  Mat<S> fwd(const Mat<S>& x, Cache& c) const {
    const Eigen::Index rows = x.rows(), d = x.cols();
    c.xhat.resize(rows, d);
    c.rstd.resize(rows);
    Mat<S> y(rows, d);
    for (Eigen::Index r = 0; r < rows; ++r) {
      S mean = x.row(r).mean();
      S var = (x.row(r).array() - mean).square().mean();
      S rstd = S(1) / std::sqrt(var + S(kEps));
      c.rstd[r] = rstd;
      c.xhat.row(r) = (x.row(r).array() - mean) * rstd;
      y.row(r) = c.xhat.row(r).cwiseProduct(gamma.v.row(0)) + beta.v.row(0);
    }
    return y;
  }

  Mat<S> bwd(const Cache& c, const Mat<S>& dy, Grads<S>& gs) const {
    const Eigen::Index rows = dy.rows(), d = dy.cols();
    Mat<S> dx(rows, d);
    for (Eigen::Index r = 0; r < rows; ++r) {
      auto dxhat = dy.row(r).cwiseProduct(gamma.v.row(0));
      S m1 = dxhat.mean();
      S m2 = dxhat.cwiseProduct(c.xhat.row(r)).mean();
      dx.row(r) = ((dxhat.array() - m1 - c.xhat.row(r).array() * m2) * c.rstd[r]).matrix();
    }
    gs.at(gamma).row(0) += dy.cwiseProduct(c.xhat).colwise().sum();
    gs.at(beta).row(0) += dy.colwise().sum();
    return dx;
  }
};

// ---------------------------------------------------------------------------
// Multi-head self-attention (optionally causal)
// ---------------------------------------------------------------------------

template <class S>
struct SelfAttention {
  Linear<S> wqkv;  // d -> 3d
  Linear<S> wo;    // d -> d
  int dim = 0, heads = 0;
  bool causal = false;

  void setup(int d, int n_heads, bool causal_mask) {
    if (d % n_heads != 0) throw std::invalid_argument("attention dim not divisible by heads");
    dim = d;
    heads = n_heads;
    causal = causal_mask;
    wqkv.setup(d, 3 * d);
    wo.setup(d, d);
  }
  void register_params(ParamStore<S>& ps, const std::string& prefix) {
    wqkv.register_params(ps, prefix + ".qkv");
    wo.register_params(ps, prefix + ".out");
  }
  void init(Rng& rng) {
    wqkv.init(rng);
    wo.init(rng);
  }

  struct Cache {
    Mat<S> x, qkv, ctx;
    std::vector<Mat<S>> attn;  // per head, T x T
  };

  Mat<S> fwd(const Mat<S>& x, Cache& c) const {
    const Eigen::Index t = x.rows();
    const int dh = dim / heads;
    const S scale = S(1) / std::sqrt(S(dh));
    c.x = x;
    c.qkv = wqkv.fwd(x);
    c.ctx.resize(t, dim);
    c.attn.assign(heads, Mat<S>());
    for (int h = 0; h < heads; ++h) {
      auto q = c.qkv.block(0, h * dh, t, dh);
      auto k = c.qkv.block(0, dim + h * dh, t, dh);
      auto v = c.qkv.block(0, 2 * dim + h * dh, t, dh);
      Mat<S> scores = q * k.transpose() * scale;
      if (causal)
        for (Eigen::Index r = 0; r < t; ++r)
          for (Eigen::Index cc = r + 1; cc < t; ++cc) scores(r, cc) = S(-1e30);
      softmax_rows(scores);
      c.attn[h] = std::move(scores);
      c.ctx.block(0, h * dh, t, dh).noalias() = c.attn[h] * v;
    }
    return wo.fwd(c.ctx);
  }

  Mat<S> bwd(const Cache& c, const Mat<S>& dy, Grads<S>& gs) const {
    const Eigen::Index t = dy.rows();
    const int dh = dim / heads;
    const S scale = S(1) / std::sqrt(S(dh));
    Mat<S> dctx = wo.bwd(c.ctx, dy, gs);
    Mat<S> dqkv = Mat<S>::Zero(t, 3 * dim);
    for (int h = 0; h < heads; ++h) {
      auto q = c.qkv.block(0, h * dh, t, dh);
      auto k = c.qkv.block(0, dim + h * dh, t, dh);
      auto v = c.qkv.block(0, 2 * dim + h * dh, t, dh);
      const Mat<S>& a = c.attn[h];
      auto dctx_h = dctx.block(0, h * dh, t, dh);

      Mat<S> da = dctx_h * v.transpose();
      dqkv.block(0, 2 * dim + h * dh, t, dh).noalias() = a.transpose() * dctx_h;
      // softmax backward per row
      Mat<S> ds(t, t);
      for (Eigen::Index r = 0; r < t; ++r) {
        S dot = a.row(r).dot(da.row(r));
        ds.row(r) = (a.row(r).array() * (da.row(r).array() - dot)).matrix();
      }
      ds *= scale;
      dqkv.block(0, h * dh, t, dh).noalias() = ds * k;
      dqkv.block(0, dim + h * dh, t, dh).noalias() = ds.transpose() * q;
    }
    return wqkv.bwd(c.x, dqkv, gs);
  }
};

// ---------------------------------------------------------------------------
// Multi-head cross-attention: queries attend to a separate context
// ---------------------------------------------------------------------------

template <class S>
struct CrossAttention {
  Linear<S> wq, wk, wv, wo;
  int dim = 0, kv_dim = 0, heads = 0;

  void setup(int d, int d_kv, int n_heads) {
    if (d % n_heads != 0) throw std::invalid_argument("attention dim not divisible by heads");
    dim = d;
    kv_dim = d_kv;
    heads = n_heads;
    wq.setup(d, d);
    wk.setup(d_kv, d);
    wv.setup(d_kv, d);
    wo.setup(d, d);
  }
  void register_params(ParamStore<S>& ps, const std::string& prefix) {
    wq.register_params(ps, prefix + ".q");
    wk.register_params(ps, prefix + ".k");
    wv.register_params(ps, prefix + ".v");
    wo.register_params(ps, prefix + ".out");
  }
  // qk_std > kInitStd sharpens the initial attention pattern; with K queries
  // against hundreds of keys a near-uniform softmax passes only the mean
  // token forward.
  void init(Rng& rng, double qk_std = kInitStd) {
    wq.init(rng, qk_std);
    wk.init(rng, qk_std);
    wv.init(rng);
    wo.init(rng);
  }

  struct Cache {
    Mat<S> q_in, kv_in, q, k, v, ctx;
    std::vector<Mat<S>> attn;  // per head, Tq x Tk
  };

  Mat<S> fwd(const Mat<S>& q_in, const Mat<S>& kv_in, Cache& c) const {
    const Eigen::Index tq = q_in.rows(), tk = kv_in.rows();
    const int dh = dim / heads;
    const S scale = S(1) / std::sqrt(S(dh));
    c.q_in = q_in;
    c.kv_in = kv_in;
    c.q = wq.fwd(q_in);
    c.k = wk.fwd(kv_in);
    c.v = wv.fwd(kv_in);
    c.ctx.resize(tq, dim);
    c.attn.assign(heads, Mat<S>());
    for (int h = 0; h < heads; ++h) {
      Mat<S> scores = c.q.block(0, h * dh, tq, dh) * c.k.block(0, h * dh, tk, dh).transpose() * scale;
      softmax_rows(scores);
      c.attn[h] = std::move(scores);
      c.ctx.block(0, h * dh, tq, dh).noalias() = c.attn[h] * c.v.block(0, h * dh, tk, dh);
    }
    return wo.fwd(c.ctx);
  }

  // Returns dq_in; accumulates dkv_in into dkv (which must be pre-sized).
  Mat<S> bwd(const Cache& c, const Mat<S>& dy, Grads<S>& gs, Mat<S>& dkv) const {
    const Eigen::Index tq = dy.rows(), tk = c.kv_in.rows();
    const int dh = dim / heads;
    const S scale = S(1) / std::sqrt(S(dh));
    Mat<S> dctx = wo.bwd(c.ctx, dy, gs);
    Mat<S> dq = Mat<S>::Zero(tq, dim);
    Mat<S> dk = Mat<S>::Zero(tk, dim);
    Mat<S> dv = Mat<S>::Zero(tk, dim);
    for (int h = 0; h < heads; ++h) {
      const Mat<S>& a = c.attn[h];
      auto dctx_h = dctx.block(0, h * dh, tq, dh);
      Mat<S> da = dctx_h * c.v.block(0, h * dh, tk, dh).transpose();
      dv.block(0, h * dh, tk, dh).noalias() = a.transpose() * dctx_h;
      Mat<S> ds(tq, tk);
      for (Eigen::Index r = 0; r < tq; ++r) {
        S dot = a.row(r).dot(da.row(r));
        ds.row(r) = (a.row(r).array() * (da.row(r).array() - dot)).matrix();
      }
      ds *= scale;
      dq.block(0, h * dh, tq, dh).noalias() = ds * c.k.block(0, h * dh, tk, dh);
      dk.block(0, h * dh, tk, dh).noalias() = ds.transpose() * c.q.block(0, h * dh, tq, dh);
    }
    dkv += wk.bwd(c.kv_in, dk, gs);
    dkv += wv.bwd(c.kv_in, dv, gs);
    return wq.bwd(c.q_in, dq, gs);
  }
};

// ---------------------------------------------------------------------------
// MLP with GeLU
// ---------------------------------------------------------------------------

template <class S>
struct Mlp {
  Linear<S> fc1, fc2;

  void setup(int d, int hidden) {
    fc1.setup(d, hidden);
    fc2.setup(hidden, d);
  }
  void register_params(ParamStore<S>& ps, const std::string& prefix) {
    fc1.register_params(ps, prefix + ".fc1");
    fc2.register_params(ps, prefix + ".fc2");
  }
  void init(Rng& rng) {
    fc1.init(rng);
    fc2.init(rng);
  }

  struct Cache {
    Mat<S> x, pre, post;
  };

  Mat<S> fwd(const Mat<S>& x, Cache& c) const {
    c.x = x;
    c.pre = fc1.fwd(x);
    c.post = c.pre.unaryExpr([](S v) { return gelu(v); });
    return fc2.fwd(c.post);
  }

  Mat<S> bwd(const Cache& c, const Mat<S>& dy, Grads<S>& gs) const {
    Mat<S> dpost = fc2.bwd(c.post, dy, gs);
    Mat<S> dpre = dpost.cwiseProduct(c.pre.unaryExpr([](S v) { return gelu_grad(v); }));
    return fc1.bwd(c.x, dpre, gs);
  }
};

// ---------------------------------------------------------------------------
// Pre-norm transformer block: x + Attn(LN(x)), then x + MLP(LN(x))
// ---------------------------------------------------------------------------

template <class S>
struct TransformerBlock {
  LayerNorm<S> ln1, ln2;
  SelfAttention<S> attn;
  Mlp<S> mlp;

  void setup(int d, int heads, int mlp_hidden, bool causal) {
    ln1.setup(d);
    ln2.setup(d);
    attn.setup(d, heads, causal);
    mlp.setup(d, mlp_hidden);
  }
  void register_params(ParamStore<S>& ps, const std::string& prefix) {
    ln1.register_params(ps, prefix + ".ln1");
    attn.register_params(ps, prefix + ".attn");
    ln2.register_params(ps, prefix + ".ln2");
    mlp.register_params(ps, prefix + ".mlp");
  }
  void init(Rng& rng) {
    attn.init(rng);
    mlp.init(rng);
  }

  struct Cache {
    typename LayerNorm<S>::Cache ln1c, ln2c;
    typename SelfAttention<S>::Cache attnc;
    typename Mlp<S>::Cache mlpc;
  };

  Mat<S> fwd(const Mat<S>& x, Cache& c) const {
    Mat<S> x1 = x + attn.fwd(ln1.fwd(x, c.ln1c), c.attnc);
    return x1 + mlp.fwd(ln2.fwd(x1, c.ln2c), c.mlpc);
  }

  Mat<S> bwd(const Cache& c, const Mat<S>& dy, Grads<S>& gs) const {
    Mat<S> dx1 = dy + ln2.bwd(c.ln2c, mlp.bwd(c.mlpc, dy, gs), gs);
    return dx1 + ln1.bwd(c.ln1c, attn.bwd(c.attnc, dx1, gs), gs);
  }
};

}  // namespace uvt
