#pragma once

// ViT backbone with Cropped Position Embedding augmentation for multi-scale
// inputs.

#include <array>
#include <stdexcept>
#include <vector>

#include "uvt/common.hpp"
#include "uvt/image.hpp"
#include "uvt/nn.hpp"

namespace uvt {

struct EncoderConfig {
  int patch = 8;
  int dim = 64;
  int layers = 3;
  int heads = 4;
  int n_cls = 1;
  int max_grid = 16;   // patches per side of the maximum input
  int mlp_ratio = 4;
  bool use_pos_embed = true;  // disabled only by the permutation-equivariance test

  int max_side() const { return patch * max_grid; }
  bool operator==(const EncoderConfig&) const = default;
};

template <class S>
struct VisualTokens {
  Mat<S> x;  // (n_cls + n_spatial) x dim; class tokens first
  int n_spatial = 0;
  int n_cls = 0;
  int grid_h = 0, grid_w = 0;

  int total() const { return n_spatial + n_cls; }
};

// ---------------------------------------------------------------------------
// Patchify
// ---------------------------------------------------------------------------

// Row-major p x p patches flattened to 3p^2 vectors (pixel-major, RGB last).
template <class S>
Mat<S> patchify(const ImageTensor& img, int p, int& grid_h, int& grid_w) {
  if (p <= 0 || img.h % p != 0 || img.w % p != 0)
    throw std::invalid_argument("patchify: image dims must be divisible by patch size");
  grid_h = img.h / p;
  grid_w = img.w / p;
  Mat<S> out(grid_h * grid_w, 3 * p * p);
  for (int gy = 0; gy < grid_h; ++gy)
    for (int gx = 0; gx < grid_w; ++gx) {
      Eigen::Index row = gy * grid_w + gx;
      Eigen::Index col = 0;
      for (int y = 0; y < p; ++y)
        for (int x = 0; x < p; ++x)
          for (int c = 0; c < 3; ++c)
            out(row, col++) = static_cast<S>(img.at(gy * p + y, gx * p + x, c));
    }
  return out;
}

// ---------------------------------------------------------------------------
// Corner-aligned bilinear interpolation over a spatial grid of embeddings
// ---------------------------------------------------------------------------

struct BilinearWeights {
  int src_h = 0, src_w = 0, out_h = 0, out_w = 0;
  // Per output cell: 4 source row indices and weights (y0x0, y0x1, y1x0, y1x1).
  std::vector<std::array<int, 4>> idx;
  std::vector<std::array<double, 4>> w;
};

inline BilinearWeights bilinear_weights(int src_h, int src_w, int out_h, int out_w) {
  if (src_h < 1 || src_w < 1 || out_h < 1 || out_w < 1)
    throw std::invalid_argument("bilinear_weights: grids must be at least 1x1");
  BilinearWeights bw;
  bw.src_h = src_h;
  bw.src_w = src_w;
  bw.out_h = out_h;
  bw.out_w = out_w;
  bw.idx.resize(static_cast<size_t>(out_h) * out_w);
  bw.w.resize(bw.idx.size());
  for (int oy = 0; oy < out_h; ++oy) {
    double fy = out_h > 1 ? static_cast<double>(oy) * (src_h - 1) / (out_h - 1) : 0.0;
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, src_h - 1);
    double wy = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      double fx = out_w > 1 ? static_cast<double>(ox) * (src_w - 1) / (out_w - 1) : 0.0;
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, src_w - 1);
      double wx = fx - x0;
      size_t o = static_cast<size_t>(oy) * out_w + ox;
      bw.idx[o] = {y0 * src_w + x0, y0 * src_w + x1, y1 * src_w + x0, y1 * src_w + x1};
      bw.w[o] = {(1 - wy) * (1 - wx), (1 - wy) * wx, wy * (1 - wx), wy * wx};
    }
  }
  return bw;
}

// src: (src_h*src_w) x d, returns (out_h*out_w) x d. Identity mapping is
// bit-exact because the weights degenerate to {1,0,0,0}.
template <class S>
Mat<S> apply_bilinear(const BilinearWeights& bw, const Mat<S>& src) {
  Mat<S> out(static_cast<Eigen::Index>(bw.idx.size()), src.cols());
  for (size_t o = 0; o < bw.idx.size(); ++o)
    out.row(static_cast<Eigen::Index>(o)) = src.row(bw.idx[o][0]) * S(bw.w[o][0]) +
                                            src.row(bw.idx[o][1]) * S(bw.w[o][1]) +
                                            src.row(bw.idx[o][2]) * S(bw.w[o][2]) +
                                            src.row(bw.idx[o][3]) * S(bw.w[o][3]);
  return out;
}

template <class S>
void scatter_bilinear(const BilinearWeights& bw, const Mat<S>& dout, Mat<S>& dsrc) {
  for (size_t o = 0; o < bw.idx.size(); ++o)
    for (int k = 0; k < 4; ++k)
      dsrc.row(bw.idx[o][k]) += dout.row(static_cast<Eigen::Index>(o)) * S(bw.w[o][k]);
}

// Standalone spatial-grid interpolation (class-token embeddings are separate
// parameters and are never interpolated).
template <class S>
Mat<S> interpolate_pos_embed(const Mat<S>& grid, int src_h, int src_w, int out_h, int out_w) {
  if (grid.rows() != static_cast<Eigen::Index>(src_h) * src_w)
    throw std::invalid_argument("interpolate_pos_embed: grid shape mismatch");
  return apply_bilinear<S>(bilinear_weights(src_h, src_w, out_h, out_w), grid);
}

// ---------------------------------------------------------------------------
// Cropped Position Embedding
// ---------------------------------------------------------------------------

struct CpeCache {
  int win_y = 0, win_x = 0, win_side = 0;
  BilinearWeights bw;
};

// Train mode: the window side equals the input grid (translation-only crop
// at a uniform offset), then the window is interpolated to the input grid —
// an exact gather for square inputs. Per-sample window rescaling was tried
// and rejected: it randomizes every cell's positional code, and the
// query-bottleneck decoder never learns a stable reading order from it.
// Eval mode: deterministic full-grid interpolation.
template <class S>
Mat<S> crop_pos_embed(const Mat<S>& pos_grid, int max_grid, int grid_h, int grid_w, Rng& rng,
                      bool train, CpeCache& cache) {
  if (grid_h < 1 || grid_w < 1 || grid_h > max_grid || grid_w > max_grid)
    throw std::invalid_argument("crop_pos_embed: input grid exceeds the maximum grid");
  if (train) {
    cache.win_side = std::max(grid_h, grid_w);
    cache.win_y = rng_int(rng, 0, max_grid - cache.win_side);
    cache.win_x = rng_int(rng, 0, max_grid - cache.win_side);
  } else {
    cache.win_side = max_grid;
    cache.win_y = 0;
    cache.win_x = 0;
  }
  Mat<S> window(cache.win_side * cache.win_side, pos_grid.cols());
  for (int y = 0; y < cache.win_side; ++y)
    for (int x = 0; x < cache.win_side; ++x)
      window.row(y * cache.win_side + x) =
          pos_grid.row((cache.win_y + y) * max_grid + (cache.win_x + x));
  cache.bw = bilinear_weights(cache.win_side, cache.win_side, grid_h, grid_w);
  return apply_bilinear<S>(cache.bw, window);
}

template <class S>
void crop_pos_embed_bwd(const CpeCache& cache, int max_grid, const Mat<S>& dpos, Mat<S>& dgrid) {
  Mat<S> dwindow = Mat<S>::Zero(cache.win_side * cache.win_side, dgrid.cols());
  scatter_bilinear(cache.bw, dpos, dwindow);
  for (int y = 0; y < cache.win_side; ++y)
    for (int x = 0; x < cache.win_side; ++x)
      dgrid.row((cache.win_y + y) * max_grid + (cache.win_x + x)) +=
          dwindow.row(y * cache.win_side + x);
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------

template <class S>
struct Encoder {
  EncoderConfig cfg;
  Linear<S> patch_proj;       // 3p^2 -> d
  Param<S> pos_spatial;       // (G*G) x d
  Param<S> pos_cls;           // n_cls x d, learned, never interpolated
  Param<S> cls_tokens;        // n_cls x d
  std::vector<TransformerBlock<S>> blocks;
  LayerNorm<S> ln_f;

  void setup(const EncoderConfig& config) {
    cfg = config;
    patch_proj.setup(3 * cfg.patch * cfg.patch, cfg.dim);
    pos_spatial.v = Mat<S>::Zero(cfg.max_grid * cfg.max_grid, cfg.dim);
    pos_cls.v = Mat<S>::Zero(cfg.n_cls, cfg.dim);
    cls_tokens.v = Mat<S>::Zero(cfg.n_cls, cfg.dim);
    blocks.resize(cfg.layers);
    for (auto& b : blocks) b.setup(cfg.dim, cfg.heads, cfg.dim * cfg.mlp_ratio, false);
    ln_f.setup(cfg.dim);
  }

  void register_params(ParamStore<S>& ps, const std::string& prefix) {
    patch_proj.register_params(ps, prefix + ".patch");
    ps.add(pos_spatial, prefix + ".pos_spatial");
    ps.add(pos_cls, prefix + ".pos_cls");
    ps.add(cls_tokens, prefix + ".cls");
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].register_params(ps, prefix + ".block" + std::to_string(i));
    ln_f.register_params(ps, prefix + ".ln_f");
  }

  void init(Rng& rng) {
    patch_proj.init(rng);
    init_normal(pos_spatial.v, rng, kInitStd);
    init_normal(pos_cls.v, rng, kInitStd);
    init_normal(cls_tokens.v, rng, kInitStd);
    for (auto& b : blocks) b.init(rng);
  }

  struct Cache {
    Mat<S> patches;
    CpeCache cpe;
    std::vector<typename TransformerBlock<S>::Cache> blockc;
    typename LayerNorm<S>::Cache lnfc;
    int grid_h = 0, grid_w = 0;
  };

  VisualTokens<S> fwd(const ImageTensor& img, bool train, Rng& rng, Cache& c) const {
    if (img.h > cfg.max_side() || img.w > cfg.max_side())
      throw std::invalid_argument("encoder: input exceeds the maximum size");
    c.patches = patchify<S>(img, cfg.patch, c.grid_h, c.grid_w);
    const int ns = c.grid_h * c.grid_w;
    const int n = ns + cfg.n_cls;

    Mat<S> x(n, cfg.dim);
    x.topRows(cfg.n_cls) = cls_tokens.v + pos_cls.v;
    x.bottomRows(ns) = patch_proj.fwd(c.patches);
    if (cfg.use_pos_embed)
      x.bottomRows(ns) +=
          crop_pos_embed<S>(pos_spatial.v, cfg.max_grid, c.grid_h, c.grid_w, rng, train, c.cpe);

    c.blockc.resize(blocks.size());
    for (size_t i = 0; i < blocks.size(); ++i) x = blocks[i].fwd(x, c.blockc[i]);

    VisualTokens<S> out;
    out.x = ln_f.fwd(x, c.lnfc);
    out.n_spatial = ns;
    out.n_cls = cfg.n_cls;
    out.grid_h = c.grid_h;
    out.grid_w = c.grid_w;
    return out;
  }

  void bwd(const Cache& c, const Mat<S>& dx_out, Grads<S>& gs) const {
    Mat<S> dx = ln_f.bwd(c.lnfc, dx_out, gs);
    for (size_t i = blocks.size(); i-- > 0;) dx = blocks[i].bwd(c.blockc[i], dx, gs);

    const int ns = c.grid_h * c.grid_w;
    gs.at(cls_tokens) += dx.topRows(cfg.n_cls);
    gs.at(pos_cls) += dx.topRows(cfg.n_cls);
    if (cfg.use_pos_embed)
      crop_pos_embed_bwd<S>(c.cpe, cfg.max_grid, dx.bottomRows(ns), gs.at(pos_spatial));
    patch_proj.bwd(c.patches, dx.bottomRows(ns), gs);
  }
};

}  // namespace uvt
