#pragma once

// Input embedding layer (two-layer Q-Former), autoregressive language
// decoder, and the token-wise vision decoder.

#include <algorithm>
#include <set>
#include <stdexcept>
#include <vector>

#include "uvt/common.hpp"
#include "uvt/nn.hpp"
#include "uvt/tokenizer.hpp"

namespace uvt {

// ---------------------------------------------------------------------------
// Q-Former
// ---------------------------------------------------------------------------

struct QFormerConfig {
  int n_queries = 16;
  int layers = 2;  // fixed by contract
  int hidden = 64;
  int heads = 4;
  int kv_dim = 64;   // encoder output dim
  int out_dim = 128; // language decoder dim
  int mlp_ratio = 4;

  bool operator==(const QFormerConfig&) const = default;
};

template <class S>
struct QFormerBlock {
  LayerNorm<S> ln_self, ln_cross, ln_mlp;
  SelfAttention<S> self_attn;
  CrossAttention<S> cross_attn;
  Mlp<S> mlp;

  void setup(int d, int d_kv, int heads, int mlp_hidden) {
    ln_self.setup(d);
    ln_cross.setup(d);
    ln_mlp.setup(d);
    self_attn.setup(d, heads, false);
    cross_attn.setup(d, d_kv, heads);
    mlp.setup(d, mlp_hidden);
  }
  void register_params(ParamStore<S>& ps, const std::string& prefix) {
    ln_self.register_params(ps, prefix + ".ln_self");
    self_attn.register_params(ps, prefix + ".self");
    ln_cross.register_params(ps, prefix + ".ln_cross");
    cross_attn.register_params(ps, prefix + ".cross");
    ln_mlp.register_params(ps, prefix + ".ln_mlp");
    mlp.register_params(ps, prefix + ".mlp");
  }
  void init(Rng& rng, double cross_qk_std = kInitStd) {
    self_attn.init(rng);
    cross_attn.init(rng, cross_qk_std);
    mlp.init(rng);
  }

  struct Cache {
    typename LayerNorm<S>::Cache lnsc, lncc, lnmc;
    typename SelfAttention<S>::Cache selfc;
    typename CrossAttention<S>::Cache crossc;
    typename Mlp<S>::Cache mlpc;
  };

  Mat<S> fwd(const Mat<S>& q, const Mat<S>& kv, Cache& c) const {
    Mat<S> q1 = q + self_attn.fwd(ln_self.fwd(q, c.lnsc), c.selfc);
    Mat<S> q2 = q1 + cross_attn.fwd(ln_cross.fwd(q1, c.lncc), kv, c.crossc);
    return q2 + mlp.fwd(ln_mlp.fwd(q2, c.lnmc), c.mlpc);
  }

  Mat<S> bwd(const Cache& c, const Mat<S>& dy, Grads<S>& gs, Mat<S>& dkv) const {
    Mat<S> dq2 = dy + ln_mlp.bwd(c.lnmc, mlp.bwd(c.mlpc, dy, gs), gs);
    Mat<S> dq1 = dq2 + ln_cross.bwd(c.lncc, cross_attn.bwd(c.crossc, dq2, gs, dkv), gs);
    return dq1 + ln_self.bwd(c.lnsc, self_attn.bwd(c.selfc, dq1, gs), gs);
  }
};

// K learnable query tokens cross-attend to all visual tokens; output is
// always K rows regardless of the visual token count.
template <class S>
struct QFormer {
  QFormerConfig cfg;
  Param<S> queries;  // K x hidden
  std::vector<QFormerBlock<S>> blocks;
  LayerNorm<S> ln_f;
  Linear<S> out_proj;  // hidden -> out_dim

  void setup(const QFormerConfig& config) {
    if (config.layers != 2) throw std::invalid_argument("qformer: layers must be 2");
    if (config.n_queries < 1) throw std::invalid_argument("qformer: need at least one query");
    cfg = config;
    queries.v = Mat<S>::Zero(cfg.n_queries, cfg.hidden);
    blocks.resize(cfg.layers);
    for (auto& b : blocks) b.setup(cfg.hidden, cfg.kv_dim, cfg.heads, cfg.hidden * cfg.mlp_ratio);
    ln_f.setup(cfg.hidden);
    out_proj.setup(cfg.hidden, cfg.out_dim);
  }
  void register_params(ParamStore<S>& ps, const std::string& prefix) {
    ps.add(queries, prefix + ".queries");
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].register_params(ps, prefix + ".block" + std::to_string(i));
    ln_f.register_params(ps, prefix + ".ln_f");
    out_proj.register_params(ps, prefix + ".proj");
  }
  // Cross-attention q/k weights start 4x wider than the other layers: with K
  // queries against hundreds of visual tokens, a near-uniform initial softmax
  // forwards only the mean token and the routing path learns too slowly.
  void init(Rng& rng, double cross_qk_std = 4 * kInitStd) {
    init_normal(queries.v, rng, kInitStd);
    for (auto& b : blocks) b.init(rng, cross_qk_std);
    out_proj.init(rng);
  }

  struct Cache {
    Mat<S> kv;
    std::vector<typename QFormerBlock<S>::Cache> blockc;
    typename LayerNorm<S>::Cache lnfc;
    Mat<S> ln_out;
  };

  Mat<S> fwd(const Mat<S>& visual_tokens, Cache& c) const {
    c.kv = visual_tokens;
    c.blockc.resize(blocks.size());
    Mat<S> q = queries.v;
    for (size_t i = 0; i < blocks.size(); ++i) q = blocks[i].fwd(q, c.kv, c.blockc[i]);
    c.ln_out = ln_f.fwd(q, c.lnfc);
    return out_proj.fwd(c.ln_out);
  }

  // Accumulates the gradient w.r.t. the visual tokens into dkv.
  void bwd(const Cache& c, const Mat<S>& dout, Grads<S>& gs, Mat<S>& dkv) const {
    Mat<S> dq = ln_f.bwd(c.lnfc, out_proj.bwd(c.ln_out, dout, gs), gs);
    for (size_t i = blocks.size(); i-- > 0;) dq = blocks[i].bwd(c.blockc[i], dq, gs, dkv);
    gs.at(queries) += dq;
  }
};

// ---------------------------------------------------------------------------
// Language decoder
// ---------------------------------------------------------------------------

struct LangDecoderConfig {
  int layers = 2;
  int heads = 4;
  int dim = 128;
  int vocab = 0;
  int t_max = 256;
  int mlp_ratio = 4;

  bool operator==(const LangDecoderConfig&) const = default;
};

// Causal transformer over [<img>, K query slots, </img>, instruction,
// annotation]. Query slots receive embedding-space inputs from the Q-Former;
// every other position uses the token embedding table.
template <class S>
struct LangDecoder {
  LangDecoderConfig cfg;
  Param<S> tok_embed;  // V x d
  Param<S> pos_embed;  // t_max x d
  std::vector<TransformerBlock<S>> blocks;
  LayerNorm<S> ln_f;
  Linear<S> head;  // d -> V

  void setup(const LangDecoderConfig& config) {
    cfg = config;
    tok_embed.v = Mat<S>::Zero(cfg.vocab, cfg.dim);
    pos_embed.v = Mat<S>::Zero(cfg.t_max, cfg.dim);
    blocks.resize(cfg.layers);
    for (auto& b : blocks) b.setup(cfg.dim, cfg.heads, cfg.dim * cfg.mlp_ratio, true);
    ln_f.setup(cfg.dim);
    head.setup(cfg.dim, cfg.vocab);
  }
  void register_params(ParamStore<S>& ps, const std::string& prefix) {
    ps.add(tok_embed, prefix + ".tok_embed");
    ps.add(pos_embed, prefix + ".pos_embed");
    for (size_t i = 0; i < blocks.size(); ++i)
      blocks[i].register_params(ps, prefix + ".block" + std::to_string(i));
    ln_f.register_params(ps, prefix + ".ln_f");
    head.register_params(ps, prefix + ".head");
  }
  void init(Rng& rng) {
    init_normal(tok_embed.v, rng, kInitStd);
    init_normal(pos_embed.v, rng, kInitStd);
    for (auto& b : blocks) b.init(rng);
    head.init(rng);
  }

  struct Cache {
    std::vector<int> input_ids;  // kVisualSlot at query positions
    Mat<S> x0;
    std::vector<typename TransformerBlock<S>::Cache> blockc;
    typename LayerNorm<S>::Cache lnfc;
    Mat<S> ln_out;
    int first_logit_pos = 0;  // hidden row producing logits for targets[0]
    int n_logits = 0;
  };

  // Input ids for the full teacher-forced sequence; the last target is
  // predicted but never fed back in.
  static std::vector<int> assemble_ids(const PromptSpec& prompt, const TokenSequence& targets) {
    std::vector<int> ids = prompt.layout();
    if (!targets.empty()) ids.insert(ids.end(), targets.begin(), targets.end() - 1);
    return ids;
  }

  Mat<S> embed_sequence(const std::vector<int>& ids, const Mat<S>& prefix) const {
    Mat<S> x(static_cast<Eigen::Index>(ids.size()), cfg.dim);
    int slot = 0;
    for (size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] == kVisualSlot)
        x.row(static_cast<Eigen::Index>(i)) = prefix.row(slot++);
      else
        x.row(static_cast<Eigen::Index>(i)) = tok_embed.v.row(ids[i]);
    }
    x += pos_embed.v.topRows(static_cast<Eigen::Index>(ids.size()));
    return x;
  }

  // Teacher-forced logits: row t predicts targets[t]. The caller includes the
  // terminal EOS in targets.
  Mat<S> decode_logits(const Mat<S>& prefix, const PromptSpec& prompt,
                       const TokenSequence& targets, Cache& c) const {
    if (prompt.n_visual != static_cast<int>(prefix.rows()))
      throw std::invalid_argument("decode_logits: prefix rows != prompt visual slots");
    const int total = prompt.length() + static_cast<int>(targets.size());
    if (total > cfg.t_max)
      throw std::invalid_argument("decode_logits: sequence length " + std::to_string(total) +
                                  " exceeds t_max " + std::to_string(cfg.t_max));
    c.n_logits = static_cast<int>(targets.size());
    if (targets.empty()) return Mat<S>(0, cfg.vocab);

    c.input_ids = assemble_ids(prompt, targets);
    c.x0 = embed_sequence(c.input_ids, prefix);
    Mat<S> x = c.x0;
    c.blockc.resize(blocks.size());
    for (size_t i = 0; i < blocks.size(); ++i) x = blocks[i].fwd(x, c.blockc[i]);

    c.first_logit_pos = prompt.length() - 1;
    Mat<S> rows = x.middleRows(c.first_logit_pos, c.n_logits);
    c.ln_out = ln_f.fwd(rows, c.lnfc);
    return head.fwd(c.ln_out);
  }

  // Returns the gradient w.r.t. the query prefix.
  Mat<S> bwd(const Cache& c, const Mat<S>& dlogits, Grads<S>& gs) const {
    Mat<S> drows = ln_f.bwd(c.lnfc, head.bwd(c.ln_out, dlogits, gs), gs);
    Mat<S> dx = Mat<S>::Zero(static_cast<Eigen::Index>(c.input_ids.size()), cfg.dim);
    dx.middleRows(c.first_logit_pos, c.n_logits) = drows;
    for (size_t i = blocks.size(); i-- > 0;) dx = blocks[i].bwd(c.blockc[i], dx, gs);

    gs.at(pos_embed).topRows(dx.rows()) += dx;
    Mat<S> dprefix(0, cfg.dim);
    int n_slots = 0;
    for (int id : c.input_ids)
      if (id == kVisualSlot) ++n_slots;
    dprefix = Mat<S>::Zero(n_slots, cfg.dim);
    int slot = 0;
    for (size_t i = 0; i < c.input_ids.size(); ++i) {
      if (c.input_ids[i] == kVisualSlot)
        dprefix.row(slot++) = dx.row(static_cast<Eigen::Index>(i));
      else
        gs.at(tok_embed).row(c.input_ids[i]) += dx.row(static_cast<Eigen::Index>(i));
    }
    return dprefix;
  }

  // Greedy decoding after the prompt; stops at EOS, max_len tokens, or the
  // context limit. Deterministic; ties resolve to the smallest token id.
  TokenSequence generate(const Mat<S>& prefix, const PromptSpec& prompt, int max_len) const {
    if (max_len < 1) throw std::invalid_argument("generate: max_len must be >= 1");
    std::vector<int> ids = prompt.layout();
    TokenSequence out;
    while (static_cast<int>(out.size()) < max_len &&
           static_cast<int>(ids.size()) < cfg.t_max) {
      Mat<S> x = embed_sequence(ids, prefix);
      std::vector<typename TransformerBlock<S>::Cache> bc(blocks.size());
      for (size_t i = 0; i < blocks.size(); ++i) x = blocks[i].fwd(x, bc[i]);
      typename LayerNorm<S>::Cache lc;
      Mat<S> h = ln_f.fwd(x.bottomRows(1), lc);
      Mat<S> logits = head.fwd(h);
      int best = 0;
      for (int v = 1; v < cfg.vocab; ++v)
        if (logits(0, v) > logits(0, best)) best = v;
      if (best == kEos) break;
      out.push_back(best);
      ids.push_back(best);
    }
    return out;
  }
};

// ---------------------------------------------------------------------------
// Vision decoder
// ---------------------------------------------------------------------------

struct VisionDecoderConfig {
  int dim = 64;     // encoder token dim (input and output)
  int hidden = 128;

  bool operator==(const VisionDecoderConfig&) const = default;
};

// Two affine maps with a GeLU in between; processes each token independently.
template <class S>
struct VisionDecoder {
  VisionDecoderConfig cfg;
  Linear<S> fc1, fc2;

  void setup(const VisionDecoderConfig& config) {
    cfg = config;
    fc1.setup(cfg.dim, cfg.hidden);
    fc2.setup(cfg.hidden, cfg.dim);
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

  Mat<S> fwd(const Mat<S>& rows, Cache& c) const {
    c.x = rows;
    c.pre = fc1.fwd(rows);
    c.post = c.pre.unaryExpr([](S v) { return gelu(v); });
    return fc2.fwd(c.post);
  }

  Mat<S> bwd(const Cache& c, const Mat<S>& dy, Grads<S>& gs) const {
    Mat<S> dpost = fc2.bwd(c.post, dy, gs);
    Mat<S> dpre = dpost.cwiseProduct(c.pre.unaryExpr([](S v) { return gelu_grad(v); }));
    return fc1.bwd(c.x, dpre, gs);
  }
};

// Gathers X rows at the given indices and decodes them. Indices must be
// distinct and in range.
template <class S>
Mat<S> reconstruct(const Mat<S>& x, const std::vector<int>& indices,
                   const VisionDecoder<S>& dec, typename VisionDecoder<S>::Cache& c) {
  std::set<int> seen;
  for (int i : indices) {
    if (i < 0 || i >= x.rows()) throw std::out_of_range("reconstruct: index out of range");
    if (!seen.insert(i).second) throw std::invalid_argument("reconstruct: duplicate index");
  }
  Mat<S> rows(static_cast<Eigen::Index>(indices.size()), x.cols());
  for (size_t j = 0; j < indices.size(); ++j) rows.row(static_cast<Eigen::Index>(j)) = x.row(indices[j]);
  if (indices.empty()) return Mat<S>(0, x.cols());
  return dec.fwd(rows, c);
}

}  // namespace uvt
