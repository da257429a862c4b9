#pragma once

// Full model aggregate (encoder + Q-Former + language decoder + vision
// decoder) and the per-sample training pipeline shared by the optimizer loop
// and the gradient checks.

#include <stdexcept>
#include <string>
#include <vector>

#include "uvt/common.hpp"
#include "uvt/decoders.hpp"
#include "uvt/encoder.hpp"
#include "uvt/image.hpp"
#include "uvt/losses.hpp"
#include "uvt/nn.hpp"
#include "uvt/tokenizer.hpp"

namespace uvt {

struct ModelConfig {
  EncoderConfig enc;
  QFormerConfig qf;
  LangDecoderConfig dec;
  VisionDecoderConfig vis;

  void validate() const {
    if (qf.kv_dim != enc.dim) throw std::invalid_argument("config: qformer kv_dim != encoder dim");
    if (qf.out_dim != dec.dim) throw std::invalid_argument("config: qformer out_dim != decoder dim");
    if (vis.dim != enc.dim) throw std::invalid_argument("config: vision decoder dim != encoder dim");
    if (dec.vocab < kNumSpecials) throw std::invalid_argument("config: vocab too small");
  }
  bool operator==(const ModelConfig&) const = default;
};

// The parameter store holds pointers into the module members, so copies and
// moves re-run registration and copy values instead of copying the store.
template <class S>
struct Model {
  ModelConfig cfg;
  Encoder<S> encoder;
  QFormer<S> qformer;
  LangDecoder<S> decoder;
  VisionDecoder<S> visdec;
  ParamStore<S> params;
  bool ready = false;

  Model() = default;
  Model(const Model& other) { assign_from(other); }
  Model(Model&& other) { assign_from(other); }
  Model& operator=(const Model& other) {
    if (this != &other) assign_from(other);
    return *this;
  }
  Model& operator=(Model&& other) {
    if (this != &other) assign_from(other);
    return *this;
  }

  void setup(const ModelConfig& config) {
    config.validate();
    cfg = config;
    encoder.setup(cfg.enc);
    qformer.setup(cfg.qf);
    decoder.setup(cfg.dec);
    visdec.setup(cfg.vis);
    params = ParamStore<S>();
    encoder.register_params(params, "enc");
    qformer.register_params(params, "qf");
    decoder.register_params(params, "dec");
    visdec.register_params(params, "vis");
    ready = true;
  }

  void init(uint64_t seed) {
    Rng rng = make_rng(seed);
    encoder.init(rng);
    qformer.init(rng);
    decoder.init(rng);
    visdec.init(rng);
  }

 private:
  void assign_from(const Model& other) {
    if (!other.ready) {
      ready = false;
      return;
    }
    setup(other.cfg);
    for (size_t i = 0; i < params.params.size(); ++i)
      params.params[i]->v = other.params.params[i]->v;
  }
};

// Content hash over all parameters in registration order.
template <class S>
uint64_t param_hash(const ParamStore<S>& store) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (const auto* p : store.params)
    h = fnv1a64(p->v.data(), sizeof(S) * static_cast<size_t>(p->v.size()), h);
  return h;
}

// ---------------------------------------------------------------------------
// Per-sample training pipeline
// ---------------------------------------------------------------------------

struct TrainSample {
  const ImageU8* image = nullptr;
  TaskKind task = TaskKind::kCaption;
  TokenSequence target_ids;  // annotation tokens with terminal EOS
  bool vis_flag = false;
  int scale = 1;             // 1 or 4
  uint64_t seed = 0;         // per-sample stream for CPE crop / subset draw
};

struct SamplePipelineOpts {
  double mu = 0.2;
  double subset_fraction = 0.5;  // spatial-token fraction for x1 images
  int n_lowres_spatial = 16;     // token budget rule for x4 images
  bool train_mode = true;
};

// Runs one sample through encoder -> Q-Former -> language decoder (plus the
// reconstruction branch when vis_flag is set). When gs is non-null, gradients
// scaled by lan_weight / vis_weight are accumulated into it. Returns raw
// (unweighted) loss values. The prompt carries the instruction token ids;
// callers build it once per task and reuse it.
template <class S>
SampleLoss sample_forward_backward(const Model<S>& model, const Encoder<S>* teacher,
                                   const TrainSample& sample, const PromptSpec& prompt,
                                   const SamplePipelineOpts& opts, double lan_weight,
                                   double vis_weight, Grads<S>* gs) {
  ImageTensor img = to_float(*sample.image);
  Rng rng_cpe = make_rng(seed_combine(sample.seed, 0xC0DE));
  Rng rng_subset = make_rng(seed_combine(sample.seed, 0x5E7));

  typename Encoder<S>::Cache enc_cache;
  VisualTokens<S> tokens = model.encoder.fwd(img, opts.train_mode, rng_cpe, enc_cache);

  typename QFormer<S>::Cache qf_cache;
  Mat<S> prefix = model.qformer.fwd(tokens.x, qf_cache);

  SampleLoss out;
  typename LangDecoder<S>::Cache dec_cache;
  Mat<S> logits = model.decoder.decode_logits(prefix, prompt, sample.target_ids, dec_cache);
  std::vector<bool> mask(sample.target_ids.size(), true);
  Mat<S> dlogits;
  out.l_lan = language_loss<S>(logits, sample.target_ids, mask, gs ? &dlogits : nullptr);

  // Reconstruction branch: class tokens always included, spatial tokens
  // subsampled (fraction rule at x1, low-res-count rule at x4).
  std::vector<int> c_indices;
  Mat<S> student, teacher_rows, dstudent;
  typename VisionDecoder<S>::Cache vis_cache;
  typename Encoder<S>::Cache teacher_cache;
  if (sample.vis_flag) {
    if (!teacher) throw std::invalid_argument("vis-flagged sample without a teacher");
    Rng rng_unused = make_rng(0);
    VisualTokens<S> target_tokens = teacher->fwd(img, false, rng_unused, teacher_cache);
    if (target_tokens.total() != tokens.total())
      throw std::logic_error("teacher/student token count mismatch");

    for (int i = 0; i < tokens.n_cls; ++i) c_indices.push_back(i);
    std::vector<int> spatial =
        sample.scale == 1
            ? sample_subset_C(tokens.n_spatial, opts.subset_fraction, rng_subset)
            : sample_highres_tokens(tokens.n_spatial, opts.n_lowres_spatial, rng_subset);
    for (int i : spatial) c_indices.push_back(tokens.n_cls + i);

    student = reconstruct(tokens.x, c_indices, model.visdec, vis_cache);
    teacher_rows.resize(static_cast<Eigen::Index>(c_indices.size()), target_tokens.x.cols());
    for (size_t j = 0; j < c_indices.size(); ++j)
      teacher_rows.row(static_cast<Eigen::Index>(j)) = target_tokens.x.row(c_indices[j]);
    out.l_vis = vision_loss<S>(student, teacher_rows, opts.mu, gs ? &dstudent : nullptr);
    out.has_vis = true;
  }

  if (gs) {
    dlogits *= S(lan_weight);
    Mat<S> dprefix = model.decoder.bwd(dec_cache, dlogits, *gs);
    Mat<S> dtokens = Mat<S>::Zero(tokens.x.rows(), tokens.x.cols());
    model.qformer.bwd(qf_cache, dprefix, *gs, dtokens);
    if (out.has_vis) {
      dstudent *= S(vis_weight);
      Mat<S> drows = model.visdec.bwd(vis_cache, dstudent, *gs);
      for (size_t j = 0; j < c_indices.size(); ++j)
        dtokens.row(c_indices[j]) += drows.row(static_cast<Eigen::Index>(j));
    }
    model.encoder.bwd(enc_cache, dtokens, *gs);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inference helpers
// ---------------------------------------------------------------------------

template <class S>
VisualTokens<S> encode_eval(const Model<S>& model, const ImageU8& image) {
  ImageTensor img = to_float(image);
  Rng rng = make_rng(0);
  typename Encoder<S>::Cache cache;
  return model.encoder.fwd(img, false, rng, cache);
}

// Greedy generation for one image; deterministic.
template <class S>
std::string generate_text(const Model<S>& model, const ImageU8& image, TaskKind task,
                          const Vocabulary& vocab, int max_len) {
  VisualTokens<S> tokens = encode_eval(model, image);
  typename QFormer<S>::Cache qf_cache;
  Mat<S> prefix = model.qformer.fwd(tokens.x, qf_cache);
  PromptSpec prompt = build_prompt(task, model.cfg.qf.n_queries, vocab);
  TokenSequence ids = model.decoder.generate(prefix, prompt, max_len);
  return decode(ids, vocab);
}

}  // namespace uvt
