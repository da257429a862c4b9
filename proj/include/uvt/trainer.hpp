#pragma once

// Optimizer, learning-rate schedule, teacher management, and the two-stage
// training loop.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <unordered_map>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "uvt/datagen.hpp"
#include "uvt/model.hpp"

namespace uvt {

// ---------------------------------------------------------------------------
// Hyperparameters
// ---------------------------------------------------------------------------

struct Hyperparams {
  double lr = 5e-5;
  double weight_decay = 0.01;
  double warmup_ratio = 0.03;
  int batch_size = 16;
  int total_steps = 3000;
  double lambda = 2.0;
  double mu = 0.2;
  uint64_t seed = 1;
  double clip_norm = 1.0;
  double subset_fraction = 0.5;

  void validate() const {
    if (lr <= 0 || weight_decay < 0 || warmup_ratio <= 0 || warmup_ratio >= 1 ||
        batch_size < 1 || total_steps < 1 || lambda < 0 || mu < 0 || clip_norm <= 0 ||
        subset_fraction <= 0 || subset_fraction > 1)
      throw std::invalid_argument("hyperparams: values out of range");
  }
};

// Linear warmup to hp.lr over ceil(warmup_ratio * total_steps) steps, then
// cosine decay to zero at total_steps. lr(0) == 0 exactly.
inline double lr_at_step(int step, const Hyperparams& hp) {
  const int warmup = std::max(1, static_cast<int>(std::ceil(hp.warmup_ratio * hp.total_steps)));
  if (step <= warmup) return hp.lr * (static_cast<double>(step) / warmup);
  double progress = static_cast<double>(step - warmup) / (hp.total_steps - warmup);
  return hp.lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

// ---------------------------------------------------------------------------
// AdamW (decoupled weight decay)
// ---------------------------------------------------------------------------

template <class S>
struct AdamW {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::vector<Mat<S>> m, v;
  int64_t t = 0;

  void init_like(const ParamStore<S>& store) {
    m.resize(store.params.size());
    v.resize(store.params.size());
    for (size_t i = 0; i < m.size(); ++i) {
      m[i] = Mat<S>::Zero(store.params[i]->v.rows(), store.params[i]->v.cols());
      v[i] = Mat<S>::Zero(store.params[i]->v.rows(), store.params[i]->v.cols());
    }
  }

  void step(ParamStore<S>& store, const Grads<S>& gs, double lr, double weight_decay) {
    t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t i = 0; i < store.params.size(); ++i) {
      Mat<S>& p = store.params[i]->v;
      const Mat<S>& g = gs.g[i];
      m[i] = S(beta1) * m[i] + S(1 - beta1) * g;
      v[i] = S(beta2) * v[i] + S(1 - beta2) * g.cwiseProduct(g);
      p *= S(1.0 - lr * weight_decay);
      p -= (S(lr) * (m[i] / S(bc1)).array() /
            ((v[i] / S(bc2)).array().sqrt() + S(eps)))
               .matrix();
    }
  }
};

// ---------------------------------------------------------------------------
// Corpus data cache
// ---------------------------------------------------------------------------

struct CorpusData {
  std::vector<ImageU8> images;          // by record index
  std::vector<TokenSequence> targets;   // annotation tokens + EOS
};

inline CorpusData load_corpus_data(const CorpusManifest& manifest, const std::string& corpus_dir,
                                   const Vocabulary& vocab) {
  CorpusData data;
  data.images.reserve(manifest.records.size());
  data.targets.reserve(manifest.records.size());
  for (const auto& rec : manifest.records) {
    data.images.push_back(read_ppm((std::filesystem::path(corpus_dir) / rec.image_path).string()));
    TokenSequence ids = encode(rec.text, vocab);
    ids.push_back(kEos);
    data.targets.push_back(std::move(ids));
  }
  return data;
}

// ---------------------------------------------------------------------------
// Teacher
// ---------------------------------------------------------------------------

// Same pointer-registration caveat as Model: copies and moves re-register.
template <class S>
struct TeacherModel {
  Encoder<S> encoder;
  ParamStore<S> params;
  uint64_t hash = 0;
  bool ready = false;

  TeacherModel() = default;
  TeacherModel(const TeacherModel& other) { assign_from(other); }
  TeacherModel(TeacherModel&& other) { assign_from(other); }
  TeacherModel& operator=(const TeacherModel& other) {
    if (this != &other) assign_from(other);
    return *this;
  }
  TeacherModel& operator=(TeacherModel&& other) {
    if (this != &other) assign_from(other);
    return *this;
  }

  void setup(const EncoderConfig& cfg) {
    encoder.setup(cfg);
    params = ParamStore<S>();
    encoder.register_params(params, "teacher");
    ready = true;
  }
  void freeze() { hash = param_hash(params); }
  uint64_t current_hash() const { return param_hash(params); }

  // Deterministic targets: eval-mode CPE (full-grid interpolation) for every
  // scale, then a standard forward.
  VisualTokens<S> targets(const ImageU8& image) const {
    ImageTensor img = to_float(image);
    Rng rng = make_rng(0);
    typename Encoder<S>::Cache cache;
    return encoder.fwd(img, false, rng, cache);
  }

 private:
  void assign_from(const TeacherModel& other) {
    if (!other.ready) {
      ready = false;
      return;
    }
    setup(other.encoder.cfg);
    for (size_t i = 0; i < params.params.size(); ++i)
      params.params[i]->v = other.params.params[i]->v;
    hash = other.hash;
  }
};

namespace detail {

// Stable binary cross-entropy with logits; fills dz with d(loss)/dz.
template <class S>
double bce_with_logits(const Mat<S>& z, const std::vector<char>& y, Mat<S>& dz) {
  double loss = 0;
  dz.resize(1, z.cols());
  for (Eigen::Index i = 0; i < z.cols(); ++i) {
    double zi = z(0, i);
    double yi = y[static_cast<size_t>(i)] ? 1.0 : 0.0;
    loss += std::max(zi, 0.0) - zi * yi + std::log1p(std::exp(-std::abs(zi)));
    double sig = 1.0 / (1.0 + std::exp(-zi));
    dz(0, i) = static_cast<S>((sig - yi) / z.cols());
  }
  return loss / z.cols();
}

inline std::vector<std::string> caption_words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (c == ' ' || c == '.' || c == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

}  // namespace detail

struct TeacherTrainConfig {
  int steps = 400;
  int batch_size = 16;
  double lr = 1e-3;
  double weight_decay = 0.01;
};

// Desk-scale substitute for an external pretrained encoder: trains a fresh
// encoder with a bag-of-words caption head on the x1 image sub-corpus so the
// teacher features are non-degenerate, then freezes it. The head is
// discarded.
template <class S>
TeacherModel<S> pretrain_teacher(const CorpusManifest& manifest, const CorpusData& data,
                                 const EncoderConfig& enc_cfg, const TeacherTrainConfig& tc,
                                 uint64_t seed) {
  std::vector<int> pool;
  for (int i = 0; i < static_cast<int>(manifest.records.size()); ++i) {
    const auto& r = manifest.records[i];
    if (r.split == Split::kTrain && r.task == TaskKind::kCaption && r.scale == 1) pool.push_back(i);
  }
  if (pool.empty()) throw std::invalid_argument("pretrain_teacher: no x1 caption samples");

  // Word vocabulary over the caption pool; near-ubiquitous words carry no
  // discriminative signal and are dropped.
  std::map<std::string, int> word_counts;
  for (int i : pool)
    for (const auto& w : detail::caption_words(manifest.records[i].text)) word_counts[w] += 1;
  std::vector<std::string> words;
  for (const auto& [w, n] : word_counts)
    if (n <= static_cast<int>(0.8 * pool.size())) words.push_back(w);
  if (words.empty())
    for (const auto& [w, n] : word_counts) words.push_back(w);
  std::unordered_map<std::string, int> word_id;
  for (size_t i = 0; i < words.size(); ++i) word_id[words[i]] = static_cast<int>(i);

  TeacherModel<S> teacher;
  teacher.setup(enc_cfg);
  Linear<S> head;
  head.setup(enc_cfg.dim, static_cast<int>(words.size()));

  ParamStore<S> train_params;
  teacher.encoder.register_params(train_params, "enc");
  head.register_params(train_params, "head");
  {
    Rng rng = make_rng(seed_combine(seed, 0x7EAC));
    teacher.encoder.init(rng);
    head.init(rng);
  }

  AdamW<S> opt;
  opt.init_like(train_params);
  std::vector<Grads<S>> sinks(tc.batch_size);
  for (auto& s : sinks) s.init_like(train_params);
  Grads<S> total;
  total.init_like(train_params);

  for (int step = 0; step < tc.steps; ++step) {
    Rng batch_rng = make_rng(seed_combine(seed, 0xBA7C000 + step));
    std::vector<int> batch(tc.batch_size);
    for (auto& b : batch) b = pool[rng_int(batch_rng, 0, static_cast<int>(pool.size()) - 1)];

    ParallelErrors errors;
#pragma omp parallel for schedule(static)
    for (int slot = 0; slot < tc.batch_size; ++slot) {
      errors.run([&, slot] {
      sinks[slot].zero();
      const auto& rec = manifest.records[batch[slot]];
      ImageTensor img = to_float(data.images[batch[slot]]);
      Rng rng_cpe = make_rng(seed_combine(seed_combine(seed, step), slot));
      typename Encoder<S>::Cache cache;
      VisualTokens<S> tokens = teacher.encoder.fwd(img, true, rng_cpe, cache);

      std::vector<char> y(words.size(), 0);
      for (const auto& w : detail::caption_words(rec.text)) {
        auto it = word_id.find(w);
        if (it != word_id.end()) y[it->second] = 1;
      }
      Mat<S> cls = tokens.x.topRows(1);
      Mat<S> z = head.fwd(cls);
      Mat<S> dz;
      detail::bce_with_logits<S>(z, y, dz);
      dz /= S(tc.batch_size);
      Mat<S> dcls = head.bwd(cls, dz, sinks[slot]);
      Mat<S> dx = Mat<S>::Zero(tokens.x.rows(), tokens.x.cols());
      dx.topRows(1) = dcls;
      teacher.encoder.bwd(cache, dx, sinks[slot]);
      });
    }
    errors.rethrow();
    total.zero();
    for (const auto& s : sinks) total.add(s);
    opt.step(train_params, total, tc.lr, tc.weight_decay);
  }

  // Re-register under the teacher's own store: the shared training store
  // rewrote parameter names and ids.
  teacher.params = ParamStore<S>();
  teacher.encoder.register_params(teacher.params, "teacher");
  teacher.freeze();
  return teacher;
}

// ---------------------------------------------------------------------------
// Stage training loop
// ---------------------------------------------------------------------------

struct StageResult {
  LossBreakdown final_losses;
  std::vector<std::string> metric_lines;  // "step\tL_lan\tL_vis\ttotal\tlr"
};

// Runs the joint optimization for one stage. Batches are uniform draws from
// the mix; the vision term is averaged over the vis-flagged samples in the
// batch. Aborts on a non-finite loss.
template <class S>
StageResult train_stage(Model<S>& model, const TeacherModel<S>& teacher, const CorpusData& data,
                        const CorpusManifest& manifest, const TrainMix& mix,
                        const Vocabulary& vocab, const Hyperparams& hp, int n_lowres_spatial) {
  hp.validate();
  if (mix.entries.empty()) throw std::invalid_argument("train_stage: empty mix");

  const PromptSpec prompt_caption = build_prompt(TaskKind::kCaption, model.cfg.qf.n_queries, vocab);
  const PromptSpec prompt_ocr = build_prompt(TaskKind::kOcr, model.cfg.qf.n_queries, vocab);

  AdamW<S> opt;
  opt.init_like(model.params);
  std::vector<Grads<S>> sinks(hp.batch_size);
  for (auto& s : sinks) s.init_like(model.params);
  Grads<S> total_grads;
  total_grads.init_like(model.params);

  const uint64_t stage_tag = mix.stage == Stage::kIntra ? 0x517A6E1ull : 0x517A6E2ull;
  StageResult result;
  result.metric_lines.reserve(hp.total_steps);
  std::vector<SampleLoss> losses(hp.batch_size);

  for (int step = 0; step < hp.total_steps; ++step) {
    Rng batch_rng = make_rng(seed_combine(seed_combine(hp.seed, stage_tag), step));
    std::vector<const MixEntry*> batch(hp.batch_size);
    int n_vis = 0;
    for (auto& e : batch) {
      e = &mix.entries[rng_int(batch_rng, 0, static_cast<int>(mix.entries.size()) - 1)];
      n_vis += e->vis_loss ? 1 : 0;
    }
    const double lan_weight = 1.0 / hp.batch_size;
    const double vis_weight = n_vis > 0 ? hp.lambda / n_vis : 0.0;

    ParallelErrors errors;
#pragma omp parallel for schedule(static)
    for (int slot = 0; slot < hp.batch_size; ++slot) {
      errors.run([&, slot] {
      sinks[slot].zero();
      const MixEntry& e = *batch[slot];
      const SampleRecord& rec = manifest.records[e.record_index];
      TrainSample sample;
      sample.image = &data.images[e.record_index];
      sample.task = rec.task;
      sample.target_ids = data.targets[e.record_index];
      sample.vis_flag = e.vis_loss;
      sample.scale = rec.scale;
      sample.seed = seed_combine(seed_combine(hp.seed, 0xBEEF0000ull + step), slot);
      SamplePipelineOpts opts;
      opts.mu = hp.mu;
      opts.subset_fraction = hp.subset_fraction;
      opts.n_lowres_spatial = n_lowres_spatial;
      opts.train_mode = true;
      losses[slot] = sample_forward_backward<S>(
          model, &teacher.encoder, sample, rec.task == TaskKind::kCaption ? prompt_caption : prompt_ocr,
          opts, lan_weight, vis_weight, &sinks[slot]);
      });
    }
    errors.rethrow();

    // Fixed-order reduction keeps gradients bit-reproducible regardless of
    // thread scheduling.
    total_grads.zero();
    for (const auto& s : sinks) total_grads.add(s);

    LossBreakdown breakdown = total_loss(losses, hp.lambda);
    if (!std::isfinite(breakdown.total))
      throw std::runtime_error("train_stage: non-finite loss at step " + std::to_string(step));

    double gnorm = std::sqrt(total_grads.sq_norm());
    if (gnorm > hp.clip_norm) total_grads.scale(S(hp.clip_norm / gnorm));

    const double lr = lr_at_step(step, hp);
    opt.step(model.params, total_grads, lr, hp.weight_decay);

    char line[160];
    std::snprintf(line, sizeof(line), "%d\t%.6f\t%.6f\t%.6f\t%.8g", step, breakdown.l_lan,
                  breakdown.l_vis, breakdown.total, lr);
    result.metric_lines.emplace_back(line);
    result.final_losses = breakdown;
  }
  return result;
}

inline void write_metric_lines(const std::vector<std::string>& lines, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write metrics log: " + path);
  for (const auto& l : lines) f << l << '\n';
}

}  // namespace uvt
