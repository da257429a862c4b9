#pragma once

// Quantitative evaluation: OCR precision/recall/F1, kNN classification on
// class tokens, feature-reconstruction fidelity, and resolution sweeps.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "uvt/checkpoint.hpp"
#include "uvt/datagen.hpp"
#include "uvt/model.hpp"
#include "uvt/trainer.hpp"

namespace uvt {

// ---------------------------------------------------------------------------
// Pure metrics
// ---------------------------------------------------------------------------

struct OcrMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int n_pred_words = 0;
  int n_gt_words = 0;
  int n_matched = 0;
  double ned = 0.0;  // normalized character edit distance, diagnostic only
};

// Word-level multiset matching: P = matched/|pred|, R = matched/|gt|,
// empty denominators give 0.
OcrMetrics ocr_metrics(const std::string& pred, const std::string& gt);

// Cosine-similarity weighted kNN vote. Neighbour ties break toward the
// smaller train index, label-vote ties toward the smaller label.
int knn_classify(const Mat<real>& train_feats, const std::vector<int>& labels,
                 const Mat<real>& query, int k);

// Scene label = (color, shape) of the first-mentioned object in a caption;
// 18 classes. Returns -1 if no color+shape pair is found.
int scene_label_from_caption(const std::string& caption);
std::string scene_label_name(int label);

// ---------------------------------------------------------------------------
// Model evaluation
// ---------------------------------------------------------------------------

struct OcrSampleResult {
  std::string pred;
  std::string gt;
  OcrMetrics metrics;
};

struct OcrReport {
  std::vector<OcrSampleResult> samples;
  OcrMetrics mean;  // P/R/F1/ned are means of the per-sample values
  int resolution = 0;
  int source_scale = 0;
};

// Resolutions must be integer multiples of the sub-corpus' native side;
// checked before any parallel work so failures surface as exceptions.
inline void check_eval_resolution(const CorpusData& data, const std::vector<int>& idx,
                                  int resolution) {
  if (idx.empty()) return;
  int side = data.images[idx[0]].h;
  if (resolution <= 0 || resolution % side != 0)
    throw std::invalid_argument("evaluation resolution " + std::to_string(resolution) +
                                " is not a positive multiple of the native side " +
                                std::to_string(side));
}

inline std::vector<int> select_records(const CorpusManifest& manifest, TaskKind task, int scale,
                                       Split split) {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(manifest.records.size()); ++i) {
    const auto& r = manifest.records[i];
    if (r.task == task && r.scale == scale && r.split == split) idx.push_back(i);
  }
  return idx;
}

// Greedy OCR over the val docs of one sub-corpus, evaluated at `resolution`
// (an integer upscale of the native side).
inline OcrReport evaluate_ocr(const Model<real>& model, const CorpusManifest& manifest,
                              const CorpusData& data, const Vocabulary& vocab, int source_scale,
                              int resolution, Split split = Split::kVal) {
  std::vector<int> idx = select_records(manifest, TaskKind::kOcr, source_scale, split);
  check_eval_resolution(data, idx, resolution);
  OcrReport report;
  report.resolution = resolution;
  report.source_scale = source_scale;
  report.samples.resize(idx.size());

  PromptSpec prompt = build_prompt(TaskKind::kOcr, model.cfg.qf.n_queries, vocab);
  const int max_len = std::min(kMaxAnnotationChars + 4, model.cfg.dec.t_max - prompt.length());

  ParallelErrors errors;
#pragma omp parallel for schedule(dynamic)
  for (int j = 0; j < static_cast<int>(idx.size()); ++j) {
    errors.run([&, j] {
      int i = idx[j];
      ImageU8 img = scale_to_side(data.images[i], resolution);
      VisualTokens<real> tokens = encode_eval(model, img);
      typename QFormer<real>::Cache qc;
      Mat<real> prefix = model.qformer.fwd(tokens.x, qc);
      TokenSequence out = model.decoder.generate(prefix, prompt, max_len);
      OcrSampleResult& r = report.samples[j];
      r.pred = decode(out, vocab);
      r.gt = manifest.records[i].text;
      r.metrics = ocr_metrics(r.pred, r.gt);
    });
  }
  errors.rethrow();
  for (const auto& s : report.samples) {
    report.mean.precision += s.metrics.precision;
    report.mean.recall += s.metrics.recall;
    report.mean.f1 += s.metrics.f1;
    report.mean.ned += s.metrics.ned;
  }
  if (!report.samples.empty()) {
    double n = static_cast<double>(report.samples.size());
    report.mean.precision /= n;
    report.mean.recall /= n;
    report.mean.f1 /= n;
    report.mean.ned /= n;
  }
  return report;
}

struct KnnReport {
  double accuracy = 0.0;
  int n_queries = 0;
  int n_train = 0;
  int k = 0;
  int resolution = 0;
  int source_scale = 0;
};

// Class-token features of one image at the given resolution.
inline Mat<real> class_token_features(const Model<real>& model, const ImageU8& image,
                                      int resolution) {
  VisualTokens<real> tokens = encode_eval(model, scale_to_side(image, resolution));
  return tokens.x.topRows(1);
}

inline KnnReport evaluate_knn(const Model<real>& model, const CorpusManifest& manifest,
                              const CorpusData& data, int source_scale, int resolution, int k) {
  std::vector<int> train_idx = select_records(manifest, TaskKind::kCaption, source_scale, Split::kTrain);
  std::vector<int> val_idx = select_records(manifest, TaskKind::kCaption, source_scale, Split::kVal);
  if (k < 1) throw std::invalid_argument("evaluate_knn: k must be >= 1");
  if (train_idx.empty() || val_idx.empty())
    throw std::invalid_argument("evaluate_knn: empty gallery or query set");

  check_eval_resolution(data, train_idx, resolution);
  Mat<real> gallery(static_cast<Eigen::Index>(train_idx.size()), model.cfg.enc.dim);
  std::vector<int> labels(train_idx.size());
  ParallelErrors errors;
#pragma omp parallel for schedule(dynamic)
  for (int j = 0; j < static_cast<int>(train_idx.size()); ++j) {
    errors.run([&, j] {
      gallery.row(j) = class_token_features(model, data.images[train_idx[j]], resolution);
      labels[j] = scene_label_from_caption(manifest.records[train_idx[j]].text);
    });
  }
  errors.rethrow();

  std::vector<int> correct(val_idx.size(), 0);
#pragma omp parallel for schedule(dynamic)
  for (int j = 0; j < static_cast<int>(val_idx.size()); ++j) {
    errors.run([&, j] {
      Mat<real> q = class_token_features(model, data.images[val_idx[j]], resolution);
      int pred = knn_classify(gallery, labels, q, std::min(k, static_cast<int>(train_idx.size())));
      correct[j] = pred == scene_label_from_caption(manifest.records[val_idx[j]].text) ? 1 : 0;
    });
  }
  errors.rethrow();

  KnnReport report;
  report.n_queries = static_cast<int>(val_idx.size());
  report.n_train = static_cast<int>(train_idx.size());
  report.k = k;
  report.resolution = resolution;
  report.source_scale = source_scale;
  report.accuracy = std::accumulate(correct.begin(), correct.end(), 0) /
                    static_cast<double>(correct.size());
  return report;
}

struct ReconReport {
  double mean_cos = 0.0;  // in [-1, 1]
  int n_images = 0;
  int resolution = 0;
};

// Mean cosine similarity between the vision decoder's reconstructions and the
// teacher features, over every token of the val images.
inline ReconReport reconstruction_report(const Model<real>& model, const TeacherModel<real>& teacher,
                                         const CorpusManifest& manifest, const CorpusData& data,
                                         int source_scale, int resolution) {
  std::vector<int> idx = select_records(manifest, TaskKind::kCaption, source_scale, Split::kVal);
  if (idx.empty()) throw std::invalid_argument("reconstruction_report: no val images");

  check_eval_resolution(data, idx, resolution);
  std::vector<double> sums(idx.size(), 0.0);
  std::vector<int> counts(idx.size(), 0);
  ParallelErrors errors;
#pragma omp parallel for schedule(dynamic)
  for (int j = 0; j < static_cast<int>(idx.size()); ++j) {
    errors.run([&, j] {
    ImageU8 img = scale_to_side(data.images[idx[j]], resolution);
    VisualTokens<real> student_tokens = encode_eval(model, img);
    VisualTokens<real> teacher_tokens = teacher.targets(img);
    typename VisionDecoder<real>::Cache vc;
    Mat<real> recon = model.visdec.fwd(student_tokens.x, vc);
    for (Eigen::Index r = 0; r < recon.rows(); ++r) {
      double na = recon.row(r).template cast<double>().norm();
      double nb = teacher_tokens.x.row(r).template cast<double>().norm();
      if (na <= kNormEps || nb <= kNormEps) continue;
      double dot = recon.row(r).template cast<double>().dot(
          teacher_tokens.x.row(r).template cast<double>());
      sums[j] += dot / (na * nb);
      counts[j] += 1;
    }
    });
  }
  errors.rethrow();
  ReconReport report;
  report.n_images = static_cast<int>(idx.size());
  report.resolution = resolution;
  double total = 0.0;
  int n = 0;
  for (size_t j = 0; j < sums.size(); ++j) {
    total += sums[j];
    n += counts[j];
  }
  report.mean_cos = n > 0 ? total / n : 0.0;
  return report;
}

struct SweepRow {
  int resolution = 0;
  double knn_accuracy = 0.0;
  double ocr_f1 = 0.0;
};

// Evaluates kNN (x1 images) and OCR (x1 docs) at each resolution with
// eval-mode CPE; rows come back sorted by resolution.
inline std::vector<SweepRow> resolution_sweep(const Model<real>& model,
                                              const CorpusManifest& manifest, const CorpusData& data,
                                              const Vocabulary& vocab,
                                              std::vector<int> resolutions, int k) {
  std::sort(resolutions.begin(), resolutions.end());
  std::vector<SweepRow> rows;
  for (int res : resolutions) {
    SweepRow row;
    row.resolution = res;
    row.knn_accuracy = evaluate_knn(model, manifest, data, 1, res, k).accuracy;
    row.ocr_f1 = evaluate_ocr(model, manifest, data, vocab, 1, res).mean.f1;
    rows.push_back(row);
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Report files (JSON lines)
// ---------------------------------------------------------------------------

void write_ocr_report(const OcrReport& report, const std::string& path);
void write_knn_report(const KnnReport& report, const std::string& path);
void write_recon_report(const ReconReport& report, const std::string& path);
void write_sweep_report(const std::vector<SweepRow>& rows, const std::string& path);

}  // namespace uvt
