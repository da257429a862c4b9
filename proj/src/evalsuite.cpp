#include "uvt/evalsuite.hpp"

#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace uvt {

namespace {

std::vector<std::string> whitespace_tokens(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string w;
  while (ss >> w) out.push_back(w);
  return out;
}

// Classic two-row Levenshtein on characters.
int edit_distance(const std::string& a, const std::string& b) {
  std::vector<int> prev(b.size() + 1), cur(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<int>(j);
  for (size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<int>(i);
    for (size_t j = 1; j <= b.size(); ++j) {
      int sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

OcrMetrics ocr_metrics(const std::string& pred, const std::string& gt) {
  OcrMetrics m;
  std::vector<std::string> pw = whitespace_tokens(pred);
  std::vector<std::string> gw = whitespace_tokens(gt);
  m.n_pred_words = static_cast<int>(pw.size());
  m.n_gt_words = static_cast<int>(gw.size());

  std::map<std::string, int> counts;
  for (const auto& w : gw) counts[w] += 1;
  for (const auto& w : pw) {
    auto it = counts.find(w);
    if (it != counts.end() && it->second > 0) {
      it->second -= 1;
      m.n_matched += 1;
    }
  }
  m.precision = m.n_pred_words > 0 ? static_cast<double>(m.n_matched) / m.n_pred_words : 0.0;
  m.recall = m.n_gt_words > 0 ? static_cast<double>(m.n_matched) / m.n_gt_words : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;

  size_t longest = std::max(pred.size(), gt.size());
  m.ned = longest > 0 ? static_cast<double>(edit_distance(pred, gt)) / longest : 0.0;
  return m;
}

int knn_classify(const Mat<real>& train_feats, const std::vector<int>& labels,
                 const Mat<real>& query, int k) {
  const int n = static_cast<int>(train_feats.rows());
  if (k < 1) throw std::invalid_argument("knn_classify: k must be >= 1");
  if (k > n) throw std::invalid_argument("knn_classify: k exceeds the train set size");
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("knn_classify: labels size mismatch");
  if (query.rows() != 1 || query.cols() != train_feats.cols())
    throw std::invalid_argument("knn_classify: query shape mismatch");

  double qn = query.cast<double>().norm();
  std::vector<std::pair<double, int>> sims(n);
  for (int i = 0; i < n; ++i) {
    double tn = train_feats.row(i).cast<double>().norm();
    double dot = train_feats.row(i).cast<double>().dot(query.row(0).cast<double>());
    double sim = (qn > kNormEps && tn > kNormEps) ? dot / (qn * tn) : 0.0;
    sims[i] = {sim, i};
  }
  std::sort(sims.begin(), sims.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });

  std::map<int, double> votes;
  for (int j = 0; j < k; ++j) votes[labels[sims[j].second]] += sims[j].first;
  int best_label = -1;
  double best_vote = -1e300;
  for (const auto& [label, vote] : votes) {
    if (vote > best_vote) {  // map iteration is label-ascending, so ties keep the smaller label
      best_vote = vote;
      best_label = label;
    }
  }
  return best_label;
}

int scene_label_from_caption(const std::string& caption) {
  static const char* colors[6] = {"red", "green", "blue", "yellow", "purple", "cyan"};
  static const char* shapes[3] = {"circle", "square", "triangle"};
  int color = -1, shape = -1;
  for (const auto& w : whitespace_tokens(caption)) {
    std::string word = w;
    while (!word.empty() && (word.back() == '.' || word.back() == ',')) word.pop_back();
    if (color < 0)
      for (int i = 0; i < 6; ++i)
        if (word == colors[i]) color = i;
    if (shape < 0)
      for (int i = 0; i < 3; ++i)
        if (word == shapes[i]) shape = i;
    if (color >= 0 && shape >= 0) return color * 3 + shape;
  }
  return -1;
}

std::string scene_label_name(int label) {
  if (label < 0 || label >= 18) return "?";
  return std::string(color_name(static_cast<ShapeColor>(label / 3))) + " " +
         shape_name(static_cast<Shape>(label % 3));
}

namespace {

std::ofstream open_report(const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write report: " + path);
  return f;
}

}  // namespace

void write_ocr_report(const OcrReport& report, const std::string& path) {
  auto f = open_report(path);
  for (const auto& s : report.samples) {
    nlohmann::ordered_json j;
    j["kind"] = "ocr_sample";
    j["pred"] = s.pred;
    j["gt"] = s.gt;
    j["precision"] = s.metrics.precision;
    j["recall"] = s.metrics.recall;
    j["f1"] = s.metrics.f1;
    j["ned"] = s.metrics.ned;
    f << j.dump() << '\n';
  }
  nlohmann::ordered_json j;
  j["kind"] = "ocr_summary";
  j["resolution"] = report.resolution;
  j["source_scale"] = report.source_scale;
  j["n_samples"] = report.samples.size();
  j["precision"] = report.mean.precision;
  j["recall"] = report.mean.recall;
  j["f1"] = report.mean.f1;
  j["ned"] = report.mean.ned;
  f << j.dump() << '\n';
}

void write_knn_report(const KnnReport& report, const std::string& path) {
  auto f = open_report(path);
  nlohmann::ordered_json j;
  j["kind"] = "knn_summary";
  j["resolution"] = report.resolution;
  j["source_scale"] = report.source_scale;
  j["k"] = report.k;
  j["n_train"] = report.n_train;
  j["n_queries"] = report.n_queries;
  j["accuracy"] = report.accuracy;
  f << j.dump() << '\n';
}

void write_recon_report(const ReconReport& report, const std::string& path) {
  auto f = open_report(path);
  nlohmann::ordered_json j;
  j["kind"] = "recon_summary";
  j["resolution"] = report.resolution;
  j["n_images"] = report.n_images;
  j["mean_cos"] = report.mean_cos;
  f << j.dump() << '\n';
}

void write_sweep_report(const std::vector<SweepRow>& rows, const std::string& path) {
  auto f = open_report(path);
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["kind"] = "sweep_row";
    j["resolution"] = r.resolution;
    j["knn_accuracy"] = r.knn_accuracy;
    j["ocr_f1"] = r.ocr_f1;
    f << j.dump() << '\n';
  }
}

}  // namespace uvt
