#include "uvt/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "uvt/glyphs.hpp"

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

namespace uvt {

// ---------------------------------------------------------------------------
// Scenes
// ---------------------------------------------------------------------------

const char* shape_name(Shape s) {
  switch (s) {
    case Shape::kCircle: return "circle";
    case Shape::kSquare: return "square";
    case Shape::kTriangle: return "triangle";
  }
  return "?";
}

const char* color_name(ShapeColor c) {
  switch (c) {
    case ShapeColor::kRed: return "red";
    case ShapeColor::kGreen: return "green";
    case ShapeColor::kBlue: return "blue";
    case ShapeColor::kYellow: return "yellow";
    case ShapeColor::kPurple: return "purple";
    case ShapeColor::kCyan: return "cyan";
  }
  return "?";
}

void color_rgb(ShapeColor c, float& r, float& g, float& b) {
  switch (c) {
    case ShapeColor::kRed: r = 0.85f; g = 0.10f; b = 0.10f; return;
    case ShapeColor::kGreen: r = 0.10f; g = 0.70f; b = 0.15f; return;
    case ShapeColor::kBlue: r = 0.12f; g = 0.25f; b = 0.85f; return;
    case ShapeColor::kYellow: r = 0.92f; g = 0.85f; b = 0.10f; return;
    case ShapeColor::kPurple: r = 0.60f; g = 0.15f; b = 0.75f; return;
    case ShapeColor::kCyan: r = 0.10f; g = 0.75f; b = 0.80f; return;
  }
}

namespace {

constexpr int kMaxObjects = 4;
constexpr int kPlacementRetries = 80;
constexpr int kSceneRetries = 30;

// Reading order, then shape/color for exact ties.
SceneSpec canonical_order(SceneSpec spec) {
  std::sort(spec.begin(), spec.end(), [](const ObjectSpec& a, const ObjectSpec& b) {
    if (a.cy != b.cy) return a.cy < b.cy;
    if (a.cx != b.cx) return a.cx < b.cx;
    if (a.shape != b.shape) return static_cast<int>(a.shape) < static_cast<int>(b.shape);
    return static_cast<int>(a.color) < static_cast<int>(b.color);
  });
  return spec;
}

bool objects_overlap(const ObjectSpec& a, const ObjectSpec& b) {
  double dx = a.cx - b.cx;
  double dy = a.cy - b.cy;
  double min_dist = 1.05 * (a.size + b.size);
  return dx * dx + dy * dy < min_dist * min_dist;
}

std::string object_phrase(const ObjectSpec& o) {
  return std::string(color_name(o.color)) + " " + shape_name(o.shape);
}

std::string region_phrase(const ObjectSpec& o) {
  int row = o.cy < 1.0 / 3 ? 0 : (o.cy < 2.0 / 3 ? 1 : 2);
  int col = o.cx < 1.0 / 3 ? 0 : (o.cx < 2.0 / 3 ? 1 : 2);
  if (row == 1 && col == 1) return "center";
  static const char* rows[3] = {"top", "middle", "bottom"};
  static const char* cols[3] = {"left", "center", "right"};
  return std::string(rows[row]) + " " + cols[col];
}

std::string coarse_caption(const SceneSpec& sorted) {
  std::string out;
  int n = static_cast<int>(sorted.size());
  for (int i = 0; i < n; ++i) {
    if (i > 0) out += (i == n - 1) ? " and " : ", ";
    out += "a " + object_phrase(sorted[i]);
  }
  return out;
}

std::string detailed_caption(const SceneSpec& sorted) {
  std::string out;
  for (const auto& o : sorted) out += object_phrase(o) + " at " + region_phrase(o) + ". ";
  if (sorted.size() >= 2) {
    const ObjectSpec& a = sorted[0];
    const ObjectSpec& b = sorted[1];
    const char* rel = std::abs(a.cy - b.cy) >= std::abs(a.cx - b.cx)
                          ? (a.cy <= b.cy ? "above" : "below")
                          : (a.cx <= b.cx ? "left of" : "right of");
    out += object_phrase(a) + " " + rel + " " + object_phrase(b) + ". ";
  } else {
    out += "it is the only object. ";
  }
  out += "the background is white.";
  return out;
}

bool inside_shape(const ObjectSpec& o, double px, double py) {
  // px, py and the object geometry are in normalized canvas coordinates.
  double dx = px - o.cx;
  double dy = py - o.cy;
  switch (o.shape) {
    case Shape::kCircle:
      return dx * dx + dy * dy <= o.size * o.size;
    case Shape::kSquare:
      return std::abs(dx) <= o.size && std::abs(dy) <= o.size;
    case Shape::kTriangle: {
      // Upward triangle: apex (cx, cy-size), base corners (cx +- size, cy+size).
      if (dy < -o.size || dy > o.size) return false;
      double half_width = o.size * (dy + o.size) / (2.0 * o.size);
      return std::abs(dx) <= half_width;
    }
  }
  return false;
}

}  // namespace

SceneRender render_scene(const SceneSpec& spec, int canvas) {
  if (spec.empty() || static_cast<int>(spec.size()) > kMaxObjects)
    throw std::invalid_argument("render_scene: expected 1..4 objects");
  for (size_t i = 0; i < spec.size(); ++i)
    for (size_t j = i + 1; j < spec.size(); ++j)
      if (objects_overlap(spec[i], spec[j]))
        throw std::invalid_argument("render_scene: objects overlap beyond tolerance");

  SceneSpec sorted = canonical_order(spec);
  SceneRender out;
  out.image = ImageTensor::filled(canvas, canvas, 1.f, 1.f, 1.f);
  for (const auto& o : sorted) {
    float r, g, b;
    color_rgb(o.color, r, g, b);
    for (int y = 0; y < canvas; ++y) {
      double py = (y + 0.5) / canvas;
      for (int x = 0; x < canvas; ++x) {
        double px = (x + 0.5) / canvas;
        if (inside_shape(o, px, py)) out.image.set(y, x, r, g, b);
      }
    }
  }
  out.coarse_caption = coarse_caption(sorted);
  out.detailed_caption = detailed_caption(sorted);
  return out;
}

SceneSpec sample_scene(Rng& rng, int n_min, int n_max) {
  int n = rng_int(rng, n_min, n_max);
  // Crowded scenes get smaller objects so non-overlapping placement stays
  // feasible.
  static const double kSizesByN[5][3] = {{0, 0, 0},
                                         {0.16, 0.21, 0.26},
                                         {0.13, 0.16, 0.20},
                                         {0.11, 0.13, 0.16},
                                         {0.10, 0.11, 0.13}};

  // Distinct (color, shape) combinations keep captions unambiguous.
  std::vector<int> combos;
  std::set<int> used;
  while (static_cast<int>(combos.size()) < n) {
    int c = rng_int(rng, 0, 17);
    if (used.insert(c).second) combos.push_back(c);
  }

  for (int scene_attempt = 0; scene_attempt < kSceneRetries; ++scene_attempt) {
    SceneSpec spec;
    bool ok = true;
    for (int i = 0; i < n && ok; ++i) {
      ObjectSpec o;
      o.shape = static_cast<Shape>(combos[i] % 3);
      o.color = static_cast<ShapeColor>(combos[i] / 3);
      o.size = kSizesByN[n][rng_int(rng, 0, 2)];
      bool placed = false;
      for (int attempt = 0; attempt < kPlacementRetries && !placed; ++attempt) {
        double lo = o.size + 0.02, hi = 1.0 - o.size - 0.02;
        o.cx = lo + rng_uniform(rng) * (hi - lo);
        o.cy = lo + rng_uniform(rng) * (hi - lo);
        placed = true;
        for (const auto& other : spec)
          if (objects_overlap(o, other)) placed = false;
      }
      if (placed)
        spec.push_back(o);
      else
        ok = false;
    }
    if (ok) return spec;
  }
  throw std::runtime_error("sample_scene: could not place objects without overlap");
}

// ---------------------------------------------------------------------------
// Documents
// ---------------------------------------------------------------------------

ImageTensor render_document(const std::string& text, int canvas, int font_px, Rng& rng) {
  if (font_px <= 0 || font_px % 8 != 0)
    throw std::invalid_argument("render_document: font_px must be a positive multiple of 8");
  if (canvas <= 0 || canvas % font_px != 0)
    throw std::invalid_argument("render_document: canvas must be a multiple of font_px");
  const int cells = canvas / font_px;
  const int s = font_px / 8;  // glyph pixel scale

  // Word wrap onto cell rows.
  std::vector<std::string> words;
  {
    std::istringstream ss(text);
    std::string w;
    while (ss >> w) words.push_back(w);
  }
  std::vector<std::string> lines;
  std::string cur;
  for (const auto& w : words) {
    for (char c : w)
      if (!has_glyph(c))
        throw std::invalid_argument(std::string("render_document: no glyph for '") + c + "'");
    if (static_cast<int>(w.size()) > cells)
      throw std::invalid_argument("render_document: word does not fit on a line: " + w);
    if (cur.empty()) {
      cur = w;
    } else if (static_cast<int>(cur.size() + 1 + w.size()) <= cells) {
      cur += " " + w;
    } else {
      lines.push_back(cur);
      cur = w;
    }
  }
  if (!cur.empty()) lines.push_back(cur);
  if (static_cast<int>(lines.size()) > cells)
    throw std::invalid_argument("render_document: text overflows the canvas");

  // Cell-aligned placement jitter for the whole block, capped so the text
  // stays near the top-left corner the way page crops do.
  int max_len = 0;
  for (const auto& l : lines) max_len = std::max(max_len, static_cast<int>(l.size()));
  int oy = 0, ox = 0;
  if (!lines.empty()) {
    oy = rng_int(rng, 0, std::min(cells - static_cast<int>(lines.size()), 3));
    ox = rng_int(rng, 0, std::min(cells - max_len, 3));
  }

  ImageTensor img = ImageTensor::filled(canvas, canvas, 1.f, 1.f, 1.f);
  for (size_t li = 0; li < lines.size(); ++li) {
    for (size_t ci = 0; ci < lines[li].size(); ++ci) {
      Glyph g;
      lookup_glyph(lines[li][ci], g);
      int cell_y = (oy + static_cast<int>(li)) * font_px;
      int cell_x = (ox + static_cast<int>(ci)) * font_px;
      for (int gy = 0; gy < kGlyphH; ++gy)
        for (int gx = 0; gx < kGlyphW; ++gx) {
          if (!g.pixel(gy, gx)) continue;
          for (int sy = 0; sy < s; ++sy)
            for (int sx = 0; sx < s; ++sx)
              img.set(cell_y + (gy + 1) * s + sy, cell_x + (gx + 1) * s + sx, 0.f, 0.f, 0.f);
        }
    }
  }
  return img;
}

const std::vector<std::string>& short_word_bank() {
  static const std::vector<std::string> bank = {
      "ant",  "arm",  "bat",  "bay",  "bed",  "bee",  "box",  "bus",  "car",  "cat",
      "cow",  "cub",  "cup",  "den",  "dog",  "ear",  "elk",  "elm",  "eye",  "fan",
      "fig",  "fox",  "gem",  "hat",  "hay",  "hen",  "ice",  "ink",  "jar",  "jaw",
      "key",  "kit",  "leg",  "lid",  "log",  "map",  "mat",  "mug",  "net",  "nut",
      "oak",  "ore",  "owl",  "pan",  "pen",  "pig",  "pot",  "pup",  "ram",  "rat",
      "rib",  "rug",  "sea",  "sun",  "tin",  "toe",  "web",  "zinc", "barn", "bell",
      "bird", "boat", "bone", "cake", "coal", "coin", "corn", "dust", "fern", "fish",
      "frog", "gate", "gold", "hill", "lake", "lamp", "leaf", "moon", "moss", "pond",
      "rain", "reef", "rock", "roof", "root", "rope", "sand", "seed", "snow", "star",
      "tree", "wind", "wolf", "wool",
  };
  return bank;
}

const std::vector<std::string>& long_word_bank() {
  static const std::vector<std::string> bank = [] {
    std::vector<std::string> bank = short_word_bank();
    const char* extra[] = {
        "apple",  "brick",  "bread",  "cloud",  "chair",  "cedar",  "daisy",  "dream",
        "eagle",  "earth",  "field",  "flame",  "frost",  "glass",  "grape",  "grass",
        "honey",  "horse",  "house",  "lemon",  "light",  "maple",  "melon",  "metal",
        "mouse",  "music",  "night",  "ocean",  "otter",  "paper",  "pearl",  "plant",
        "raven",  "river",  "robin",  "shell",  "slate",  "sound",  "spark",  "stone",
        "storm",  "sugar",  "table",  "tiger",  "torch",  "water",  "wheat",  "zebra",
        "amber",  "basket", "bridge", "candle", "copper", "fabric", "forest", "garden",
        "hammer", "island", "jungle", "kettle", "ladder", "marble", "meadow", "needle",
        "orchid", "pebble", "quartz", "ribbon", "saddle", "shadow", "silver", "spruce",
        "timber", "tunnel", "valley", "walnut", "willow", "winter",
    };
    for (const char* w : extra) bank.emplace_back(w);
    return bank;
  }();
  return bank;
}

std::string sample_document_text(Rng& rng, const std::vector<std::string>& bank,
                                 int n_words_min, int n_words_max) {
  int n = rng_int(rng, n_words_min, n_words_max);
  std::string out;
  for (int i = 0; i < n; ++i) {
    if (i > 0) out += " ";
    out += bank[rng_int(rng, 0, static_cast<int>(bank.size()) - 1)];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

namespace {

const char* split_name(Split s) { return s == Split::kTrain ? "train" : "val"; }

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  throw std::runtime_error("unknown split: " + s);
}

struct SubCorpus {
  TaskKind task;
  int scale;
  int count;
  uint64_t tag;  // seed stream tag
};

std::string record_dir(Split split, int scale, TaskKind task) {
  return std::string(split_name(split)) + "/x" + std::to_string(scale) + "/" + task_name(task);
}

}  // namespace

CorpusManifest build_corpus(const CorpusConfig& config, uint64_t seed, const std::string& out_dir) {
  if (config.n_img_x1 <= 0 || config.n_doc_x4 <= 0 || config.n_img_x4 <= 0 || config.n_doc_x1 <= 0)
    throw std::invalid_argument("build_corpus: sub-corpus counts must be positive");
  if (config.r <= 0 || config.r % 32 != 0)
    throw std::invalid_argument("build_corpus: base resolution must be a positive multiple of 32");
  if (config.val_fraction < 0.0 || config.val_fraction >= 1.0)
    throw std::invalid_argument("build_corpus: val_fraction must be in [0,1)");
  if (config.doc_words_x4_min < 1 || config.doc_words_x4_max < config.doc_words_x4_min ||
      config.doc_words_x1_min < 1 || config.doc_words_x1_max < config.doc_words_x1_min)
    throw std::invalid_argument("build_corpus: bad document word counts");
  if (config.scene_objs_x1_min < 1 || config.scene_objs_x1_max < config.scene_objs_x1_min ||
      config.scene_objs_x1_max > 4 || config.scene_objs_x4_min < 1 ||
      config.scene_objs_x4_max < config.scene_objs_x4_min || config.scene_objs_x4_max > 4)
    throw std::invalid_argument("build_corpus: bad scene object counts");

  const int font_px = config.r / 4;
  const SubCorpus subs[4] = {
      {TaskKind::kCaption, 1, config.n_img_x1, 1},
      {TaskKind::kOcr, 4, config.n_doc_x4, 2},
      {TaskKind::kCaption, 4, config.n_img_x4, 3},
      {TaskKind::kOcr, 1, config.n_doc_x1, 4},
  };

  for (int scale : {1, 4})
    for (const char* split : {"train", "val"})
      for (const char* task : {"caption", "ocr"})
        fs::create_directories(fs::path(out_dir) / split / ("x" + std::to_string(scale)) / task);

  CorpusManifest manifest;
  manifest.r = config.r;
  manifest.seed = seed;

  for (const auto& sub : subs) {
    // Seeded held-out subset, disjoint from train by construction.
    int n_val = static_cast<int>(std::lround(sub.count * config.val_fraction));
    n_val = std::min(n_val, sub.count - 1);
    Rng split_rng = make_rng(seed_combine(seed, sub.tag * 1000003));
    std::vector<int> val_list = sample_without_replacement(sub.count, n_val, split_rng);
    std::set<int> val_set(val_list.begin(), val_list.end());

    int counters[2] = {0, 0};  // per split
    for (int i = 0; i < sub.count; ++i) {
      Rng rng = make_rng(seed_combine(seed, sub.tag * 1000000 + static_cast<uint64_t>(i)));
      SampleRecord rec;
      rec.task = sub.task;
      rec.scale = sub.scale;
      rec.split = val_set.count(i) ? Split::kVal : Split::kTrain;

      const int canvas = config.r * sub.scale;
      ImageTensor img;
      if (sub.task == TaskKind::kCaption) {
        SceneSpec spec = sub.scale == 1
                             ? sample_scene(rng, config.scene_objs_x1_min, config.scene_objs_x1_max)
                             : sample_scene(rng, config.scene_objs_x4_min, config.scene_objs_x4_max);
        SceneRender render = render_scene(spec, canvas);
        img = std::move(render.image);
        rec.text = sub.scale == 1 ? render.coarse_caption : render.detailed_caption;
      } else {
        const auto& bank = sub.scale == 4 ? long_word_bank() : short_word_bank();
        rec.text = sub.scale == 4
                       ? sample_document_text(rng, bank, config.doc_words_x4_min, config.doc_words_x4_max)
                       : sample_document_text(rng, bank, config.doc_words_x1_min, config.doc_words_x1_max);
        img = render_document(rec.text, canvas, font_px, rng);
      }
      if (static_cast<int>(rec.text.size()) > kMaxAnnotationChars)
        throw std::logic_error("build_corpus: annotation exceeds kMaxAnnotationChars");

      int& counter = counters[rec.split == Split::kVal ? 1 : 0];
      char name[16];
      std::snprintf(name, sizeof(name), "%05d.ppm", counter++);
      rec.image_path = record_dir(rec.split, rec.scale, rec.task) + "/" + name;
      write_ppm(to_u8(img), (fs::path(out_dir) / rec.image_path).string());
      manifest.records.push_back(std::move(rec));
    }
  }

  // manifest.jsonl: one record per line, fields exactly as in SampleRecord.
  {
    std::ofstream f(fs::path(out_dir) / "manifest.jsonl", std::ios::binary);
    if (!f) throw std::runtime_error("build_corpus: cannot write manifest");
    for (const auto& rec : manifest.records) {
      ordered_json j;
      j["image_path"] = rec.image_path;
      j["task"] = task_name(rec.task);
      j["text"] = rec.text;
      j["scale"] = "x" + std::to_string(rec.scale);
      j["split"] = split_name(rec.split);
      f << j.dump() << '\n';
    }
  }
  {
    ordered_json meta;
    meta["r"] = config.r;
    meta["seed"] = seed;
    meta["counts"] = {{"img_x1", config.n_img_x1},
                      {"doc_x4", config.n_doc_x4},
                      {"img_x4", config.n_img_x4},
                      {"doc_x1", config.n_doc_x1}};
    meta["val_fraction"] = config.val_fraction;
    std::ofstream f(fs::path(out_dir) / "meta.json", std::ios::binary);
    f << meta.dump(2) << '\n';
  }
  save_vocab(build_vocab(collect_corpus_texts(manifest)), (fs::path(out_dir) / "vocab.txt").string());
  return manifest;
}

CorpusManifest load_manifest(const std::string& corpus_dir) {
  std::ifstream meta_f(fs::path(corpus_dir) / "meta.json");
  if (!meta_f) throw std::runtime_error("load_manifest: missing meta.json in " + corpus_dir);
  ordered_json meta = ordered_json::parse(meta_f);

  CorpusManifest manifest;
  manifest.r = meta.at("r").get<int>();
  manifest.seed = meta.at("seed").get<uint64_t>();

  std::ifstream f(fs::path(corpus_dir) / "manifest.jsonl");
  if (!f) throw std::runtime_error("load_manifest: missing manifest.jsonl in " + corpus_dir);
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    ordered_json j = ordered_json::parse(line);
    SampleRecord rec;
    rec.image_path = j.at("image_path").get<std::string>();
    rec.task = task_from_name(j.at("task").get<std::string>());
    rec.text = j.at("text").get<std::string>();
    std::string scale = j.at("scale").get<std::string>();
    if (scale != "x1" && scale != "x4") throw std::runtime_error("load_manifest: bad scale " + scale);
    rec.scale = scale == "x1" ? 1 : 4;
    rec.split = split_from_name(j.at("split").get<std::string>());
    manifest.records.push_back(std::move(rec));
  }
  return manifest;
}

std::vector<std::string> collect_corpus_texts(const CorpusManifest& manifest) {
  std::vector<std::string> texts;
  texts.reserve(manifest.records.size() + 2);
  for (const auto& rec : manifest.records) texts.push_back(rec.text);
  texts.emplace_back(kCaptionInstruction);
  texts.emplace_back(kOcrInstruction);
  return texts;
}

// ---------------------------------------------------------------------------
// Stage mixes
// ---------------------------------------------------------------------------

const char* stage_name(Stage s) { return s == Stage::kIntra ? "intra" : "inter"; }

Stage stage_from_name(const std::string& name) {
  if (name == "intra") return Stage::kIntra;
  if (name == "inter") return Stage::kInter;
  throw std::invalid_argument("unknown stage: " + name);
}

int TrainMix::count_vis_flagged() const {
  int n = 0;
  for (const auto& e : entries)
    if (e.vis_loss) ++n;
  return n;
}

namespace {

std::vector<int> train_indices(const CorpusManifest& m, TaskKind task, int scale) {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(m.records.size()); ++i) {
    const auto& r = m.records[i];
    if (r.split == Split::kTrain && r.task == task && r.scale == scale) idx.push_back(i);
  }
  return idx;
}

// Seeded uniform half, floor(n/2), returned in record order.
std::vector<int> retain_half(const std::vector<int>& idx, Rng& rng) {
  std::vector<int> pick = sample_without_replacement(static_cast<int>(idx.size()),
                                                     static_cast<int>(idx.size()) / 2, rng);
  std::sort(pick.begin(), pick.end());
  std::vector<int> out;
  out.reserve(pick.size());
  for (int p : pick) out.push_back(idx[p]);
  return out;
}

void append_entries(TrainMix& mix, const std::vector<int>& idx, bool vis) {
  for (int i : idx) mix.entries.push_back({i, vis});
}

}  // namespace

TrainMix build_stage_mix(Stage stage, const CorpusManifest& manifest, uint64_t seed) {
  TrainMix mix;
  mix.stage = stage;
  if (stage == Stage::kIntra) {
    append_entries(mix, train_indices(manifest, TaskKind::kCaption, 1), true);
    append_entries(mix, train_indices(manifest, TaskKind::kOcr, 4), false);
  } else {
    Rng rng_img = make_rng(seed_combine(seed, 0x1157));
    Rng rng_doc = make_rng(seed_combine(seed, 0x2157));
    append_entries(mix, train_indices(manifest, TaskKind::kCaption, 4), true);
    append_entries(mix, train_indices(manifest, TaskKind::kOcr, 1), false);
    append_entries(mix, retain_half(train_indices(manifest, TaskKind::kCaption, 1), rng_img), true);
    append_entries(mix, retain_half(train_indices(manifest, TaskKind::kOcr, 4), rng_doc), false);
  }
  return mix;
}

}  // namespace uvt
