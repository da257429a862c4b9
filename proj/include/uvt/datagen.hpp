#pragma once

// Deterministic synthetic corpus generation: dense-text documents,
// large-font document crops, shape scenes with coarse and detailed captions,
// and the two-stage training mixes built from them.

#include <cstdint>
#include <string>
#include <vector>

#include "uvt/common.hpp"
#include "uvt/image.hpp"
#include "uvt/tokenizer.hpp"

namespace uvt {

// ---------------------------------------------------------------------------
// Scenes
// ---------------------------------------------------------------------------

enum class Shape { kCircle, kSquare, kTriangle };
enum class ShapeColor { kRed, kGreen, kBlue, kYellow, kPurple, kCyan };

const char* shape_name(Shape s);
const char* color_name(ShapeColor c);
void color_rgb(ShapeColor c, float& r, float& g, float& b);

struct ObjectSpec {
  Shape shape;
  ShapeColor color;
  double cx = 0.5;    // centre, normalized to [0,1]
  double cy = 0.5;
  double size = 0.18; // half-extent, normalized to the canvas side
};

using SceneSpec = std::vector<ObjectSpec>;

struct SceneRender {
  ImageTensor image;
  std::string coarse_caption;
  std::string detailed_caption;
};

// Pure render; captions are deterministic functions of the (canonically
// ordered) spec. Throws std::invalid_argument on an empty/oversized spec or
// on objects overlapping beyond tolerance.
SceneRender render_scene(const SceneSpec& spec, int canvas);

// Draws a random non-overlapping scene with n_min..n_max objects and
// pairwise-distinct (color, shape) combinations. Positions are re-sampled a
// bounded number of times before giving up with std::runtime_error.
SceneSpec sample_scene(Rng& rng, int n_min = 1, int n_max = 4);

// ---------------------------------------------------------------------------
// Documents
// ---------------------------------------------------------------------------

// Glyph cell side in pixels is font_px (glyphs are drawn 5x7 inside it), so
// a canvas holds (canvas/font_px)^2 character cells. font_px must be a
// positive multiple of 8. Words are wrapped at cell-row boundaries and the
// whole block gets a cell-aligned placement jitter from rng. Throws
// std::invalid_argument when the text cannot fit.
ImageTensor render_document(const std::string& text, int canvas, int font_px, Rng& rng);

// Word banks used for document sampling. Short words fit the 4-cell rows of
// x1 documents.
const std::vector<std::string>& short_word_bank();   // 3-4 letters
const std::vector<std::string>& long_word_bank();    // 3-6 letters

std::string sample_document_text(Rng& rng, const std::vector<std::string>& bank,
                                 int n_words_min, int n_words_max);

// ---------------------------------------------------------------------------
// Corpus
// ---------------------------------------------------------------------------

enum class Split { kTrain, kVal };

struct SampleRecord {
  std::string image_path;  // relative to the corpus directory
  TaskKind task;
  std::string text;
  int scale = 1;  // 1 or 4
  Split split = Split::kTrain;
};

struct CorpusConfig {
  int n_img_x1 = 400;
  int n_doc_x4 = 240;
  int n_img_x4 = 240;
  int n_doc_x1 = 240;
  int r = 32;                 // base resolution; must be a positive multiple of 32
  double val_fraction = 0.1;  // per-sub-corpus held-out fraction
  // Words per document: x4 documents are dense, x1 documents short large-font.
  int doc_words_x4_min = 6;
  int doc_words_x4_max = 9;
  int doc_words_x1_min = 2;
  int doc_words_x1_max = 4;
  // Objects per scene: x1 images stay simple at their small resolution.
  int scene_objs_x1_min = 1;
  int scene_objs_x1_max = 1;
  int scene_objs_x4_min = 2;
  int scene_objs_x4_max = 4;
};

struct CorpusManifest {
  std::vector<SampleRecord> records;
  int r = 32;
  uint64_t seed = 0;
};

// Longest annotation the generator may emit; keeps decoder sequences inside
// the configured maximum.
constexpr int kMaxAnnotationChars = 200;

// Generates all four sub-corpora under out_dir (layout
// <split>/<scale>/<task>/NNNNN.ppm), writes manifest.jsonl, meta.json and
// vocab.txt, and returns the manifest. Fully determined by (config, seed).
CorpusManifest build_corpus(const CorpusConfig& config, uint64_t seed, const std::string& out_dir);

CorpusManifest load_manifest(const std::string& corpus_dir);

// Every annotation text plus the two instruction strings; input for
// build_vocab.
std::vector<std::string> collect_corpus_texts(const CorpusManifest& manifest);

// ---------------------------------------------------------------------------
// Stage mixes
// ---------------------------------------------------------------------------

enum class Stage { kIntra, kInter };

const char* stage_name(Stage s);
Stage stage_from_name(const std::string& name);

struct MixEntry {
  int record_index = 0;  // into manifest.records
  bool vis_loss = false;
};

struct TrainMix {
  Stage stage = Stage::kIntra;
  std::vector<MixEntry> entries;

  int count_vis_flagged() const;
};

// Intra: train D^I_x1 (vis) + train D^T_x4. Inter: train D^I_x4 (vis) +
// train D^T_x1 + a seeded half of D^I_x1 (vis) + a seeded half of D^T_x4.
TrainMix build_stage_mix(Stage stage, const CorpusManifest& manifest, uint64_t seed);

}  // namespace uvt
