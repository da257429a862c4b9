#include "uvt/config.hpp"

#include <fstream>
#include <functional>
#include <stdexcept>

namespace uvt {

ModelConfig RunConfig::model_config(int vocab_size) const {
  ModelConfig m;
  m.enc = encoder_config();
  m.qf.n_queries = qf_queries;
  m.qf.layers = 2;
  m.qf.hidden = enc_dim;
  m.qf.heads = qf_heads;
  m.qf.kv_dim = enc_dim;
  m.qf.out_dim = dec_dim;
  m.dec.layers = dec_layers;
  m.dec.heads = dec_heads;
  m.dec.dim = dec_dim;
  m.dec.vocab = vocab_size;
  m.dec.t_max = t_max;
  m.vis.dim = enc_dim;
  m.vis.hidden = vis_hidden;
  return m;
}

EncoderConfig RunConfig::encoder_config() const {
  EncoderConfig e;
  e.patch = patch;
  e.dim = enc_dim;
  e.layers = enc_layers;
  e.heads = enc_heads;
  e.n_cls = n_cls;
  e.max_grid = max_grid;
  return e;
}

void RunConfig::validate() const {
  hp.validate();
  if (corpus.r % patch != 0) throw std::invalid_argument("config: r must be divisible by patch");
  if (corpus.r <= 0 || corpus.r % 32 != 0)
    throw std::invalid_argument("config: r must be a positive multiple of 32");
  if (4 * corpus.r > patch * max_grid)
    throw std::invalid_argument("config: max_grid too small for 4x inputs");
  if (enc_dim % enc_heads != 0 || dec_dim % dec_heads != 0 || enc_dim % qf_heads != 0)
    throw std::invalid_argument("config: dims must be divisible by head counts");
  if (qf_queries < 1) throw std::invalid_argument("config: qf_queries must be >= 1");
  if (t_max < qf_queries + 2 + 32)
    throw std::invalid_argument("config: t_max too small for prompts");
  if (teacher_steps < 1 || teacher_lr <= 0) throw std::invalid_argument("config: bad teacher settings");
  if (knn_k < 1) throw std::invalid_argument("config: knn_k must be >= 1");
  if (corpus.n_img_x1 <= 0 || corpus.n_doc_x4 <= 0 || corpus.n_img_x4 <= 0 || corpus.n_doc_x1 <= 0)
    throw std::invalid_argument("config: corpus counts must be positive");
  if (corpus.val_fraction < 0 || corpus.val_fraction >= 1)
    throw std::invalid_argument("config: val_fraction must be in [0,1)");
}

namespace {

int parse_int(const std::string& v) {
  size_t pos = 0;
  int out = std::stoi(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("not an integer: " + v);
  return out;
}

uint64_t parse_u64(const std::string& v) {
  size_t pos = 0;
  uint64_t out = std::stoull(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("not an unsigned integer: " + v);
  return out;
}

double parse_double(const std::string& v) {
  size_t pos = 0;
  double out = std::stod(v, &pos);
  if (pos != v.size()) throw std::invalid_argument("not a number: " + v);
  return out;
}

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  static const std::map<std::string, std::function<void(RunConfig&, const std::string&)>> setters = {
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = parse_u64(v); }},
      {"r", [](RunConfig& c, const std::string& v) { c.corpus.r = parse_int(v); }},
      {"n_img_x1", [](RunConfig& c, const std::string& v) { c.corpus.n_img_x1 = parse_int(v); }},
      {"n_doc_x4", [](RunConfig& c, const std::string& v) { c.corpus.n_doc_x4 = parse_int(v); }},
      {"n_img_x4", [](RunConfig& c, const std::string& v) { c.corpus.n_img_x4 = parse_int(v); }},
      {"n_doc_x1", [](RunConfig& c, const std::string& v) { c.corpus.n_doc_x1 = parse_int(v); }},
      {"val_fraction", [](RunConfig& c, const std::string& v) { c.corpus.val_fraction = parse_double(v); }},
      {"doc_words_x4_min", [](RunConfig& c, const std::string& v) { c.corpus.doc_words_x4_min = parse_int(v); }},
      {"doc_words_x4_max", [](RunConfig& c, const std::string& v) { c.corpus.doc_words_x4_max = parse_int(v); }},
      {"doc_words_x1_min", [](RunConfig& c, const std::string& v) { c.corpus.doc_words_x1_min = parse_int(v); }},
      {"doc_words_x1_max", [](RunConfig& c, const std::string& v) { c.corpus.doc_words_x1_max = parse_int(v); }},
      {"scene_objs_x1_min", [](RunConfig& c, const std::string& v) { c.corpus.scene_objs_x1_min = parse_int(v); }},
      {"scene_objs_x1_max", [](RunConfig& c, const std::string& v) { c.corpus.scene_objs_x1_max = parse_int(v); }},
      {"scene_objs_x4_min", [](RunConfig& c, const std::string& v) { c.corpus.scene_objs_x4_min = parse_int(v); }},
      {"scene_objs_x4_max", [](RunConfig& c, const std::string& v) { c.corpus.scene_objs_x4_max = parse_int(v); }},
      {"patch", [](RunConfig& c, const std::string& v) { c.patch = parse_int(v); }},
      {"enc_dim", [](RunConfig& c, const std::string& v) { c.enc_dim = parse_int(v); }},
      {"enc_layers", [](RunConfig& c, const std::string& v) { c.enc_layers = parse_int(v); }},
      {"enc_heads", [](RunConfig& c, const std::string& v) { c.enc_heads = parse_int(v); }},
      {"n_cls", [](RunConfig& c, const std::string& v) { c.n_cls = parse_int(v); }},
      {"max_grid", [](RunConfig& c, const std::string& v) { c.max_grid = parse_int(v); }},
      {"qf_queries", [](RunConfig& c, const std::string& v) { c.qf_queries = parse_int(v); }},
      {"qf_heads", [](RunConfig& c, const std::string& v) { c.qf_heads = parse_int(v); }},
      {"dec_dim", [](RunConfig& c, const std::string& v) { c.dec_dim = parse_int(v); }},
      {"dec_layers", [](RunConfig& c, const std::string& v) { c.dec_layers = parse_int(v); }},
      {"dec_heads", [](RunConfig& c, const std::string& v) { c.dec_heads = parse_int(v); }},
      {"t_max", [](RunConfig& c, const std::string& v) { c.t_max = parse_int(v); }},
      {"vis_hidden", [](RunConfig& c, const std::string& v) { c.vis_hidden = parse_int(v); }},
      {"lr", [](RunConfig& c, const std::string& v) { c.hp.lr = parse_double(v); }},
      {"weight_decay", [](RunConfig& c, const std::string& v) { c.hp.weight_decay = parse_double(v); }},
      {"warmup_ratio", [](RunConfig& c, const std::string& v) { c.hp.warmup_ratio = parse_double(v); }},
      {"batch_size", [](RunConfig& c, const std::string& v) { c.hp.batch_size = parse_int(v); }},
      {"total_steps", [](RunConfig& c, const std::string& v) { c.hp.total_steps = parse_int(v); }},
      {"lambda", [](RunConfig& c, const std::string& v) { c.hp.lambda = parse_double(v); }},
      {"mu", [](RunConfig& c, const std::string& v) { c.hp.mu = parse_double(v); }},
      {"clip_norm", [](RunConfig& c, const std::string& v) { c.hp.clip_norm = parse_double(v); }},
      {"subset_fraction",
       [](RunConfig& c, const std::string& v) { c.hp.subset_fraction = parse_double(v); }},
      {"teacher_steps", [](RunConfig& c, const std::string& v) { c.teacher_steps = parse_int(v); }},
      {"teacher_lr", [](RunConfig& c, const std::string& v) { c.teacher_lr = parse_double(v); }},
      {"knn_k", [](RunConfig& c, const std::string& v) { c.knn_k = parse_int(v); }},
  };
  auto it = setters.find(key);
  if (it == setters.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
  try {
    it->second(cfg, value);
  } catch (const std::exception& e) {
    throw std::invalid_argument("config: bad value for '" + key + "': " + e.what());
  }
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("config: cannot open " + path);
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: missing '=' at " + path + ":" + std::to_string(lineno));
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw std::invalid_argument("config: empty key or value at " + path + ":" +
                                  std::to_string(lineno));
    apply_config_entry(cfg, key, value);
  }
}

}  // namespace uvt
