#include "uvt/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

namespace uvt {

const char* const kCaptionInstruction = "Give a caption of this image:";
const char* const kOcrInstruction = "Read the text in this image:";

static const char* kSpecialNames[kNumSpecials] = {"<pad>", "<bos>", "<eos>", "<img>", "</img>"};

const char* task_name(TaskKind t) { return t == TaskKind::kCaption ? "caption" : "ocr"; }

TaskKind task_from_name(const std::string& name) {
  if (name == "caption") return TaskKind::kCaption;
  if (name == "ocr") return TaskKind::kOcr;
  throw std::invalid_argument("unknown task: " + name);
}

int Vocabulary::char_id(char c) const {
  auto it = token_to_id.find(std::string(1, c));
  return it == token_to_id.end() ? -1 : it->second;
}

TokenSequence PromptSpec::layout() const {
  TokenSequence out;
  out.reserve(length());
  out.push_back(kImgStart);
  out.insert(out.end(), n_visual, kVisualSlot);
  out.push_back(kImgEnd);
  out.insert(out.end(), instruction_ids.begin(), instruction_ids.end());
  return out;
}

Vocabulary build_vocab(const std::vector<std::string>& corpus_texts) {
  std::set<char> chars;
  for (const auto& t : corpus_texts)
    for (char c : t) chars.insert(c);
  if (chars.empty()) throw std::invalid_argument("build_vocab: empty corpus");

  Vocabulary v;
  for (int i = 0; i < kNumSpecials; ++i) v.id_to_token.emplace_back(kSpecialNames[i]);
  for (char c : chars) v.id_to_token.emplace_back(1, c);
  for (int i = 0; i < v.size(); ++i) v.token_to_id[v.id_to_token[i]] = i;
  return v;
}

TokenSequence encode(const std::string& text, const Vocabulary& vocab) {
  TokenSequence ids;
  ids.reserve(text.size());
  for (char c : text) {
    int id = vocab.char_id(c);
    if (id < 0) throw std::invalid_argument(std::string("encode: unknown character '") + c + "'");
    ids.push_back(id);
  }
  return ids;
}

std::string decode(const TokenSequence& ids, const Vocabulary& vocab) {
  std::string out;
  for (int id : ids) {
    if (id < 0 || id >= vocab.size()) throw std::out_of_range("decode: id out of range: " + std::to_string(id));
    if (id == kPad || id == kBos || id == kEos) continue;
    out += vocab.id_to_token[id];
  }
  return out;
}

PromptSpec build_prompt(TaskKind task, int n_visual, const Vocabulary& vocab) {
  if (n_visual < 1) throw std::invalid_argument("build_prompt: n_visual must be positive");
  PromptSpec p;
  p.task = task;
  p.n_visual = n_visual;
  const char* instr = task == TaskKind::kCaption ? kCaptionInstruction : kOcrInstruction;
  p.instruction_ids = encode(instr, vocab);
  return p;
}

void save_vocab(const Vocabulary& vocab, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_vocab: cannot open " + path);
  for (const auto& t : vocab.id_to_token) f << t << '\n';
}

Vocabulary load_vocab(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_vocab: cannot open " + path);
  Vocabulary v;
  std::string line;
  while (std::getline(f, line)) v.id_to_token.push_back(line);
  if (static_cast<int>(v.id_to_token.size()) < kNumSpecials)
    throw std::runtime_error("load_vocab: file too short: " + path);
  for (int i = 0; i < kNumSpecials; ++i)
    if (v.id_to_token[i] != kSpecialNames[i])
      throw std::runtime_error("load_vocab: bad special token at line " + std::to_string(i));
  for (int i = 0; i < v.size(); ++i) v.token_to_id[v.id_to_token[i]] = i;
  return v;
}

}  // namespace uvt
