#pragma once

// Character-level tokenizer with special tokens and instruction prompt
// construction.

#include <string>
#include <unordered_map>
#include <vector>

namespace uvt {

// Fixed special-token ids; kept stable so checkpoints stay portable.
enum SpecialToken : int {
  kPad = 0,
  kBos = 1,
  kEos = 2,
  kImgStart = 3,  // "<img>"
  kImgEnd = 4,    // "</img>"
};
constexpr int kNumSpecials = 5;

// Sentinel used in prompt layouts to mark a visual-slot position that is
// filled with a query embedding rather than a token id.
constexpr int kVisualSlot = -1;

enum class TaskKind { kCaption, kOcr };

const char* task_name(TaskKind t);
TaskKind task_from_name(const std::string& name);

// Instruction strings, stored byte-exact including the trailing colon.
extern const char* const kCaptionInstruction;  // "Give a caption of this image:"
extern const char* const kOcrInstruction;      // "Read the text in this image:"

struct Vocabulary {
  std::vector<std::string> id_to_token;
  std::unordered_map<std::string, int> token_to_id;

  int size() const { return static_cast<int>(id_to_token.size()); }
  bool is_special(int id) const { return id >= 0 && id < kNumSpecials; }

  // Single-character lookup; returns -1 if absent.
  int char_id(char c) const;
};

using TokenSequence = std::vector<int>;

// Prefix-token layout for one task: IMG_START, n_visual slots, IMG_END,
// instruction token ids.
struct PromptSpec {
  TaskKind task;
  int n_visual = 0;
  TokenSequence instruction_ids;

  // Full layout with kVisualSlot sentinels at the query positions.
  TokenSequence layout() const;
  int length() const { return n_visual + 2 + static_cast<int>(instruction_ids.size()); }
};

// Vocabulary = 5 specials followed by every character of the corpus in
// code-point order. Throws std::invalid_argument on an empty corpus.
Vocabulary build_vocab(const std::vector<std::string>& corpus_texts);

// Throws std::invalid_argument naming the character if it is not in vocab.
TokenSequence encode(const std::string& text, const Vocabulary& vocab);

// Inverse of encode on plain text; PAD/BOS/EOS are stripped, any other id
// renders as its token string. Throws std::out_of_range on invalid ids.
std::string decode(const TokenSequence& ids, const Vocabulary& vocab);

// Throws std::invalid_argument if n_visual < 1 or the instruction contains
// characters missing from vocab.
PromptSpec build_prompt(TaskKind task, int n_visual, const Vocabulary& vocab);

// One token per line, specials first. Lines are written/read verbatim, so
// the single-space token round-trips.
void save_vocab(const Vocabulary& vocab, const std::string& path);
Vocabulary load_vocab(const std::string& path);

}  // namespace uvt
