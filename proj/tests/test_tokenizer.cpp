#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "uvt/common.hpp"
#include "uvt/tokenizer.hpp"

using namespace uvt;

TEST_CASE("build_vocab counts specials plus distinct characters") {
  Vocabulary v = build_vocab({"ab"});
  CHECK(v.size() == 7);
  CHECK(v.id_to_token[0] == "<pad>");
  CHECK(v.id_to_token[1] == "<bos>");
  CHECK(v.id_to_token[2] == "<eos>");
  CHECK(v.id_to_token[3] == "<img>");
  CHECK(v.id_to_token[4] == "</img>");
  CHECK(v.id_to_token[5] == "a");
  CHECK(v.id_to_token[6] == "b");
}

TEST_CASE("build_vocab rejects an empty corpus") {
  CHECK_THROWS_AS(build_vocab({}), std::invalid_argument);
  CHECK_THROWS_AS(build_vocab({"", ""}), std::invalid_argument);
}

TEST_CASE("build_vocab is order-independent") {
  Vocabulary a = build_vocab({"cat", "act"});
  Vocabulary b = build_vocab({"act", "cat"});
  CHECK(a.id_to_token == b.id_to_token);
}

TEST_CASE("vocabulary maps are exact inverses") {
  Vocabulary v = build_vocab({"hello world"});
  for (int i = 0; i < v.size(); ++i) CHECK(v.token_to_id.at(v.id_to_token[i]) == i);
}

TEST_CASE("encode basics") {
  Vocabulary v = build_vocab({"ab"});
  CHECK(encode("", v).empty());
  int id_a = v.char_id('a');
  TokenSequence s = encode("aa", v);
  REQUIRE(s.size() == 2);
  CHECK(s[0] == id_a);
  CHECK(s[1] == id_a);
  CHECK_THROWS_AS(encode("az", v), std::invalid_argument);
}

TEST_CASE("encode emits no special ids and preserves length") {
  Vocabulary v = build_vocab({"hello world"});
  TokenSequence s = encode("hello world", v);
  CHECK(s.size() == 11);
  for (int id : s) CHECK_FALSE(v.is_special(id));
}

TEST_CASE("decode strips PAD/BOS/EOS and inverts encode") {
  Vocabulary v = build_vocab({"hello world"});
  CHECK(decode(encode("hello world", v), v) == "hello world");
  TokenSequence s = {kBos, v.char_id('h'), kEos};
  CHECK(decode(s, v) == "h");
  CHECK(decode({}, v).empty());
  CHECK_THROWS_AS(decode({999}, v), std::out_of_range);
}

TEST_CASE("encode-decode idempotent on plain sequences") {
  Vocabulary v = build_vocab({"abcxyz"});
  TokenSequence s = encode("zyxabc", v);
  CHECK(encode(decode(s, v), v) == s);
}

TEST_CASE("round trip holds for random strings over the alphabet") {
  Vocabulary v = build_vocab({"abcdefgh "});
  const std::string alphabet = "abcdefgh ";
  Rng rng = make_rng(42);
  for (int t = 0; t < 200; ++t) {
    int len = rng_int(rng, 0, 40);
    std::string s;
    for (int i = 0; i < len; ++i) s += alphabet[rng_int(rng, 0, (int)alphabet.size() - 1)];
    CHECK(decode(encode(s, v), v) == s);
  }
}

TEST_CASE("prompt layout matches the instruction format") {
  Vocabulary v = build_vocab({std::string(kOcrInstruction), std::string(kCaptionInstruction)});

  PromptSpec ocr = build_prompt(TaskKind::kOcr, 16, v);
  TokenSequence layout = ocr.layout();
  REQUIRE(layout.size() == 16 + 2 + ocr.instruction_ids.size());
  CHECK(layout.front() == kImgStart);
  for (int i = 1; i <= 16; ++i) CHECK(layout[i] == kVisualSlot);
  CHECK(layout[17] == kImgEnd);
  CHECK(decode(ocr.instruction_ids, v) == "Read the text in this image:");

  PromptSpec cap = build_prompt(TaskKind::kCaption, 16, v);
  CHECK(decode(cap.instruction_ids, v) == "Give a caption of this image:");
  CHECK(cap.layout().size() == 16 + 2 + cap.instruction_ids.size());

  CHECK_THROWS_AS(build_prompt(TaskKind::kOcr, 0, v), std::invalid_argument);
}

TEST_CASE("prompt length law holds for assorted visual counts") {
  Vocabulary v = build_vocab({std::string(kOcrInstruction), std::string(kCaptionInstruction)});
  for (int n : {1, 3, 16, 64}) {
    PromptSpec p = build_prompt(TaskKind::kCaption, n, v);
    CHECK(p.length() == n + 2 + (int)p.instruction_ids.size());
    CHECK((int)p.layout().size() == p.length());
  }
}

TEST_CASE("vocabulary file round trip") {
  Vocabulary v = build_vocab({"hello world", std::string(kOcrInstruction)});
  std::string path = (std::filesystem::temp_directory_path() / "uvt_vocab_test.txt").string();
  save_vocab(v, path);
  Vocabulary w = load_vocab(path);
  CHECK(v.id_to_token == w.id_to_token);
  CHECK(w.token_to_id.at(" ") == v.token_to_id.at(" "));
  std::filesystem::remove(path);
}
