#pragma once

// Built-in fixed 5x7 bitmap glyph set used by the document renderer.

#include <array>
#include <cstdint>
#include <string>

namespace uvt {

constexpr int kGlyphW = 5;
constexpr int kGlyphH = 7;

// One glyph: 7 rows, low 5 bits per row, MSB-left (bit 4 = leftmost column).
struct Glyph {
  std::array<uint8_t, kGlyphH> rows{};
  bool pixel(int y, int x) const { return (rows[y] >> (kGlyphW - 1 - x)) & 1; }
};

// Returns true and fills g if c is renderable (a-z, 0-9, '.', ',', ':', ' ').
bool lookup_glyph(char c, Glyph& g);
bool has_glyph(char c);

// All characters with a glyph, in code-point order.
std::string renderable_chars();

}  // namespace uvt
