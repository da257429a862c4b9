#include "uvt/glyphs.hpp"

#include <map>
#include <stdexcept>

namespace uvt {
namespace {

struct GlyphDef {
  char c;
  const char* rows[kGlyphH];  // '#' = ink, '.' = blank
};

// clang-format off
const GlyphDef kGlyphDefs[] = {
  {' ', {".....",
         ".....",
         ".....",
         ".....",
         ".....",
         ".....",
         "....."}},
  {'a', {".....",
         ".....",
         ".###.",
         "....#",
         ".####",
         "#...#",
         ".####"}},
  {'b', {"#....",
         "#....",
         "#.##.",
         "##..#",
         "#...#",
         "#...#",
         "####."}},
  {'c', {".....",
         ".....",
         ".###.",
         "#....",
         "#....",
         "#...#",
         ".###."}},
  {'d', {"....#",
         "....#",
         ".##.#",
         "#..##",
         "#...#",
         "#...#",
         ".####"}},
  {'e', {".....",
         ".....",
         ".###.",
         "#...#",
         "#####",
         "#....",
         ".###."}},
  {'f', {"..##.",
         ".#..#",
         ".#...",
         "###..",
         ".#...",
         ".#...",
         ".#..."}},
  {'g', {".....",
         ".####",
         "#...#",
         "#...#",
         ".####",
         "....#",
         ".###."}},
  {'h', {"#....",
         "#....",
         "#.##.",
         "##..#",
         "#...#",
         "#...#",
         "#...#"}},
  {'i', {"..#..",
         ".....",
         ".##..",
         "..#..",
         "..#..",
         "..#..",
         ".###."}},
  {'j', {"...#.",
         ".....",
         "..##.",
         "...#.",
         "...#.",
         "#..#.",
         ".##.."}},
  {'k', {"#....",
         "#....",
         "#..#.",
         "#.#..",
         "##...",
         "#.#..",
         "#..#."}},
  {'l', {".##..",
         "..#..",
         "..#..",
         "..#..",
         "..#..",
         "..#..",
         ".###."}},
  {'m', {".....",
         ".....",
         "##.#.",
         "#.#.#",
         "#.#.#",
         "#.#.#",
         "#.#.#"}},
  {'n', {".....",
         ".....",
         "#.##.",
         "##..#",
         "#...#",
         "#...#",
         "#...#"}},
  {'o', {".....",
         ".....",
         ".###.",
         "#...#",
         "#...#",
         "#...#",
         ".###."}},
  {'p', {".....",
         "####.",
         "#...#",
         "#...#",
         "####.",
         "#....",
         "#...."}},
  {'q', {".....",
         ".####",
         "#...#",
         "#...#",
         ".####",
         "....#",
         "....#"}},
  {'r', {".....",
         ".....",
         "#.##.",
         "##..#",
         "#....",
         "#....",
         "#...."}},
  {'s', {".....",
         ".....",
         ".####",
         "#....",
         ".###.",
         "....#",
         "####."}},
  {'t', {".#...",
         ".#...",
         "###..",
         ".#...",
         ".#...",
         ".#..#",
         "..##."}},
  {'u', {".....",
         ".....",
         "#...#",
         "#...#",
         "#...#",
         "#..##",
         ".##.#"}},
  {'v', {".....",
         ".....",
         "#...#",
         "#...#",
         "#...#",
         ".#.#.",
         "..#.."}},
  {'w', {".....",
         ".....",
         "#...#",
         "#...#",
         "#.#.#",
         "#.#.#",
         ".#.#."}},
  {'x', {".....",
         ".....",
         "#...#",
         ".#.#.",
         "..#..",
         ".#.#.",
         "#...#"}},
  {'y', {".....",
         "#...#",
         "#...#",
         ".####",
         "....#",
         "#...#",
         ".###."}},
  {'z', {".....",
         ".....",
         "#####",
         "...#.",
         "..#..",
         ".#...",
         "#####"}},
  {'0', {".###.",
         "#...#",
         "#..##",
         "#.#.#",
         "##..#",
         "#...#",
         ".###."}},
  {'1', {"..#..",
         ".##..",
         "..#..",
         "..#..",
         "..#..",
         "..#..",
         ".###."}},
  {'2', {".###.",
         "#...#",
         "....#",
         "...#.",
         "..#..",
         ".#...",
         "#####"}},
  {'3', {"#####",
         "...#.",
         "..#..",
         "...#.",
         "....#",
         "#...#",
         ".###."}},
  {'4', {"...#.",
         "..##.",
         ".#.#.",
         "#..#.",
         "#####",
         "...#.",
         "...#."}},
  {'5', {"#####",
         "#....",
         "####.",
         "....#",
         "....#",
         "#...#",
         ".###."}},
  {'6', {"..##.",
         ".#...",
         "#....",
         "####.",
         "#...#",
         "#...#",
         ".###."}},
  {'7', {"#####",
         "....#",
         "...#.",
         "..#..",
         "..#..",
         "..#..",
         "..#.."}},
  {'8', {".###.",
         "#...#",
         "#...#",
         ".###.",
         "#...#",
         "#...#",
         ".###."}},
  {'9', {".###.",
         "#...#",
         "#...#",
         ".####",
         "....#",
         "...#.",
         ".##.."}},
  {'.', {".....",
         ".....",
         ".....",
         ".....",
         ".....",
         ".##..",
         ".##.."}},
  {',', {".....",
         ".....",
         ".....",
         ".....",
         ".##..",
         "..#..",
         ".#..."}},
  {':', {".....",
         ".##..",
         ".##..",
         ".....",
         ".##..",
         ".##..",
         "....."}},
};
// clang-format on

const std::map<char, Glyph>& glyph_table() {
  static const std::map<char, Glyph> table = [] {
    std::map<char, Glyph> t;
    for (const auto& def : kGlyphDefs) {
      Glyph g;
      for (int y = 0; y < kGlyphH; ++y) {
        uint8_t bits = 0;
        for (int x = 0; x < kGlyphW; ++x) {
          char p = def.rows[y][x];
          if (p != '#' && p != '.') throw std::logic_error("bad glyph definition");
          bits = static_cast<uint8_t>((bits << 1) | (p == '#' ? 1 : 0));
        }
        g.rows[y] = bits;
      }
      t[def.c] = g;
    }
    return t;
  }();
  return table;
}

}  // namespace

bool lookup_glyph(char c, Glyph& g) {
  const auto& t = glyph_table();
  auto it = t.find(c);
  if (it == t.end()) return false;
  g = it->second;
  return true;
}

bool has_glyph(char c) {
  Glyph g;
  return lookup_glyph(c, g);
}

std::string renderable_chars() {
  std::string s;
  for (const auto& [c, g] : glyph_table()) s += c;
  return s;
}

}  // namespace uvt
