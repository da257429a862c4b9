#pragma once

// RGB image containers and 8-bit PPM (P6) I/O.

#include <cstdint>
#include <string>
#include <vector>

namespace uvt {

// H x W x 3, interleaved RGB, values in [0,1].
struct ImageTensor {
  int h = 0;
  int w = 0;
  std::vector<float> px;

  static ImageTensor filled(int h, int w, float r, float g, float b);
  float& at(int y, int x, int c) { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }
  float at(int y, int x, int c) const { return px[(static_cast<size_t>(y) * w + x) * 3 + c]; }
  void set(int y, int x, float r, float g, float b);
};

// 8-bit counterpart used for on-disk and in-memory corpus storage.
struct ImageU8 {
  int h = 0;
  int w = 0;
  std::vector<uint8_t> px;
};

ImageU8 to_u8(const ImageTensor& img);      // round(v*255)
ImageTensor to_float(const ImageU8& img);   // v/255

void write_ppm(const ImageU8& img, const std::string& path);
ImageU8 read_ppm(const std::string& path);

// Integer nearest-neighbour upscale (pixel replication). factor >= 1.
ImageU8 upscale(const ImageU8& img, int factor);

// Upscale to a square target side; side must be a positive multiple of the
// source side. Throws std::invalid_argument otherwise.
ImageU8 scale_to_side(const ImageU8& img, int side);

}  // namespace uvt
