#include "uvt/image.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace uvt {

ImageTensor ImageTensor::filled(int h, int w, float r, float g, float b) {
  ImageTensor img;
  img.h = h;
  img.w = w;
  img.px.resize(static_cast<size_t>(h) * w * 3);
  for (size_t i = 0; i < img.px.size(); i += 3) {
    img.px[i] = r;
    img.px[i + 1] = g;
    img.px[i + 2] = b;
  }
  return img;
}

void ImageTensor::set(int y, int x, float r, float g, float b) {
  at(y, x, 0) = r;
  at(y, x, 1) = g;
  at(y, x, 2) = b;
}

ImageU8 to_u8(const ImageTensor& img) {
  ImageU8 out;
  out.h = img.h;
  out.w = img.w;
  out.px.resize(img.px.size());
  for (size_t i = 0; i < img.px.size(); ++i) {
    float v = img.px[i];
    v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
    out.px[i] = static_cast<uint8_t>(std::lround(v * 255.f));
  }
  return out;
}

ImageTensor to_float(const ImageU8& img) {
  ImageTensor out;
  out.h = img.h;
  out.w = img.w;
  out.px.resize(img.px.size());
  for (size_t i = 0; i < img.px.size(); ++i) out.px[i] = img.px[i] / 255.f;
  return out;
}

void write_ppm(const ImageU8& img, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("write_ppm: cannot open " + path);
  f << "P6\n" << img.w << " " << img.h << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
  if (!f) throw std::runtime_error("write_ppm: write failed " + path);
}

ImageU8 read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("read_ppm: cannot open " + path);
  std::string magic;
  f >> magic;
  if (magic != "P6") throw std::runtime_error("read_ppm: not a P6 file: " + path);
  int w = 0, h = 0, maxv = 0;
  f >> w >> h >> maxv;
  if (w <= 0 || h <= 0 || maxv != 255) throw std::runtime_error("read_ppm: bad header: " + path);
  f.get();  // single whitespace after header
  ImageU8 img;
  img.w = w;
  img.h = h;
  img.px.resize(static_cast<size_t>(w) * h * 3);
  f.read(reinterpret_cast<char*>(img.px.data()), static_cast<std::streamsize>(img.px.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.px.size()))
    throw std::runtime_error("read_ppm: truncated file: " + path);
  return img;
}

ImageU8 upscale(const ImageU8& img, int factor) {
  if (factor < 1) throw std::invalid_argument("upscale: factor must be >= 1");
  if (factor == 1) return img;
  ImageU8 out;
  out.h = img.h * factor;
  out.w = img.w * factor;
  out.px.resize(static_cast<size_t>(out.h) * out.w * 3);
  for (int y = 0; y < out.h; ++y) {
    int sy = y / factor;
    for (int x = 0; x < out.w; ++x) {
      int sx = x / factor;
      for (int c = 0; c < 3; ++c)
        out.px[(static_cast<size_t>(y) * out.w + x) * 3 + c] =
            img.px[(static_cast<size_t>(sy) * img.w + sx) * 3 + c];
    }
  }
  return out;
}

ImageU8 scale_to_side(const ImageU8& img, int side) {
  if (img.h != img.w) throw std::invalid_argument("scale_to_side: source not square");
  if (side <= 0 || side % img.h != 0)
    throw std::invalid_argument("scale_to_side: side " + std::to_string(side) +
                                " is not a multiple of source side " + std::to_string(img.h));
  return upscale(img, side / img.h);
}

}  // namespace uvt
