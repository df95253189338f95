#pragma once

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "moprior/core/error.hpp"
#include "moprior/core/image.hpp"
#include "moprior/metrics/report.hpp"

namespace moprior {

/// Minimal RGB canvas + PNG encoder (zlib deflate, filter 0). Enough for
/// best-effort box plots and example panels; the CSVs remain the contract.
class Canvas {
public:
  Canvas(int w, int h, std::uint8_t r = 255, std::uint8_t g = 255, std::uint8_t b = 255)
      : w_(w), h_(h), px_(static_cast<std::size_t>(w) * h * 3) {
    fill_rect(0, 0, w, h, r, g, b);
  }

  int width() const { return w_; }
  int height() const { return h_; }

  void set(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x < 0 || y < 0 || x >= w_ || y >= h_) return;
    const std::size_t i = (static_cast<std::size_t>(y) * w_ + x) * 3;
    px_[i] = r;
    px_[i + 1] = g;
    px_[i + 2] = b;
  }

  void fill_rect(int x, int y, int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    for (int yy = y; yy < y + h; ++yy)
      for (int xx = x; xx < x + w; ++xx) set(xx, yy, r, g, b);
  }

  void hline(int x0, int x1, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (x0 > x1) std::swap(x0, x1);
    for (int x = x0; x <= x1; ++x) set(x, y, r, g, b);
  }

  void vline(int x, int y0, int y1, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    if (y0 > y1) std::swap(y0, y1);
    for (int y = y0; y <= y1; ++y) set(x, y, r, g, b);
  }

  void rect(int x, int y, int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    hline(x, x + w - 1, y, r, g, b);
    hline(x, x + w - 1, y + h - 1, r, g, b);
    vline(x, y, y + h - 1, r, g, b);
    vline(x + w - 1, y, y + h - 1, r, g, b);
  }

  /// 5x7 glyphs for the small charset box plots need (digits, '.', '-', 'M').
  void draw_text(int x, int y, const std::string& text, std::uint8_t r = 0, std::uint8_t g = 0,
                 std::uint8_t b = 0) {
    for (const char c : text) {
      const std::uint8_t* glyph = glyph_for(c);
      if (glyph != nullptr)
        for (int row = 0; row < 7; ++row)
          for (int col = 0; col < 5; ++col)
            if (glyph[row] & (1 << (4 - col))) set(x + col, y + row, r, g, b);
      x += 6;
    }
  }

  void blit_gray(int x, int y, const Image2D<float>& img) {
    for (int r = 0; r < img.height; ++r)
      for (int c = 0; c < img.width; ++c) {
        const float v = std::clamp(img.at(r, c), 0.0f, 1.0f);
        const auto u = static_cast<std::uint8_t>(std::lround(v * 255.0));
        set(x + c, y + r, u, u, u);
      }
  }

  void save_png(const std::filesystem::path& path) const {
    // raw scanlines with filter byte 0
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(h_) * (static_cast<std::size_t>(w_) * 3 + 1));
    for (int y = 0; y < h_; ++y) {
      raw.push_back(0);
      const std::uint8_t* row = px_.data() + static_cast<std::size_t>(y) * w_ * 3;
      raw.insert(raw.end(), row, row + static_cast<std::size_t>(w_) * 3);
    }

    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
      throw IoError(IoErrc::write_failed, "PNG deflate failed");
    comp.resize(comp_len);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(IoErrc::write_failed, path.string());
    static const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.write(reinterpret_cast<const char*>(sig), 8);

    std::uint8_t ihdr[13];
    put_be32(ihdr, static_cast<std::uint32_t>(w_));
    put_be32(ihdr + 4, static_cast<std::uint32_t>(h_));
    ihdr[8] = 8;  // bit depth
    ihdr[9] = 2;  // truecolor
    ihdr[10] = ihdr[11] = ihdr[12] = 0;
    write_chunk(out, "IHDR", ihdr, 13);
    write_chunk(out, "IDAT", comp.data(), comp.size());
    write_chunk(out, "IEND", nullptr, 0);
    if (!out) throw IoError(IoErrc::write_failed, path.string());
  }

private:
  static void put_be32(std::uint8_t* p, std::uint32_t v) {
    p[0] = static_cast<std::uint8_t>(v >> 24);
    p[1] = static_cast<std::uint8_t>(v >> 16);
    p[2] = static_cast<std::uint8_t>(v >> 8);
    p[3] = static_cast<std::uint8_t>(v);
  }

  static void write_chunk(std::ofstream& out, const char* type, const std::uint8_t* data,
                          std::size_t len) {
    std::uint8_t head[8];
    put_be32(head, static_cast<std::uint32_t>(len));
    std::memcpy(head + 4, type, 4);
    out.write(reinterpret_cast<const char*>(head), 8);
    if (len > 0) out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(len));
    uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(type), 4);
    if (len > 0) crc = crc32(crc, data, static_cast<uInt>(len));
    std::uint8_t tail[4];
    put_be32(tail, static_cast<std::uint32_t>(crc));
    out.write(reinterpret_cast<const char*>(tail), 4);
  }

  static const std::uint8_t* glyph_for(char c) {
    static const std::uint8_t digits[10][7] = {
        {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}, // 0
        {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}, // 1
        {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}, // 2
        {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}, // 3
        {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}, // 4
        {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}, // 5
        {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}, // 6
        {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}, // 7
        {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}, // 8
        {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}, // 9
    };
    static const std::uint8_t dot[7] = {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C};
    static const std::uint8_t dash[7] = {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00};
    static const std::uint8_t em[7] = {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11};
    if (c >= '0' && c <= '9') return digits[c - '0'];
    if (c == '.') return dot;
    if (c == '-') return dash;
    if (c == 'M') return em;
    return nullptr; // unsupported characters advance the cursor only
  }

  int w_, h_;
  std::vector<std::uint8_t> px_;
};

/// Box plot of per-method SSIM summaries. Boxes are labelled M0, M1, ... in
/// row order; callers emit the label -> method mapping alongside.
inline void render_boxplot(const Comparison& comparison, const std::filesystem::path& path) {
  const int n = static_cast<int>(comparison.rows.size());
  if (n == 0) throw ConfigError("render_boxplot: no rows");
  const int left = 88;
  const int per = 84;
  const int width = left + per * n + 24;
  const int height = 420;
  const int top = 24;
  const int bottom = height - 44;
  Canvas cv(width, height);

  double lo = comparison.rows.front().output.min;
  double hi = comparison.rows.front().output.max;
  for (const auto& r : comparison.rows) {
    lo = std::min(lo, r.output.min);
    hi = std::max(hi, r.output.max);
  }
  double pad = (hi - lo) * 0.08;
  if (pad <= 0.0) pad = 0.01;
  lo -= pad;
  hi += pad;

  const auto y_of = [&](double v) {
    return static_cast<int>(std::lround(bottom - (v - lo) / (hi - lo) * (bottom - top)));
  };

  // axes and ticks
  cv.vline(left, top, bottom, 0, 0, 0);
  cv.hline(left, width - 16, bottom, 0, 0, 0);
  for (int t = 0; t <= 5; ++t) {
    const double v = lo + (hi - lo) * t / 5.0;
    const int y = y_of(v);
    cv.hline(left - 4, left, y, 0, 0, 0);
    char label[16];
    std::snprintf(label, sizeof(label), "%.3f", v);
    cv.draw_text(left - 4 - 6 * static_cast<int>(std::strlen(label)), y - 3, label);
  }

  for (int i = 0; i < n; ++i) {
    const Summary& s = comparison.rows[static_cast<std::size_t>(i)].output;
    const int cx = left + per * i + per / 2;
    const int half = 24;
    // whiskers
    cv.vline(cx, y_of(s.max), y_of(s.q3), 0, 0, 0);
    cv.vline(cx, y_of(s.q1), y_of(s.min), 0, 0, 0);
    cv.hline(cx - half / 2, cx + half / 2, y_of(s.max), 0, 0, 0);
    cv.hline(cx - half / 2, cx + half / 2, y_of(s.min), 0, 0, 0);
    // box
    const int yq3 = y_of(s.q3);
    const int yq1 = y_of(s.q1);
    cv.fill_rect(cx - half, yq3, 2 * half + 1, std::max(1, yq1 - yq3), 176, 204, 229);
    cv.rect(cx - half, yq3, 2 * half + 1, std::max(2, yq1 - yq3 + 1), 0, 0, 0);
    // median
    cv.hline(cx - half, cx + half, y_of(s.median), 200, 32, 32);
    // label
    char label[16];
    std::snprintf(label, sizeof(label), "M%d", i);
    cv.draw_text(cx - 6, bottom + 8, label);
  }
  cv.save_png(path);
}

/// Horizontal montage of grayscale panels with thin separators.
inline void render_panel(const std::vector<Image2D<float>>& panels,
                         const std::filesystem::path& path) {
  if (panels.empty()) throw ConfigError("render_panel: no panels");
  const int h = panels.front().height;
  int total_w = 0;
  for (const auto& p : panels) {
    if (p.height != h) throw ShapeError("render_panel: panel heights differ");
    total_w += p.width;
  }
  const int gap = 2;
  Canvas cv(total_w + gap * (static_cast<int>(panels.size()) - 1), h, 255, 255, 255);
  int x = 0;
  for (const auto& p : panels) {
    cv.blit_gray(x, 0, p);
    x += p.width + gap;
  }
  cv.save_png(path);
}

} // namespace moprior
