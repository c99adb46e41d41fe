#include "vidcorr/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "vidcorr/archive.hpp"
#include "vidcorr/errors.hpp"

namespace vidcorr {

namespace {

// ---- sRGB <-> CIE Lab (D65) --------------------------------------------------

constexpr double kXn = 0.95047, kYn = 1.0, kZn = 1.08883;

double srgb_to_linear(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double c) {
  return c <= 0.0031308 ? c * 12.92 : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

double lab_f(double t) {
  constexpr double d = 6.0 / 29.0;
  return t > d * d * d ? std::cbrt(t) : t / (3.0 * d * d) + 4.0 / 29.0;
}

double lab_f_inv(double t) {
  constexpr double d = 6.0 / 29.0;
  return t > d ? t * t * t : 3.0 * d * d * (t - 4.0 / 29.0);
}

void rgb_to_lab_pixel(const double* rgb, double* lab) {
  const double r = srgb_to_linear(rgb[0]);
  const double g = srgb_to_linear(rgb[1]);
  const double b = srgb_to_linear(rgb[2]);
  const double x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
  const double y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
  const double z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
  const double fx = lab_f(x / kXn), fy = lab_f(y / kYn), fz = lab_f(z / kZn);
  lab[0] = 116.0 * fy - 16.0;
  lab[1] = 500.0 * (fx - fy);
  lab[2] = 200.0 * (fy - fz);
}

void lab_to_rgb_pixel(const double* lab, double* rgb) {
  const double fy = (lab[0] + 16.0) / 116.0;
  const double fx = fy + lab[1] / 500.0;
  const double fz = fy - lab[2] / 200.0;
  const double x = kXn * lab_f_inv(fx);
  const double y = kYn * lab_f_inv(fy);
  const double z = kZn * lab_f_inv(fz);
  const double r = 3.2404542 * x - 1.5371385 * y - 0.4985314 * z;
  const double g = -0.9692660 * x + 1.8760108 * y + 0.0415560 * z;
  const double b = 0.0556434 * x - 0.2040259 * y + 1.0572252 * z;
  rgb[0] = std::clamp(linear_to_srgb(r), 0.0, 1.0);
  rgb[1] = std::clamp(linear_to_srgb(g), 0.0, 1.0);
  rgb[2] = std::clamp(linear_to_srgb(b), 0.0, 1.0);
}

void require_hwc3(const Tensor& t, const char* op) {
  if (t.rank() != 3 || t.shape()[2] != 3) {
    throw ShapeError(std::string(op) + ": expected (H,W,3), got " + shape_str(t.shape()));
  }
}

// ---- procedural textures -------------------------------------------------------

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double hash01(std::uint64_t x) {
  return static_cast<double>(mix64(x) >> 11) * 0x1.0p-53;
}

struct TextureParams {
  int kind;            // 0 checker, 1 sinusoid, 2 value noise
  double scale;
  double phase_x, phase_y;
  double col_a[3], col_b[3];
};

TextureParams texture_params(int class_id, std::uint64_t phase_seed, double scale_mul = 1.0) {
  TextureParams p;
  const std::uint64_t h = mix64(static_cast<std::uint64_t>(class_id) * 0x5851f42d4c957f2dULL + 7);
  p.kind = static_cast<int>(h % 3);
  p.scale = (3.0 + static_cast<double>(mix64(h + 1) % 6)) * scale_mul;
  p.phase_x = hash01(phase_seed * 3 + 1) * p.scale;
  p.phase_y = hash01(phase_seed * 3 + 2) * p.scale;
  for (int c = 0; c < 3; ++c) {
    p.col_a[c] = 0.1 + 0.8 * hash01(h + 10 + static_cast<std::uint64_t>(c));
    p.col_b[c] = 0.1 + 0.8 * hash01(h + 20 + static_cast<std::uint64_t>(c));
  }
  return p;
}

double noise_lattice(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
  return hash01(seed ^ (static_cast<std::uint64_t>(ix) * 0x9e3779b1ULL) ^
                (static_cast<std::uint64_t>(iy) * 0x85ebca77ULL));
}

// Blend factor in [0,1] at continuous texture coordinates; the texture is an
// analytic function so rigid translation of coordinates moves it exactly.
double texture_value(const TextureParams& p, std::uint64_t seed, double x, double y) {
  const double u = (x + p.phase_x) / p.scale;
  const double v = (y + p.phase_y) / p.scale;
  switch (p.kind) {
    case 0: {
      const auto cu = static_cast<std::int64_t>(std::floor(u));
      const auto cv = static_cast<std::int64_t>(std::floor(v));
      return ((cu + cv) % 2 + 2) % 2 == 0 ? 0.0 : 1.0;
    }
    case 1:
      return 0.5 + 0.5 * std::sin(2.0 * M_PI * (u + 0.7 * v));
    default: {
      const auto iu = static_cast<std::int64_t>(std::floor(u));
      const auto iv = static_cast<std::int64_t>(std::floor(v));
      const double fu = u - static_cast<double>(iu);
      const double fv = v - static_cast<double>(iv);
      const double n00 = noise_lattice(seed, iu, iv);
      const double n10 = noise_lattice(seed, iu + 1, iv);
      const double n01 = noise_lattice(seed, iu, iv + 1);
      const double n11 = noise_lattice(seed, iu + 1, iv + 1);
      return (n00 * (1 - fu) + n10 * fu) * (1 - fv) + (n01 * (1 - fu) + n11 * fu) * fv;
    }
  }
}

void texture_color(const TextureParams& p, std::uint64_t seed, double x, double y, double* rgb) {
  const double t = texture_value(p, seed, x, y);
  for (int c = 0; c < 3; ++c) rgb[c] = p.col_a[c] + (p.col_b[c] - p.col_a[c]) * t;
}

// ---- sprites --------------------------------------------------------------------

struct Sprite {
  int id;
  int shape;  // 0 square, 1 disk
  double half;
  TextureParams tex;
  std::uint64_t tex_seed;
  double x, y;    // center
  double vx, vy;  // displacement applied between consecutive frames
  bool wraps = false;  // occluder sweeps, others bounce
};

bool sprite_covers(const Sprite& s, double px, double py) {
  const double dx = px - s.x, dy = py - s.y;
  if (s.shape == 0) return std::abs(dx) <= s.half && std::abs(dy) <= s.half;
  return dx * dx + dy * dy <= s.half * s.half;
}

}  // namespace

// ---- color api ------------------------------------------------------------------

Tensor rgb_to_lab(const Tensor& rgb) {
  require_hwc3(rgb, "rgb_to_lab");
  for (double v : rgb.data()) {
    if (v < 0.0 || v > 1.0) {
      throw std::invalid_argument("rgb_to_lab: input outside [0,1]");
    }
  }
  std::vector<double> out(rgb.data().size());
  const auto in = rgb.data();
  for (std::size_t i = 0; i < in.size(); i += 3) rgb_to_lab_pixel(&in[i], &out[i]);
  return Tensor::from_data(rgb.shape(), std::move(out));
}

Tensor lab_to_rgb(const Tensor& lab) {
  require_hwc3(lab, "lab_to_rgb");
  std::vector<double> out(lab.data().size());
  const auto in = lab.data();
  for (std::size_t i = 0; i < in.size(); i += 3) lab_to_rgb_pixel(&in[i], &out[i]);
  return Tensor::from_data(lab.shape(), std::move(out));
}

Tensor lab_normalize(const Tensor& lab, const LabNormalization& n) {
  require_hwc3(lab, "lab_normalize");
  std::vector<double> out(lab.data().size());
  const auto in = lab.data();
  const double c[3] = {n.l_center, n.a_center, n.b_center};
  const double s[3] = {n.l_scale, n.a_scale, n.b_scale};
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = (in[i] - c[i % 3]) / s[i % 3];
  return Tensor::from_data(lab.shape(), std::move(out));
}

Tensor lab_denormalize(const Tensor& norm, const LabNormalization& n) {
  require_hwc3(norm, "lab_denormalize");
  std::vector<double> out(norm.data().size());
  const auto in = norm.data();
  const double c[3] = {n.l_center, n.a_center, n.b_center};
  const double s[3] = {n.l_scale, n.a_scale, n.b_scale};
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * s[i % 3] + c[i % 3];
  return Tensor::from_data(norm.shape(), std::move(out));
}

Tensor zero_channel(const Tensor& frame, int channel) {
  require_hwc3(frame, "zero_channel");
  if (channel < 0 || channel > 2) throw std::invalid_argument("zero_channel: channel out of range");
  std::vector<double> out(frame.data().begin(), frame.data().end());
  for (std::size_t i = static_cast<std::size_t>(channel); i < out.size(); i += 3) out[i] = 0.0;
  return Tensor::from_data(frame.shape(), std::move(out));
}

// ---- pyramids --------------------------------------------------------------------

Tensor frame_downsample(const Tensor& frame, int stride) {
  if (frame.rank() != 3) {
    throw ShapeError("frame_downsample: expected (H,W,C), got " + shape_str(frame.shape()));
  }
  const std::int64_t H = frame.shape()[0], W = frame.shape()[1], C = frame.shape()[2];
  if (stride < 1) throw std::invalid_argument("frame_downsample: stride must be >= 1");
  if (H % stride != 0 || W % stride != 0) {
    throw ShapeError("frame_downsample: extents " + shape_str(frame.shape()) +
                     " not divisible by stride " + std::to_string(stride));
  }
  const std::int64_t h = H / stride, w = W / stride, off = stride / 2;
  std::vector<double> out(static_cast<std::size_t>(h * w * C));
  const auto in = frame.data();
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const std::int64_t sy = y * stride + off, sx = x * stride + off;
      for (std::int64_t c = 0; c < C; ++c) {
        out[static_cast<std::size_t>((y * w + x) * C + c)] = in[(sy * W + sx) * C + c];
      }
    }
  }
  return Tensor::from_data({h, w, C}, std::move(out));
}

FramePyramid frame_pyramid(const Tensor& frame, const std::vector<int>& strides) {
  FramePyramid p;
  for (int s : strides) p.levels.push_back(frame_downsample(frame, s));
  return p;
}

IntGrid label_downsample(const IntGrid& labels, int stride) {
  if (labels.h % stride != 0 || labels.w % stride != 0) {
    throw ShapeError("label_downsample: extents not divisible by stride " +
                     std::to_string(stride));
  }
  const std::int64_t h = labels.h / stride, w = labels.w / stride, off = stride / 2;
  IntGrid out = IntGrid::zeros(h, w);
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      out.at(y, x) = labels.at(y * stride + off, x * stride + off);
  return out;
}

// ---- synthetic clips ----------------------------------------------------------------

SynthClip synth_clip(const SynthConfig& config, std::uint64_t seed) {
  const std::int64_t H = config.height, W = config.width;
  if (H < 8 || W < 8) throw std::invalid_argument("synth_clip: frame too small");
  if (config.sprite_max_size >= std::min(H, W)) {
    throw std::invalid_argument("synth_clip: sprites larger than frame");
  }
  Rng rng(seed);

  const int bg_class = static_cast<int>(rng.uniform_int(0, config.texture_classes - 1));
  const std::uint64_t bg_seed = rng.next_u64();
  const TextureParams bg = texture_params(bg_class, bg_seed, config.texture_scale);

  std::vector<Sprite> sprites;
  for (int i = 0; i < config.sprite_count; ++i) {
    Sprite s;
    s.id = i + 1;
    s.shape = static_cast<int>(rng.uniform_int(0, 1));
    const auto size = rng.uniform_int(config.sprite_min_size, config.sprite_max_size);
    s.half = static_cast<double>(size) / 2.0;
    const int cls = static_cast<int>(rng.uniform_int(0, config.texture_classes - 1));
    s.tex_seed = rng.next_u64();
    s.tex = texture_params(cls, s.tex_seed, config.texture_scale);
    const auto margin = static_cast<std::int64_t>(std::ceil(s.half)) + 1;
    s.x = static_cast<double>(rng.uniform_int(margin, W - 1 - margin));
    s.y = static_cast<double>(rng.uniform_int(margin, H - 1 - margin));
    do {
      if (config.subpixel) {
        s.vx = rng.uniform(-config.motion_amplitude, config.motion_amplitude);
        s.vy = rng.uniform(-config.motion_amplitude, config.motion_amplitude);
      } else {
        s.vx = static_cast<double>(rng.uniform_int(-config.motion_amplitude, config.motion_amplitude));
        s.vy = static_cast<double>(rng.uniform_int(-config.motion_amplitude, config.motion_amplitude));
      }
    } while (config.motion_amplitude > 0 && s.vx == 0.0 && s.vy == 0.0);
    sprites.push_back(s);
  }
  if (config.occluder) {
    Sprite occ;
    occ.id = config.sprite_count + 1;
    occ.shape = 0;
    occ.half = static_cast<double>(rng.uniform_int(6, 8));
    const int cls = static_cast<int>(rng.uniform_int(0, config.texture_classes - 1));
    occ.tex_seed = rng.next_u64();
    occ.tex = texture_params(cls, occ.tex_seed, config.texture_scale);
    occ.y = static_cast<double>(H) / 2.0;
    occ.x = -occ.half;
    occ.vx = static_cast<double>(std::max(1, config.motion_amplitude) + 1);
    occ.vy = 0.0;
    occ.half = std::max(occ.half, static_cast<double>(H));  // full-height bar
    occ.wraps = true;
    // Bar support is a square of side 2*half; clamp width separately below by
    // treating shape 2 as a vertical bar.
    occ.shape = 2;
    sprites.push_back(occ);
  }

  SynthClip clip;
  clip.seed = seed;
  clip.num_labels = static_cast<int>(sprites.size()) + 1;

  const double sweep = static_cast<double>(W) + 24.0;
  auto covers = [&](const Sprite& s, double px, double py) {
    if (s.shape == 2) return std::abs(px - s.x) <= 7.0;  // vertical bar, any y
    (void)py;
    return sprite_covers(s, px, py);
  };

  for (int t = 0; t < config.length; ++t) {
    std::vector<double> frame(static_cast<std::size_t>(H * W * 3));
    IntGrid mask = IntGrid::zeros(H, W);
    std::vector<double> flow(static_cast<std::size_t>(H * W * 2), 0.0);
    for (std::int64_t y = 0; y < H; ++y) {
      for (std::int64_t x = 0; x < W; ++x) {
        const auto px = static_cast<double>(x), py = static_cast<double>(y);
        double rgb[3];
        texture_color(bg, bg_seed, px, py, rgb);
        std::int32_t label = 0;
        double fx = 0.0, fy = 0.0;
        for (const Sprite& s : sprites) {
          if (covers(s, px, py)) {
            texture_color(s.tex, s.tex_seed, px - s.x, py - s.y, rgb);
            label = s.id;
            fx = s.vx;
            fy = s.vy;
          }
        }
        const std::size_t o = static_cast<std::size_t>((y * W + x) * 3);
        frame[o] = std::clamp(rgb[0], 0.0, 1.0);
        frame[o + 1] = std::clamp(rgb[1], 0.0, 1.0);
        frame[o + 2] = std::clamp(rgb[2], 0.0, 1.0);
        mask.at(y, x) = label;
        const std::size_t fo = static_cast<std::size_t>((y * W + x) * 2);
        flow[fo] = fx;
        flow[fo + 1] = fy;
      }
    }
    clip.frames.push_back(Tensor::from_data({H, W, 3}, std::move(frame)));
    clip.gt_masks.push_back(std::move(mask));
    if (t + 1 < config.length) {
      clip.gt_flow.push_back(Tensor::from_data({H, W, 2}, std::move(flow)));
    }

    // Advance sprite state. Bouncing sprites reflect before leaving the frame;
    // the occluder sweeps across and wraps.
    for (Sprite& s : sprites) {
      if (s.wraps) {
        s.x += s.vx;
        if (s.x > sweep / 2.0 + static_cast<double>(W) / 2.0) s.x -= sweep;
        continue;
      }
      const double margin = s.half + 1.0;
      double nx = s.x + s.vx, ny = s.y + s.vy;
      if (nx < margin || nx > static_cast<double>(W - 1) - margin) {
        s.vx = -s.vx;
        nx = s.x + s.vx;
      }
      if (ny < margin || ny > static_cast<double>(H - 1) - margin) {
        s.vy = -s.vy;
        ny = s.y + s.vy;
      }
      s.x = nx;
      s.y = ny;
    }
  }
  return clip;
}

Tensor synth_image(int class_id, std::uint64_t seed, std::int64_t h, std::int64_t w,
                   int texture_classes) {
  Rng rng(seed);
  const int bg_class = static_cast<int>(rng.uniform_int(0, texture_classes - 1));
  const std::uint64_t bg_seed = rng.next_u64();
  const TextureParams bg = texture_params(bg_class, bg_seed);

  struct Blob {
    double x, y, half;
    int shape;
    std::uint64_t tex_seed;
    TextureParams tex;
  };
  std::vector<Blob> blobs;
  const int count = static_cast<int>(rng.uniform_int(2, 3));
  for (int i = 0; i < count; ++i) {
    Blob b;
    b.half = static_cast<double>(rng.uniform_int(8, std::max<std::int64_t>(9, std::min(h, w) / 3)));
    b.x = rng.uniform(b.half, static_cast<double>(w - 1) - b.half);
    b.y = rng.uniform(b.half, static_cast<double>(h - 1) - b.half);
    b.shape = static_cast<int>(rng.uniform_int(0, 1));
    b.tex_seed = rng.next_u64();
    b.tex = texture_params(class_id, b.tex_seed);
    blobs.push_back(b);
  }

  std::vector<double> img(static_cast<std::size_t>(h * w * 3));
  for (std::int64_t y = 0; y < h; ++y) {
    for (std::int64_t x = 0; x < w; ++x) {
      const auto px = static_cast<double>(x), py = static_cast<double>(y);
      double rgb[3];
      texture_color(bg, bg_seed, px, py, rgb);
      for (const Blob& b : blobs) {
        const double dx = px - b.x, dy = py - b.y;
        const bool inside = b.shape == 0 ? (std::abs(dx) <= b.half && std::abs(dy) <= b.half)
                                         : (dx * dx + dy * dy <= b.half * b.half);
        if (inside) texture_color(b.tex, b.tex_seed, dx, dy, rgb);
      }
      const std::size_t o = static_cast<std::size_t>((y * w + x) * 3);
      for (int c = 0; c < 3; ++c) img[o + static_cast<std::size_t>(c)] = std::clamp(rgb[c], 0.0, 1.0);
    }
  }
  return Tensor::from_data({h, w, 3}, std::move(img));
}

// ---- augmentation ---------------------------------------------------------------------

Tensor hflip(const Tensor& image) {
  require_hwc3(image, "hflip");
  const std::int64_t H = image.shape()[0], W = image.shape()[1];
  std::vector<double> out(image.data().size());
  const auto in = image.data();
  for (std::int64_t y = 0; y < H; ++y)
    for (std::int64_t x = 0; x < W; ++x)
      for (std::int64_t c = 0; c < 3; ++c)
        out[static_cast<std::size_t>((y * W + x) * 3 + c)] = in[(y * W + (W - 1 - x)) * 3 + c];
  return Tensor::from_data(image.shape(), std::move(out));
}

namespace {

// Bilinear crop-resize of window [y0, y0+ch) x [x0, x0+cw) to (H, W). The
// source mapping keeps an exact identity when the crop is the full frame.
Tensor crop_resize(const Tensor& image, std::int64_t y0, std::int64_t x0, std::int64_t ch,
                   std::int64_t cw) {
  const std::int64_t H = image.shape()[0], W = image.shape()[1];
  std::vector<double> out(static_cast<std::size_t>(H * W * 3));
  const auto in = image.data();
  const double sy = static_cast<double>(ch) / static_cast<double>(H);
  const double sx = static_cast<double>(cw) / static_cast<double>(W);
  for (std::int64_t y = 0; y < H; ++y) {
    const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    const double cy = std::clamp(fy, 0.0, static_cast<double>(ch - 1));
    const auto iy0 = static_cast<std::int64_t>(std::floor(cy));
    const std::int64_t iy1 = std::min(iy0 + 1, ch - 1);
    const double wy = cy - static_cast<double>(iy0);
    for (std::int64_t x = 0; x < W; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      const double cx = std::clamp(fx, 0.0, static_cast<double>(cw - 1));
      const auto ix0 = static_cast<std::int64_t>(std::floor(cx));
      const std::int64_t ix1 = std::min(ix0 + 1, cw - 1);
      const double wx = cx - static_cast<double>(ix0);
      for (std::int64_t c = 0; c < 3; ++c) {
        const double v00 = in[((y0 + iy0) * W + (x0 + ix0)) * 3 + c];
        const double v01 = in[((y0 + iy0) * W + (x0 + ix1)) * 3 + c];
        const double v10 = in[((y0 + iy1) * W + (x0 + ix0)) * 3 + c];
        const double v11 = in[((y0 + iy1) * W + (x0 + ix1)) * 3 + c];
        out[static_cast<std::size_t>((y * W + x) * 3 + c)] =
            (v00 * (1 - wx) + v01 * wx) * (1 - wy) + (v10 * (1 - wx) + v11 * wx) * wy;
      }
    }
  }
  return Tensor::from_data(image.shape(), std::move(out));
}

}  // namespace

Tensor augment(const Tensor& image, const AugmentationPolicy& policy, Rng& draw) {
  require_hwc3(image, "augment");
  const std::int64_t H = image.shape()[0], W = image.shape()[1];
  if (!(policy.min_crop_scale > 0.0 && policy.min_crop_scale <= 1.0)) {
    throw std::invalid_argument("augment: min_crop_scale must be in (0,1]");
  }
  const double scale = draw.uniform(policy.min_crop_scale, 1.0);
  const auto ch = std::max<std::int64_t>(2, static_cast<std::int64_t>(std::lround(scale * static_cast<double>(H))));
  const auto cw = std::max<std::int64_t>(2, static_cast<std::int64_t>(std::lround(scale * static_cast<double>(W))));
  if (ch > H || cw > W) throw std::invalid_argument("augment: crop larger than image");
  const std::int64_t y0 = draw.uniform_int(0, H - ch);
  const std::int64_t x0 = draw.uniform_int(0, W - cw);

  Tensor out = (ch == H && cw == W && y0 == 0 && x0 == 0) ? image.clone(false)
                                                          : crop_resize(image, y0, x0, ch, cw);
  if (draw.uniform() < policy.flip_prob) out = hflip(out);
  if (policy.jitter > 0.0) {
    double shift[3];
    for (double& s : shift) s = draw.uniform(-policy.jitter, policy.jitter);
    auto v = out.raw_data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::clamp(v[i] + shift[i % 3], 0.0, 1.0);
  }
  return out;
}

// ---- clip archive ------------------------------------------------------------------------

void export_clip(const SynthClip& clip, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  char name[64];
  for (std::size_t t = 0; t < clip.frames.size(); ++t) {
    ArchiveWriter w;
    w.add("frame", clip.frames[t]);
    std::snprintf(name, sizeof(name), "%s/frame_%04zu.vta", dir.c_str(), t);
    w.write(name);
    ArchiveWriter m;
    m.add_ints("mask", {clip.gt_masks[t].h, clip.gt_masks[t].w}, clip.gt_masks[t].v);
    std::snprintf(name, sizeof(name), "%s/mask_%04zu.vta", dir.c_str(), t);
    m.write(name);
  }
  for (std::size_t t = 0; t < clip.gt_flow.size(); ++t) {
    ArchiveWriter w;
    w.add("flow", clip.gt_flow[t]);
    std::snprintf(name, sizeof(name), "%s/flow_%04zu.vta", dir.c_str(), t);
    w.write(name);
  }
  std::ofstream manifest(dir + "/manifest.cfg");
  manifest << "frames = " << clip.frames.size() << "\n";
  manifest << "height = " << (clip.frames.empty() ? 0 : clip.frames[0].shape()[0]) << "\n";
  manifest << "width = " << (clip.frames.empty() ? 0 : clip.frames[0].shape()[1]) << "\n";
  manifest << "seed = " << clip.seed << "\n";
  manifest << "num_labels = " << clip.num_labels << "\n";
}

SynthClip import_clip(const std::string& dir) {
  std::ifstream manifest(dir + "/manifest.cfg");
  if (!manifest) throw IoError("import_clip: missing manifest in " + dir);
  std::size_t frames = 0;
  int num_labels = 0;
  std::uint64_t seed = 0;
  std::string line;
  while (std::getline(manifest, line)) {
    std::istringstream is(line);
    std::string key, eq;
    is >> key >> eq;
    if (key == "frames") is >> frames;
    if (key == "num_labels") is >> num_labels;
    if (key == "seed") is >> seed;
  }
  if (frames == 0) throw IoError("import_clip: manifest lists no frames");
  SynthClip clip;
  clip.seed = seed;
  clip.num_labels = num_labels;
  char name[64];
  for (std::size_t t = 0; t < frames; ++t) {
    std::snprintf(name, sizeof(name), "%s/frame_%04zu.vta", dir.c_str(), t);
    ArchiveReader fr(name);
    clip.frames.push_back(fr.tensor("frame"));
    std::snprintf(name, sizeof(name), "%s/mask_%04zu.vta", dir.c_str(), t);
    ArchiveReader mr(name);
    const ArchiveEntry& e = mr.entry("mask");
    IntGrid g;
    g.h = e.shape[0];
    g.w = e.shape[1];
    g.v = e.i32;
    clip.gt_masks.push_back(std::move(g));
  }
  return clip;
}

}  // namespace vidcorr
