#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <iterator>
#include <numbers>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "envae/errors.hpp"
#include "envae/random.hpp"
#include "envae/tensor.hpp"

namespace envae {

enum class DataKind { vector, image };

/// N examples of dimension n, values in [0, 1]. Image data stores each
/// example flattened row-major as height x width x channels.
struct Dataset {
  std::string name;
  DataKind kind = DataKind::vector;
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 0;
  Tensor x;
  double norm_min = 0.0;  ///< raw value mapped to 0
  double norm_max = 1.0;  ///< raw value mapped to 1
  std::vector<int> labels;

  std::size_t size() const { return x.dim(0); }
  std::size_t dim() const { return x.dim(1); }

  void validate() const {
    if (x.rank() != 2) throw DimensionError("dataset tensor must be [N x n]");
    if (kind == DataKind::image && height * width * channels != dim()) {
      throw DimensionError("image dataset: h*w*c != n");
    }
    for (double v : x.data())
      if (!(v >= 0.0 && v <= 1.0)) throw NumericError("dataset value outside [0, 1]");
    if (!labels.empty() && labels.size() != size()) throw DimensionError("label count differs from example count");
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset d = *this;
    const std::size_t n = dim();
    std::vector<double> data;
    data.reserve(idx.size() * n);
    std::vector<int> lab;
    for (std::size_t i : idx) {
      if (i >= size()) throw ContractError("subset index out of range");
      data.insert(data.end(), x.data().begin() + static_cast<std::ptrdiff_t>(i * n),
                  x.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
      if (!labels.empty()) lab.push_back(labels[i]);
    }
    d.x = Tensor(Shape{idx.size(), n}, std::move(data));
    d.labels = std::move(lab);
    return d;
  }
};

/// Equal-weight mixture of `components` isotropic Gaussians with means on a
/// circle of radius `spread` and std spread/10, scaled to [0, 1]^2 by one
/// global affine map (recorded in norm_min/norm_max). labels = component.
inline Dataset gen_gmm2d(std::size_t components, double spread, std::size_t n_points, std::uint64_t seed) {
  if (components < 1) throw ConfigError("gmm2d needs at least one component");
  if (n_points < components || n_points < 2) throw ConfigError("gmm2d needs n_points >= components and >= 2");
  if (!(spread > 0.0)) throw ConfigError("gmm2d spread must be positive");
  Rng rng(seed);
  const double sd = spread / 10.0;
  std::vector<double> raw(2 * n_points);
  std::vector<int> labels(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    const std::size_t c = rng.index(components);
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(components);
    raw[2 * i] = spread * std::cos(angle) + sd * rng.normal();
    raw[2 * i + 1] = spread * std::sin(angle) + sd * rng.normal();
    labels[i] = static_cast<int>(c);
  }
  const auto [lo_it, hi_it] = std::minmax_element(raw.begin(), raw.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  const double range = hi > lo ? hi - lo : 1.0;
  for (double& v : raw) v = std::clamp((v - lo) / range, 0.0, 1.0);
  Dataset d;
  d.name = "gmm2d";
  d.kind = DataKind::vector;
  d.x = Tensor(Shape{n_points, 2}, std::move(raw));
  d.norm_min = lo;
  d.norm_max = lo + range;
  d.labels = std::move(labels);
  return d;
}

/// One horizontal or vertical bar of value 1 and width 1-2 px per image on a
/// zero background, plus N(0, 0.01^2) pixel noise clamped to [0, 1].
/// labels: 0 = horizontal, 1 = vertical.
inline Dataset gen_bars(std::size_t h, std::size_t w, std::size_t n_points, std::uint64_t seed) {
  if (h < 4 || w < 4) throw ConfigError("bars images must be at least 4x4");
  if (n_points < 1) throw ConfigError("bars needs at least one image");
  Rng rng(seed);
  Tensor x(Shape{n_points, h * w});
  std::vector<int> labels(n_points);
  for (std::size_t i = 0; i < n_points; ++i) {
    const bool vertical = rng.index(2) == 1;
    const std::size_t thickness = 1 + rng.index(2);
    const std::size_t extent = vertical ? w : h;
    const std::size_t pos = rng.index(extent - thickness + 1);
    double* img = &x[i * h * w];
    for (std::size_t r = 0; r < h; ++r) {
      for (std::size_t c = 0; c < w; ++c) {
        const std::size_t coord = vertical ? c : r;
        const double base = (coord >= pos && coord < pos + thickness) ? 1.0 : 0.0;
        img[r * w + c] = std::clamp(base + 0.01 * rng.normal(), 0.0, 1.0);
      }
    }
    labels[i] = vertical ? 1 : 0;
  }
  Dataset d;
  d.name = "bars";
  d.kind = DataKind::image;
  d.height = h;
  d.width = w;
  d.channels = 1;
  d.x = std::move(x);
  d.labels = std::move(labels);
  return d;
}

// ---------------------------------------------------------------------------
// IDX (MNIST) files

enum class IdxErrorKind { io, bad_magic, count_mismatch, truncated };

class IdxError : public std::runtime_error {
 public:
  IdxError(IdxErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  IdxErrorKind kind() const noexcept { return kind_; }

 private:
  IdxErrorKind kind_;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

namespace detail {

inline std::vector<std::uint8_t> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IdxError(IdxErrorKind::io, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(std::span<const std::uint8_t> bytes, std::size_t offset, const std::string& path) {
  if (bytes.size() < offset + 4) throw IdxError(IdxErrorKind::truncated, "truncated header in " + path);
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

inline void put_be32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xFF));
  out.push_back(static_cast<char>((v >> 16) & 0xFF));
  out.push_back(static_cast<char>((v >> 8) & 0xFF));
  out.push_back(static_cast<char>(v & 0xFF));
}

inline void write_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace detail

/// Parse IDX images (magic 0x00000803, big-endian count/rows/cols, u8 pixels)
/// and optional labels (magic 0x00000801, count, u8 labels). Pixels / 255.
inline Dataset load_idx(const std::string& images_path, const std::optional<std::string>& labels_path = std::nullopt) {
  const auto img = detail::read_all(images_path);
  const std::uint32_t magic = detail::read_be32(img, 0, images_path);
  if (magic != kIdxImagesMagic) throw IdxError(IdxErrorKind::bad_magic, "bad magic in images file " + images_path);
  const std::uint32_t count = detail::read_be32(img, 4, images_path);
  const std::uint32_t rows = detail::read_be32(img, 8, images_path);
  const std::uint32_t cols = detail::read_be32(img, 12, images_path);
  const std::size_t n = std::size_t{rows} * cols;
  if (count == 0 || n == 0) throw IdxError(IdxErrorKind::count_mismatch, "empty images file " + images_path);
  if (img.size() < 16 + std::size_t{count} * n) throw IdxError(IdxErrorKind::truncated, "truncated pixels in " + images_path);
  Tensor x(Shape{count, n});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(img[16 + i]) / 255.0;

  Dataset d;
  d.name = "idx";
  d.kind = DataKind::image;
  d.height = rows;
  d.width = cols;
  d.channels = 1;
  d.x = std::move(x);
  d.norm_min = 0.0;
  d.norm_max = 255.0;
  if (labels_path) {
    const auto lab = detail::read_all(*labels_path);
    if (detail::read_be32(lab, 0, *labels_path) != kIdxLabelsMagic) {
      throw IdxError(IdxErrorKind::bad_magic, "bad magic in labels file " + *labels_path);
    }
    const std::uint32_t lcount = detail::read_be32(lab, 4, *labels_path);
    if (lcount != count) throw IdxError(IdxErrorKind::count_mismatch, "label count differs from image count");
    if (lab.size() < 8 + std::size_t{lcount}) throw IdxError(IdxErrorKind::truncated, "truncated labels in " + *labels_path);
    d.labels.assign(lab.begin() + 8, lab.begin() + 8 + lcount);
  }
  return d;
}

/// IDX images file bytes for `count` images of rows x cols pixels.
inline std::string encode_idx_images(std::uint32_t count, std::uint32_t rows, std::uint32_t cols,
                                     std::span<const std::uint8_t> pixels) {
  if (pixels.size() != std::size_t{count} * rows * cols) throw DimensionError("pixel count mismatch");
  std::string out;
  detail::put_be32(out, kIdxImagesMagic);
  detail::put_be32(out, count);
  detail::put_be32(out, rows);
  detail::put_be32(out, cols);
  out.append(pixels.begin(), pixels.end());
  return out;
}

inline std::string encode_idx_labels(std::span<const std::uint8_t> labels) {
  std::string out;
  detail::put_be32(out, kIdxLabelsMagic);
  detail::put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.append(labels.begin(), labels.end());
  return out;
}

inline void write_idx_images(const std::string& path, std::uint32_t count, std::uint32_t rows, std::uint32_t cols,
                             std::span<const std::uint8_t> pixels) {
  detail::write_bytes(path, encode_idx_images(count, rows, cols, pixels));
}

inline void write_idx_labels(const std::string& path, std::span<const std::uint8_t> labels) {
  detail::write_bytes(path, encode_idx_labels(labels));
}

// ---------------------------------------------------------------------------
// Train/test split

struct Split {
  Dataset train;
  Dataset test;
  std::vector<std::size_t> train_idx;
  std::vector<std::size_t> test_idx;
};

inline Split split(const Dataset& d, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must lie in (0, 1)");
  const std::size_t n = d.size();
  const auto n_test = static_cast<std::size_t>(std::llround(static_cast<double>(n) * test_fraction));
  if (n_test == 0 || n_test >= n) throw ConfigError("split leaves an empty train or test set");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  Split s;
  s.test_idx.assign(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train_idx.assign(idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
  s.train = d.subset(s.train_idx);
  s.test = d.subset(s.test_idx);
  return s;
}

// ---------------------------------------------------------------------------
// PGM / PPM export

/// Binary PGM (P5) for [h x w], PPM (P6) for [h x w x 3]. Header is
/// "P5 <w> <h> 255\n" (resp. P6); v maps to floor(v * 255 + 0.5).
inline std::string encode_raster(const Tensor& image) {
  const bool gray = image.rank() == 2;
  const bool rgb = image.rank() == 3 && image.dim(2) == 3;
  if (!gray && !rgb) throw DimensionError("raster must be [h x w] or [h x w x 3], got " + to_string(image.shape()));
  for (double v : image.data())
    if (!(v >= 0.0 && v <= 1.0)) throw NumericError("raster value outside [0, 1]; clamp before export");
  std::string out = std::string(gray ? "P5 " : "P6 ") + std::to_string(image.dim(1)) + " " +
                    std::to_string(image.dim(0)) + " 255\n";
  out.reserve(out.size() + image.size());
  for (double v : image.data()) out.push_back(static_cast<char>(static_cast<std::uint8_t>(std::floor(v * 255.0 + 0.5))));
  return out;
}

inline void export_raster(const Tensor& image, const std::string& path) { detail::write_bytes(path, encode_raster(image)); }

/// Example `i` of an image dataset-shaped row as an [h x w] or [h x w x 3] tensor.
inline Tensor as_image(const Tensor& flat, std::size_t h, std::size_t w, std::size_t c) {
  return c == 1 ? flat.reshaped(Shape{h, w}) : flat.reshaped(Shape{h, w, c});
}

}  // namespace envae
