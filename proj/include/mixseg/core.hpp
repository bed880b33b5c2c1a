#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace mixseg {

// Counter-based generator: draw k is splitmix64(seed + k * golden). No
// hidden platform state, so sequences are identical everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64();
  // Uniform integer in [0, n). n must be > 0.
  std::uint64_t uniform_index(std::uint64_t n);
  // Uniform double in [0, 1) with 53 bits of resolution.
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  // Standard normal via Box-Muller; consumes two draws per call.
  double normal();

  // Independent child stream: seed = hash(parent seed, stream id).
  Rng fork(std::uint64_t stream_id) const;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream_id);

// Channel-major C x H x W array of unconstrained reals (logits, gradients).
struct Tensor3 {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> data;

  Tensor3() = default;
  Tensor3(std::size_t c, std::size_t h, std::size_t w, double fill = 0.0)
      : channels(c), height(h), width(w), data(c * h * w, fill) {}

  std::size_t plane() const { return height * width; }
  double& at(std::size_t c, std::size_t i, std::size_t j) {
    return data[(c * height + i) * width + j];
  }
  double at(std::size_t c, std::size_t i, std::size_t j) const {
    return data[(c * height + i) * width + j];
  }
  bool same_shape(const Tensor3& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

// H x W array of reals (confidence maps, loss gates).
class RealGrid {
 public:
  RealGrid() = default;
  RealGrid(std::size_t h, std::size_t w, double fill = 0.0)
      : height_(h), width_(w), data_(h * w, fill) {}
  RealGrid(std::size_t h, std::size_t w, std::vector<double> data);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return data_.size(); }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * width_ + j]; }
  double operator[](std::size_t k) const { return data_[k]; }
  std::span<const double> values() const { return data_; }

  bool operator==(const RealGrid&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

// Channel-major image with every value in [0, 1].
class Image {
 public:
  Image() = default;
  Image(std::size_t channels, std::size_t h, std::size_t w, std::vector<double> data);
  static Image filled(std::size_t channels, std::size_t h, std::size_t w, double value);

  std::size_t channels() const { return channels_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  double operator()(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[(c * height_ + i) * width_ + j];
  }
  std::span<const double> values() const { return data_; }

  bool operator==(const Image&) const = default;

 private:
  std::size_t channels_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

using ClassId = std::uint16_t;

class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(std::size_t h, std::size_t w, std::size_t num_classes, std::vector<ClassId> data);
  static LabelMap filled(std::size_t h, std::size_t w, std::size_t num_classes, ClassId value);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t num_classes() const { return num_classes_; }
  std::size_t size() const { return data_.size(); }
  ClassId operator()(std::size_t i, std::size_t j) const { return data_[i * width_ + j]; }
  ClassId operator[](std::size_t k) const { return data_[k]; }
  std::span<const ClassId> values() const { return data_; }

  // Sorted ascending list of class ids that occur at least once.
  std::vector<ClassId> present_classes() const;

  bool operator==(const LabelMap&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t num_classes_ = 0;
  std::vector<ClassId> data_;
};

// Class-major per-pixel distributions. Construction checks each pixel sums
// to 1 within kProbTolerance.
class ProbMap {
 public:
  static constexpr double kProbTolerance = 1e-6;

  ProbMap() = default;
  ProbMap(std::size_t num_classes, std::size_t h, std::size_t w, std::vector<double> data);

  std::size_t num_classes() const { return num_classes_; }
  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t plane() const { return height_ * width_; }
  double operator()(std::size_t c, std::size_t i, std::size_t j) const {
    return data_[(c * height_ + i) * width_ + j];
  }
  std::span<const double> values() const { return data_; }

 private:
  std::size_t num_classes_ = 0;
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<double> data_;
};

class MixMask {
 public:
  MixMask() = default;
  MixMask(std::size_t h, std::size_t w, std::vector<std::uint8_t> bits);
  static MixMask filled(std::size_t h, std::size_t w, bool value);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t size() const { return bits_.size(); }
  bool operator()(std::size_t i, std::size_t j) const { return bits_[i * width_ + j] != 0; }
  bool operator[](std::size_t k) const { return bits_[k] != 0; }
  std::span<const std::uint8_t> bits() const { return bits_; }

  std::size_t popcount() const;
  MixMask complement() const;

  bool operator==(const MixMask&) const = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::vector<std::uint8_t> bits_;
};

// Ties resolve to the lowest class index.
LabelMap argmax_labels(const ProbMap& p);
RealGrid confidence_map(const ProbMap& p);
ProbMap one_hot(const LabelMap& y);

}  // namespace mixseg
