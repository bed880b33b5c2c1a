#include "mixseg/core.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace mixseg {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}
}  // namespace

std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t stream_id) {
  return mix64(mix64(parent ^ 0x6A09E667F3BCC909ULL) + stream_id * kGolden);
}

std::uint64_t Rng::next_u64() {
  ++counter_;
  return mix64(seed_ + counter_ * kGolden);
}

std::uint64_t Rng::uniform_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("Rng::uniform_index: n must be positive");
  // Lemire multiply-shift with rejection; unbiased.
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
    if (static_cast<std::uint64_t>(m) >= threshold) {
      return static_cast<std::uint64_t>(m >> 64);
    }
  }
}

double Rng::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  double u1 = uniform01();
  const double u2 = uniform01();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::fork(std::uint64_t stream_id) const { return Rng(derive_seed(seed_, stream_id)); }

RealGrid::RealGrid(std::size_t h, std::size_t w, std::vector<double> data)
    : height_(h), width_(w), data_(std::move(data)) {
  require(data_.size() == h * w, "RealGrid: data length must equal H*W");
}

Image::Image(std::size_t channels, std::size_t h, std::size_t w, std::vector<double> data)
    : channels_(channels), height_(h), width_(w), data_(std::move(data)) {
  require(data_.size() == channels * h * w, "Image: data length must equal channels*H*W");
  for (double v : data_) {
    require(std::isfinite(v) && v >= 0.0 && v <= 1.0, "Image: values must be finite and in [0,1]");
  }
}

Image Image::filled(std::size_t channels, std::size_t h, std::size_t w, double value) {
  return Image(channels, h, w, std::vector<double>(channels * h * w, value));
}

LabelMap::LabelMap(std::size_t h, std::size_t w, std::size_t num_classes, std::vector<ClassId> data)
    : height_(h), width_(w), num_classes_(num_classes), data_(std::move(data)) {
  require(num_classes_ >= 1, "LabelMap: num_classes must be >= 1");
  require(data_.size() == h * w, "LabelMap: data length must equal H*W");
  for (ClassId v : data_) require(v < num_classes_, "LabelMap: class index out of range");
}

LabelMap LabelMap::filled(std::size_t h, std::size_t w, std::size_t num_classes, ClassId value) {
  return LabelMap(h, w, num_classes, std::vector<ClassId>(h * w, value));
}

std::vector<ClassId> LabelMap::present_classes() const {
  std::vector<bool> seen(num_classes_, false);
  for (ClassId v : data_) seen[v] = true;
  std::vector<ClassId> out;
  for (std::size_t c = 0; c < num_classes_; ++c) {
    if (seen[c]) out.push_back(static_cast<ClassId>(c));
  }
  return out;
}

ProbMap::ProbMap(std::size_t num_classes, std::size_t h, std::size_t w, std::vector<double> data)
    : num_classes_(num_classes), height_(h), width_(w), data_(std::move(data)) {
  require(num_classes_ >= 1, "ProbMap: num_classes must be >= 1");
  require(data_.size() == num_classes * h * w, "ProbMap: data length must equal C*H*W");
  const std::size_t n = h * w;
  for (std::size_t k = 0; k < n; ++k) {
    double sum = 0.0;
    for (std::size_t c = 0; c < num_classes_; ++c) {
      const double v = data_[c * n + k];
      require(std::isfinite(v) && v >= 0.0 && v <= 1.0, "ProbMap: entries must be in [0,1]");
      sum += v;
    }
    if (std::abs(sum - 1.0) > kProbTolerance) {
      throw std::invalid_argument("ProbMap: pixel " + std::to_string(k) +
                                  " does not sum to 1 (sum=" + std::to_string(sum) + ")");
    }
  }
}

MixMask::MixMask(std::size_t h, std::size_t w, std::vector<std::uint8_t> bits)
    : height_(h), width_(w), bits_(std::move(bits)) {
  require(bits_.size() == h * w, "MixMask: bits length must equal H*W");
  for (auto b : bits_) require(b <= 1, "MixMask: bits must be 0 or 1");
}

MixMask MixMask::filled(std::size_t h, std::size_t w, bool value) {
  return MixMask(h, w, std::vector<std::uint8_t>(h * w, value ? 1 : 0));
}

std::size_t MixMask::popcount() const {
  std::size_t n = 0;
  for (auto b : bits_) n += b;
  return n;
}

MixMask MixMask::complement() const {
  std::vector<std::uint8_t> out(bits_.size());
  for (std::size_t k = 0; k < bits_.size(); ++k) out[k] = bits_[k] ? 0 : 1;
  return MixMask(height_, width_, std::move(out));
}

LabelMap argmax_labels(const ProbMap& p) {
  const std::size_t n = p.plane();
  const auto v = p.values();
  std::vector<ClassId> out(n, 0);
  for (std::size_t k = 0; k < n; ++k) {
    double best = v[k];
    for (std::size_t c = 1; c < p.num_classes(); ++c) {
      if (v[c * n + k] > best) {
        best = v[c * n + k];
        out[k] = static_cast<ClassId>(c);
      }
    }
  }
  return LabelMap(p.height(), p.width(), p.num_classes(), std::move(out));
}

RealGrid confidence_map(const ProbMap& p) {
  const std::size_t n = p.plane();
  const auto v = p.values();
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    double best = v[k];
    for (std::size_t c = 1; c < p.num_classes(); ++c) best = std::max(best, v[c * n + k]);
    out[k] = best;
  }
  return RealGrid(p.height(), p.width(), std::move(out));
}

ProbMap one_hot(const LabelMap& y) {
  const std::size_t n = y.size();
  std::vector<double> out(y.num_classes() * n, 0.0);
  for (std::size_t k = 0; k < n; ++k) out[y[k] * n + k] = 1.0;
  return ProbMap(y.num_classes(), y.height(), y.width(), std::move(out));
}

}  // namespace mixseg
