#include "mixseg/mixer.hpp"

#include <stdexcept>
#include <string>
#include <vector>

namespace mixseg {

namespace {
void check_grid(std::size_t h, std::size_t w, const MixMask& m, const char* op) {
  if (h != m.height() || w != m.width()) {
    throw std::invalid_argument(std::string(op) + ": mask shape does not match inputs");
  }
}
}  // namespace

Image mix_images(const Image& a, const Image& b, const MixMask& m) {
  if (a.channels() != b.channels() || a.height() != b.height() || a.width() != b.width()) {
    throw std::invalid_argument("mix_images: image shapes differ");
  }
  check_grid(a.height(), a.width(), m, "mix_images");
  const std::size_t n = a.height() * a.width();
  const auto va = a.values();
  const auto vb = b.values();
  std::vector<double> out(va.size());
  for (std::size_t c = 0; c < a.channels(); ++c) {
    for (std::size_t k = 0; k < n; ++k) out[c * n + k] = m[k] ? va[c * n + k] : vb[c * n + k];
  }
  return Image(a.channels(), a.height(), a.width(), std::move(out));
}

LabelMap mix_labels(const LabelMap& ya, const LabelMap& yb, const MixMask& m) {
  if (ya.height() != yb.height() || ya.width() != yb.width() ||
      ya.num_classes() != yb.num_classes()) {
    throw std::invalid_argument("mix_labels: label maps differ in shape or class count");
  }
  check_grid(ya.height(), ya.width(), m, "mix_labels");
  std::vector<ClassId> out(ya.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = m[k] ? ya[k] : yb[k];
  return LabelMap(ya.height(), ya.width(), ya.num_classes(), std::move(out));
}

RealGrid mix_weights(const RealGrid& wa, const RealGrid& wb, const MixMask& m) {
  if (wa.height() != wb.height() || wa.width() != wb.width()) {
    throw std::invalid_argument("mix_weights: grids differ in shape");
  }
  check_grid(wa.height(), wa.width(), m, "mix_weights");
  std::vector<double> out(wa.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = m[k] ? wa[k] : wb[k];
  return RealGrid(wa.height(), wa.width(), std::move(out));
}

}  // namespace mixseg
