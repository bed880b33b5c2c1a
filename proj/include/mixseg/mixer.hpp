#pragma once

#include "mixseg/core.hpp"

namespace mixseg {

// Per-pixel selection: take `a` where the mask is set, `b` elsewhere.
// Shape mismatches throw std::invalid_argument.
Image mix_images(const Image& a, const Image& b, const MixMask& m);
LabelMap mix_labels(const LabelMap& ya, const LabelMap& yb, const MixMask& m);
RealGrid mix_weights(const RealGrid& wa, const RealGrid& wb, const MixMask& m);

}  // namespace mixseg
