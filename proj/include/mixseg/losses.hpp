#pragma once

#include <cstddef>

#include "mixseg/core.hpp"

namespace mixseg {

// Lower clamp applied to probabilities inside log().
inline constexpr double kLogClamp = 1e-12;

// How the gated consistency loss is normalised per image.
enum class GateNormalization {
  gated_pixels,  // divide by the number of gated-in pixels
  all_pixels,    // divide by H*W regardless of the gate
};

struct LossResult {
  double loss = 0.0;
  Tensor3 grad_logits;
  // Fraction of pixels that contributed (1 for the supervised loss).
  double gated_fraction = 1.0;
  // True when the gate excluded every pixel; loss and gradient are zero.
  bool empty_gate = false;
};

struct LossReport {
  double supervised_loss = 0.0;
  double unsupervised_loss = 0.0;
  double lambda = 0.0;
  double total = 0.0;
  double gated_pixel_fraction = 0.0;
  bool empty_gate = false;
};

// Per-image cross entropy against hard labels, averaged over pixels and
// divided by batch_size so that summing over a batch gives the batch mean.
// Gradient is with respect to the logits that produced `pred`.
LossResult supervised_ce(const ProbMap& pred, const LabelMap& target, std::size_t batch_size = 1);

// As supervised_ce with each pixel weighted by gate (0 or 1).
LossResult unsupervised_ce(const ProbMap& pred, const LabelMap& pseudo, const RealGrid& gate,
                           std::size_t batch_size = 1,
                           GateNormalization norm = GateNormalization::gated_pixels);

inline double combined_loss(double sup, double unsup, double lambda) { return sup + lambda * unsup; }

// 1 where the teacher's max class probability reaches tau, else 0.
RealGrid confidence_gate(const ProbMap& teacher_probs, double tau);

}  // namespace mixseg
