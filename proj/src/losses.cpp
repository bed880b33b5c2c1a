#include "mixseg/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixseg {

namespace {

void check_shapes(const ProbMap& pred, const LabelMap& target, const char* op) {
  if (pred.height() != target.height() || pred.width() != target.width() ||
      pred.num_classes() != target.num_classes()) {
    throw std::invalid_argument(std::string(op) + ": prediction and target shapes differ");
  }
}

}  // namespace

LossResult supervised_ce(const ProbMap& pred, const LabelMap& target, std::size_t batch_size) {
  check_shapes(pred, target, "supervised_ce");
  if (batch_size == 0) throw std::invalid_argument("supervised_ce: batch_size must be positive");
  const std::size_t n = pred.plane();
  const std::size_t classes = pred.num_classes();
  const double scale = 1.0 / (static_cast<double>(n) * static_cast<double>(batch_size));
  const auto p = pred.values();

  LossResult out;
  out.grad_logits = Tensor3(classes, pred.height(), pred.width());
  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t t = target[k];
    sum -= std::log(std::max(p[t * n + k], kLogClamp));
    for (std::size_t c = 0; c < classes; ++c) {
      out.grad_logits.data[c * n + k] = (p[c * n + k] - (c == t ? 1.0 : 0.0)) * scale;
    }
  }
  out.loss = sum * scale;
  return out;
}

LossResult unsupervised_ce(const ProbMap& pred, const LabelMap& pseudo, const RealGrid& gate,
                           std::size_t batch_size, GateNormalization norm) {
  check_shapes(pred, pseudo, "unsupervised_ce");
  if (gate.height() != pred.height() || gate.width() != pred.width()) {
    throw std::invalid_argument("unsupervised_ce: gate shape differs from prediction");
  }
  if (batch_size == 0) throw std::invalid_argument("unsupervised_ce: batch_size must be positive");
  const std::size_t n = pred.plane();
  const std::size_t classes = pred.num_classes();
  const auto p = pred.values();

  double gated = 0.0;
  for (std::size_t k = 0; k < n; ++k) gated += gate[k];

  LossResult out;
  out.grad_logits = Tensor3(classes, pred.height(), pred.width());
  out.gated_fraction = gated / static_cast<double>(n);
  if (gated == 0.0) {
    out.empty_gate = true;
    return out;
  }
  const double denom = norm == GateNormalization::gated_pixels ? gated : static_cast<double>(n);
  const double scale = 1.0 / (denom * static_cast<double>(batch_size));

  double sum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double g = gate[k];
    if (g == 0.0) continue;
    const std::size_t t = pseudo[k];
    sum -= g * std::log(std::max(p[t * n + k], kLogClamp));
    for (std::size_t c = 0; c < classes; ++c) {
      out.grad_logits.data[c * n + k] = g * (p[c * n + k] - (c == t ? 1.0 : 0.0)) * scale;
    }
  }
  out.loss = sum * scale;
  return out;
}

RealGrid confidence_gate(const ProbMap& teacher_probs, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("confidence_gate: tau must be in (0,1]");
  const RealGrid conf = confidence_map(teacher_probs);
  std::vector<double> out(conf.size());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = conf[k] >= tau ? 1.0 : 0.0;
  return RealGrid(conf.height(), conf.width(), std::move(out));
}

}  // namespace mixseg
