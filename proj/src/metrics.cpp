#include "mixseg/metrics.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>
#include <utility>

namespace mixseg {

ConfusionMatrix::ConfusionMatrix(std::size_t num_classes)
    : num_classes_(num_classes), counts_(num_classes * num_classes, 0) {
  if (num_classes == 0) throw std::invalid_argument("ConfusionMatrix: num_classes must be positive");
}

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts_.begin(), counts_.end(), std::uint64_t{0});
}

void ConfusionMatrix::accumulate(const LabelMap& pred, const LabelMap& truth) {
  if (pred.height() != truth.height() || pred.width() != truth.width()) {
    throw std::invalid_argument("ConfusionMatrix::accumulate: prediction and truth shapes differ");
  }
  if (pred.num_classes() != num_classes_ || truth.num_classes() != num_classes_) {
    throw std::invalid_argument("ConfusionMatrix::accumulate: class count mismatch");
  }
  for (std::size_t k = 0; k < pred.size(); ++k) ++counts_[truth[k] * num_classes_ + pred[k]];
}

ConfusionMatrix& ConfusionMatrix::operator+=(const ConfusionMatrix& other) {
  if (other.num_classes_ != num_classes_) throw std::invalid_argument("ConfusionMatrix: class count mismatch");
  for (std::size_t k = 0; k < counts_.size(); ++k) counts_[k] += other.counts_[k];
  return *this;
}

namespace {

// Intersection and union counts per class; union 0 marks an undefined class.
std::vector<std::pair<std::uint64_t, std::uint64_t>> class_counts(const ConfusionMatrix& cm) {
  const std::size_t n = cm.num_classes();
  std::vector<std::pair<std::uint64_t, std::uint64_t>> out(n);
  for (std::size_t c = 0; c < n; ++c) {
    std::uint64_t row = 0, col = 0;
    for (std::size_t k = 0; k < n; ++k) {
      row += cm.at(c, k);
      col += cm.at(k, c);
    }
    out[c] = {cm.at(c, c), row + col - cm.at(c, c)};
  }
  return out;
}

}  // namespace

std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm) {
  std::vector<std::optional<double>> out;
  for (const auto& [inter, uni] : class_counts(cm)) {
    out.push_back(uni > 0 ? std::optional<double>(static_cast<double>(inter) / static_cast<double>(uni))
                          : std::nullopt);
  }
  return out;
}

// Summed in extended precision and rounded once.
double mean_iou(const ConfusionMatrix& cm) {
  long double sum = 0.0L;
  std::size_t defined = 0;
  for (const auto& [inter, uni] : class_counts(cm)) {
    if (uni == 0) continue;
    sum += static_cast<long double>(inter) / static_cast<long double>(uni);
    ++defined;
  }
  return defined == 0 ? 0.0 : static_cast<double>(sum / static_cast<long double>(defined));
}

SeedSummary mean_iou_over_seeds(const std::vector<double>& per_seed) {
  if (per_seed.empty()) throw std::invalid_argument("mean_iou_over_seeds: empty list");
  SeedSummary s;
  s.count = per_seed.size();
  s.mean = std::accumulate(per_seed.begin(), per_seed.end(), 0.0) / static_cast<double>(s.count);
  if (s.count > 1) {
    double ss = 0.0;
    for (double v : per_seed) ss += (v - s.mean) * (v - s.mean);
    s.stddev = std::sqrt(ss / static_cast<double>(s.count - 1));
  }
  return s;
}

std::string format_percent_summary(const SeedSummary& s) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f \xC2\xB1 %.2f", 100.0 * s.mean, 100.0 * s.stddev);
  return buf;
}

}  // namespace mixseg
