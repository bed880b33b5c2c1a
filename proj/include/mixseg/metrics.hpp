#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "mixseg/core.hpp"

namespace mixseg {

// counts[t][p]: pixels with ground truth t predicted as p.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(std::size_t num_classes);

  std::size_t num_classes() const { return num_classes_; }
  std::uint64_t at(std::size_t truth, std::size_t pred) const { return counts_[truth * num_classes_ + pred]; }
  std::uint64_t total() const;

  void accumulate(const LabelMap& pred, const LabelMap& truth);
  ConfusionMatrix& operator+=(const ConfusionMatrix& other);
  bool operator==(const ConfusionMatrix&) const = default;

 private:
  std::size_t num_classes_;
  std::vector<std::uint64_t> counts_;
};

// IoU per class; std::nullopt where the class has an empty union.
std::vector<std::optional<double>> iou_per_class(const ConfusionMatrix& cm);
// Mean over classes with a defined IoU (0 when none is defined).
double mean_iou(const ConfusionMatrix& cm);

struct SeedSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample (n-1) standard deviation, 0 for n = 1
  std::size_t count = 0;
};

SeedSummary mean_iou_over_seeds(const std::vector<double>& per_seed);

// "mm.mm ± s.ss" with values scaled to percent.
std::string format_percent_summary(const SeedSummary& s);

}  // namespace mixseg
