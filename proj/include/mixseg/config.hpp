#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "mixseg/data.hpp"
#include "mixseg/losses.hpp"
#include "mixseg/maskgen.hpp"

namespace mixseg {

// Invalid or missing configuration field; field() names it.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string field, const std::string& msg)
      : std::runtime_error(field + ": " + msg), field_(std::move(field)) {}
  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

enum class MixStrategy { none, cutmix, classmix, complexmix };

std::string to_string(MixStrategy s);
MixStrategy parse_strategy(const std::string& s);

struct ExperimentConfig {
  double labeled_fraction = 0.125;
  std::size_t batch_size = 2;
  std::size_t total_iters = 40000;
  // Defaults to 10% of total_iters.
  std::optional<std::size_t> warmup_iters;
  double lr0 = 2.5e-4;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double poly_power = 0.9;
  double ema_alpha = 0.99;
  double tau = 0.95;
  double lambda = 1.0;
  // Linear ramp of lambda from 0 over the first semi-supervised iterations.
  std::size_t lambda_ramp_iters = 0;
  std::vector<std::size_t> p_choices{4, 16, 64, 128};
  BlockClassPool block_pool = BlockClassPool::all_classes;
  GateNormalization gate_norm = GateNormalization::gated_pixels;
  MixStrategy strategy = MixStrategy::complexmix;
  std::uint64_t seed = 0;
  // Validation mIoU every eval_every iterations; 0 evaluates only at the end.
  std::size_t eval_every = 0;
  std::size_t hidden_channels = 16;

  std::size_t resolved_warmup() const { return warmup_iters.value_or(total_iters / 10); }
  ComplexMixSpec complexmix_spec() const { return ComplexMixSpec{p_choices, block_pool}; }
  void validate() const;
};

// Strict JSON mapping: unknown keys and ill-typed values raise ConfigError
// naming the offending field. Absent keys keep their defaults.
ExperimentConfig experiment_from_json(const nlohmann::json& j);
nlohmann::json experiment_to_json(const ExperimentConfig& c);

DatasetSpec dataset_spec_from_json(const nlohmann::json& j);
nlohmann::json dataset_spec_to_json(const DatasetSpec& s);

}  // namespace mixseg
