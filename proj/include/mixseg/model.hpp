#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "mixseg/core.hpp"

namespace mixseg {

// Raised when activations, losses, or parameter updates become non-finite.
class TrainingDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Param {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> momentum;
  bool is_bias = false;

  Param() = default;
  Param(std::string n, std::vector<std::size_t> s, bool bias);
  std::size_t size() const { return value.size(); }
};

class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(std::vector<Param> params) : params_(std::move(params)) {}

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;

  std::size_t total_size() const;
  void zero_grad();
  bool all_finite() const;
  bool same_shapes(const ModelParams& other) const;
  // Compares parameter values only (names, shapes, and bits).
  bool values_equal(const ModelParams& other) const;

  // Flattened views, in declaration order.
  std::vector<double> flat_values() const;
  std::vector<double> flat_grads() const;

 private:
  std::vector<Param> params_;
};

// Output of a forward pass: logits plus whatever backward needs.
struct ForwardPass {
  Tensor3 logits;
  std::vector<Tensor3> activations;
};

// Segmentation network interface shared by student and teacher.
class SegmentationModel {
 public:
  virtual ~SegmentationModel() = default;
  virtual std::size_t num_classes() const = 0;
  virtual ModelParams init_params(Rng& rng) const = 0;
  virtual ForwardPass forward(const ModelParams& params, const Image& img) const = 0;
  // Accumulates d(loss)/d(param) into params' gradient buffers.
  virtual void backward(ModelParams& params, const ForwardPass& pass,
                        const Tensor3& grad_logits) const = 0;
};

// conv3x3(3->hidden)+ReLU, conv3x3(hidden->hidden)+ReLU, conv1x1(hidden->C).
// Stride 1 with zero padding, so logits keep the input resolution.
class ReferenceNet final : public SegmentationModel {
 public:
  explicit ReferenceNet(std::size_t num_classes, std::size_t hidden = 16, std::size_t in_channels = 3);

  std::size_t num_classes() const override { return num_classes_; }
  std::size_t hidden() const { return hidden_; }
  std::size_t in_channels() const { return in_channels_; }

  // Shapes with zero values.
  ModelParams zero_params() const;
  // Kaiming fan-in uniform weights, zero biases.
  ModelParams init_params(Rng& rng) const override;
  ForwardPass forward(const ModelParams& params, const Image& img) const override;
  void backward(ModelParams& params, const ForwardPass& pass,
                const Tensor3& grad_logits) const override;

 private:
  std::size_t num_classes_;
  std::size_t hidden_;
  std::size_t in_channels_;
};

// Per-pixel softmax over the class axis, max-subtracted.
ProbMap softmax(const Tensor3& logits);

// v <- momentum*v + grad + weight_decay*w (weights only); w <- w - lr*v.
// Clears gradients. Throws TrainingDivergence on a non-finite result.
void sgd_step(ModelParams& params, double lr, double momentum, double weight_decay);

// lr0 * (1 - iter/total)^power
double poly_lr(std::size_t iter, std::size_t total, double lr0, double power);

// Checkpoint: text manifest then raw little-endian float64 values.
//   mixseg-checkpoint 1
//   params <count>
//   <name> <rank> <dim>... (one line per tensor)
//   end
//   <values, tensor after tensor>
void write_checkpoint(std::ostream& out, const ModelParams& params);
ModelParams read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const ModelParams& params);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace mixseg
