#include "mixseg/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace mixseg {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

// Same-padded stride-1 convolution, accumulating into `out`.
// weight layout [out][in][k][k].
void conv_forward(const Tensor3& in, const std::vector<double>& weight,
                  const std::vector<double>& bias, std::size_t k, Tensor3& out) {
  const std::size_t h = in.height, w = in.width, pad = k / 2;
  for (std::size_t o = 0; o < out.channels; ++o) {
    double* dst = &out.data[o * h * w];
    std::fill(dst, dst + h * w, bias[o]);
    for (std::size_t c = 0; c < in.channels; ++c) {
      const double* src = &in.data[c * h * w];
      for (std::size_t ki = 0; ki < k; ++ki) {
        for (std::size_t kj = 0; kj < k; ++kj) {
          const double wv = weight[((o * in.channels + c) * k + ki) * k + kj];
          // Output rows i with 0 <= i + ki - pad < h.
          const std::size_t i0 = ki < pad ? pad - ki : 0;
          const std::size_t i1 = std::min(h, h + pad - ki);
          const std::size_t j0 = kj < pad ? pad - kj : 0;
          const std::size_t j1 = std::min(w, w + pad - kj);
          for (std::size_t i = i0; i < i1; ++i) {
            double* drow = dst + i * w;
            const double* srow = src + (i + ki - pad) * w + (j0 + kj - pad);
            for (std::size_t j = j0; j < j1; ++j) drow[j] += wv * srow[j - j0];
          }
        }
      }
    }
  }
}

// Accumulates weight/bias gradients; writes input gradient when grad_in != nullptr.
void conv_backward(const Tensor3& in, const std::vector<double>& weight, std::size_t k,
                   const Tensor3& grad_out, std::vector<double>& grad_weight,
                   std::vector<double>& grad_bias, Tensor3* grad_in) {
  const std::size_t h = in.height, w = in.width, pad = k / 2;
  if (grad_in != nullptr) *grad_in = Tensor3(in.channels, h, w, 0.0);
  for (std::size_t o = 0; o < grad_out.channels; ++o) {
    const double* g = &grad_out.data[o * h * w];
    double bsum = 0.0;
    for (std::size_t q = 0; q < h * w; ++q) bsum += g[q];
    grad_bias[o] += bsum;
    for (std::size_t c = 0; c < in.channels; ++c) {
      const double* src = &in.data[c * h * w];
      double* gin = grad_in != nullptr ? &grad_in->data[c * h * w] : nullptr;
      for (std::size_t ki = 0; ki < k; ++ki) {
        for (std::size_t kj = 0; kj < k; ++kj) {
          const std::size_t widx = ((o * in.channels + c) * k + ki) * k + kj;
          const double wv = weight[widx];
          const std::size_t i0 = ki < pad ? pad - ki : 0;
          const std::size_t i1 = std::min(h, h + pad - ki);
          const std::size_t j0 = kj < pad ? pad - kj : 0;
          const std::size_t j1 = std::min(w, w + pad - kj);
          double acc = 0.0;
          for (std::size_t i = i0; i < i1; ++i) {
            const double* grow = g + i * w;
            const std::size_t off = (i + ki - pad) * w + (j0 + kj - pad);
            const double* srow = src + off;
            for (std::size_t j = j0; j < j1; ++j) acc += grow[j] * srow[j - j0];
            if (gin != nullptr) {
              double* girow = gin + off;
              for (std::size_t j = j0; j < j1; ++j) girow[j - j0] += wv * grow[j];
            }
          }
          grad_weight[widx] += acc;
        }
      }
    }
  }
}

bool finite(const Tensor3& t) {
  return std::all_of(t.data.begin(), t.data.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace

Param::Param(std::string n, std::vector<std::size_t> s, bool bias)
    : name(std::move(n)), shape(std::move(s)), is_bias(bias) {
  const std::size_t count = product(shape);
  value.assign(count, 0.0);
  grad.assign(count, 0.0);
  momentum.assign(count, 0.0);
}

Param& ModelParams::at(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("ModelParams: no parameter named " + name);
}

const Param& ModelParams::at(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw std::out_of_range("ModelParams: no parameter named " + name);
}

std::size_t ModelParams::total_size() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void ModelParams::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

bool ModelParams::all_finite() const {
  for (const auto& p : params_) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (!std::isfinite(p.value[k]) || !std::isfinite(p.grad[k]) || !std::isfinite(p.momentum[k]))
        return false;
    }
  }
  return true;
}

bool ModelParams::same_shapes(const ModelParams& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other.params_[i].name || params_[i].shape != other.params_[i].shape)
      return false;
  }
  return true;
}

bool ModelParams::values_equal(const ModelParams& other) const {
  if (!same_shapes(other)) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& a = params_[i].value;
    const auto& b = other.params_[i].value;
    if (std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

std::vector<double> ModelParams::flat_values() const {
  std::vector<double> out;
  out.reserve(total_size());
  for (const auto& p : params_) out.insert(out.end(), p.value.begin(), p.value.end());
  return out;
}

std::vector<double> ModelParams::flat_grads() const {
  std::vector<double> out;
  out.reserve(total_size());
  for (const auto& p : params_) out.insert(out.end(), p.grad.begin(), p.grad.end());
  return out;
}

ReferenceNet::ReferenceNet(std::size_t num_classes, std::size_t hidden, std::size_t in_channels)
    : num_classes_(num_classes), hidden_(hidden), in_channels_(in_channels) {
  if (num_classes_ < 1 || hidden_ < 1 || in_channels_ < 1) {
    throw std::invalid_argument("ReferenceNet: dimensions must be positive");
  }
}

ModelParams ReferenceNet::zero_params() const {
  std::vector<Param> ps;
  ps.emplace_back("conv1.weight", std::vector<std::size_t>{hidden_, in_channels_, 3, 3}, false);
  ps.emplace_back("conv1.bias", std::vector<std::size_t>{hidden_}, true);
  ps.emplace_back("conv2.weight", std::vector<std::size_t>{hidden_, hidden_, 3, 3}, false);
  ps.emplace_back("conv2.bias", std::vector<std::size_t>{hidden_}, true);
  ps.emplace_back("conv3.weight", std::vector<std::size_t>{num_classes_, hidden_, 1, 1}, false);
  ps.emplace_back("conv3.bias", std::vector<std::size_t>{num_classes_}, true);
  return ModelParams(std::move(ps));
}

ModelParams ReferenceNet::init_params(Rng& rng) const {
  ModelParams params = zero_params();
  for (auto& p : params.params()) {
    if (p.is_bias) continue;
    const double fan_in = static_cast<double>(p.shape[1] * p.shape[2] * p.shape[3]);
    const double bound = std::sqrt(6.0 / fan_in);
    for (auto& v : p.value) v = rng.uniform(-bound, bound);
  }
  return params;
}

ForwardPass ReferenceNet::forward(const ModelParams& params, const Image& img) const {
  if (img.channels() != in_channels_) {
    throw std::invalid_argument("ReferenceNet::forward: expected " + std::to_string(in_channels_) +
                                " input channels");
  }
  const std::size_t h = img.height(), w = img.width();
  ForwardPass pass;
  Tensor3 x(in_channels_, h, w);
  std::copy(img.values().begin(), img.values().end(), x.data.begin());

  Tensor3 h1(hidden_, h, w);
  conv_forward(x, params.at("conv1.weight").value, params.at("conv1.bias").value, 3, h1);
  for (auto& v : h1.data) v = std::max(v, 0.0);

  Tensor3 h2(hidden_, h, w);
  conv_forward(h1, params.at("conv2.weight").value, params.at("conv2.bias").value, 3, h2);
  for (auto& v : h2.data) v = std::max(v, 0.0);

  pass.logits = Tensor3(num_classes_, h, w);
  conv_forward(h2, params.at("conv3.weight").value, params.at("conv3.bias").value, 1, pass.logits);
  if (!finite(pass.logits)) {
    throw TrainingDivergence("ReferenceNet::forward: non-finite activations");
  }
  pass.activations.push_back(std::move(x));
  pass.activations.push_back(std::move(h1));
  pass.activations.push_back(std::move(h2));
  return pass;
}

void ReferenceNet::backward(ModelParams& params, const ForwardPass& pass,
                            const Tensor3& grad_logits) const {
  if (pass.activations.size() != 3 || !grad_logits.same_shape(pass.logits)) {
    throw std::invalid_argument("ReferenceNet::backward: gradient does not match forward pass");
  }
  const Tensor3& x = pass.activations[0];
  const Tensor3& h1 = pass.activations[1];
  const Tensor3& h2 = pass.activations[2];

  Param& w3 = params.at("conv3.weight");
  Param& b3 = params.at("conv3.bias");
  Tensor3 g2;
  conv_backward(h2, w3.value, 1, grad_logits, w3.grad, b3.grad, &g2);
  for (std::size_t q = 0; q < g2.data.size(); ++q)
    if (h2.data[q] <= 0.0) g2.data[q] = 0.0;

  Param& w2 = params.at("conv2.weight");
  Param& b2 = params.at("conv2.bias");
  Tensor3 g1;
  conv_backward(h1, w2.value, 3, g2, w2.grad, b2.grad, &g1);
  for (std::size_t q = 0; q < g1.data.size(); ++q)
    if (h1.data[q] <= 0.0) g1.data[q] = 0.0;

  Param& w1 = params.at("conv1.weight");
  Param& b1 = params.at("conv1.bias");
  conv_backward(x, w1.value, 3, g1, w1.grad, b1.grad, nullptr);
}

ProbMap softmax(const Tensor3& logits) {
  const std::size_t n = logits.plane();
  const std::size_t classes = logits.channels;
  std::vector<double> out(logits.data.size());
  for (std::size_t k = 0; k < n; ++k) {
    double mx = logits.data[k];
    for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, logits.data[c * n + k]);
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      const double e = std::exp(logits.data[c * n + k] - mx);
      out[c * n + k] = e;
      sum += e;
    }
    for (std::size_t c = 0; c < classes; ++c) out[c * n + k] /= sum;
  }
  return ProbMap(classes, logits.height, logits.width, std::move(out));
}

void sgd_step(ModelParams& params, double lr, double momentum, double weight_decay) {
  for (auto& p : params.params()) {
    const double wd = p.is_bias ? 0.0 : weight_decay;
    for (std::size_t k = 0; k < p.size(); ++k) {
      p.momentum[k] = momentum * p.momentum[k] + p.grad[k] + wd * p.value[k];
      p.value[k] -= lr * p.momentum[k];
      p.grad[k] = 0.0;
      if (!std::isfinite(p.value[k]) || !std::isfinite(p.momentum[k])) {
        throw TrainingDivergence("sgd_step: non-finite update in " + p.name);
      }
    }
  }
}

double poly_lr(std::size_t iter, std::size_t total, double lr0, double power) {
  if (iter > total) throw std::invalid_argument("poly_lr: iter exceeds total");
  if (total == 0) return lr0;
  const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(total);
  return lr0 * std::pow(frac, power);
}

namespace {

constexpr const char* kCheckpointMagic = "mixseg-checkpoint";

void put_le(std::ostream& out, double v) {
  std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  unsigned char buf[8];
  for (int b = 0; b < 8; ++b) buf[b] = static_cast<unsigned char>(bits >> (8 * b));
  out.write(reinterpret_cast<const char*>(buf), 8);
}

double get_le(std::istream& in) {
  unsigned char buf[8];
  if (!in.read(reinterpret_cast<char*>(buf), 8)) {
    throw std::runtime_error("checkpoint: truncated value data");
  }
  std::uint64_t bits = 0;
  for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(buf[b]) << (8 * b);
  return std::bit_cast<double>(bits);
}

}  // namespace

void write_checkpoint(std::ostream& out, const ModelParams& params) {
  out << kCheckpointMagic << " 1\n";
  out << "params " << params.params().size() << "\n";
  for (const auto& p : params.params()) {
    out << p.name << " " << p.shape.size();
    for (auto d : p.shape) out << " " << d;
    out << "\n";
  }
  out << "end\n";
  for (const auto& p : params.params())
    for (double v : p.value) put_le(out, v);
  if (!out) throw std::runtime_error("checkpoint: write failed");
}

ModelParams read_checkpoint(std::istream& in) {
  std::string line;
  auto next_line = [&](const char* what) {
    if (!std::getline(in, line)) throw std::runtime_error(std::string("checkpoint: missing ") + what);
    return std::istringstream(line);
  };

  {
    auto ss = next_line("header");
    std::string magic;
    int version = 0;
    ss >> magic >> version;
    if (magic != kCheckpointMagic || version != 1) {
      throw std::runtime_error("checkpoint: unrecognised header");
    }
  }
  std::size_t count = 0;
  {
    auto ss = next_line("parameter count");
    std::string key;
    if (!(ss >> key >> count) || key != "params") {
      throw std::runtime_error("checkpoint: malformed parameter count");
    }
  }
  std::vector<Param> ps;
  for (std::size_t i = 0; i < count; ++i) {
    auto ss = next_line("manifest entry");
    std::string name;
    std::size_t rank = 0;
    if (!(ss >> name >> rank) || rank == 0 || rank > 8) {
      throw std::runtime_error("checkpoint: malformed manifest entry '" + line + "'");
    }
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) {
      if (!(ss >> d)) throw std::runtime_error("checkpoint: malformed shape for " + name);
    }
    const bool bias = name.size() >= 5 && name.compare(name.size() - 5, 5, ".bias") == 0;
    ps.emplace_back(name, shape, bias);
  }
  {
    auto ss = next_line("manifest terminator");
    std::string end;
    ss >> end;
    if (end != "end") throw std::runtime_error("checkpoint: manifest not terminated");
  }
  for (auto& p : ps)
    for (auto& v : p.value) v = get_le(in);
  if (in.peek() != std::char_traits<char>::eof()) {
    throw std::runtime_error("checkpoint: trailing data after values");
  }
  return ModelParams(std::move(ps));
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot open " + tmp);
    write_checkpoint(out, params);
  }
  std::filesystem::rename(tmp, path);
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace mixseg
