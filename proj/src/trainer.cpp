#include "mixseg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "mixseg/maskgen.hpp"
#include "mixseg/mixer.hpp"

namespace mixseg {

namespace {

enum Stream : std::uint64_t {
  kInitStream = 1,
  kLabeledStream = 2,
  kUnlabeledStream = 3,
  kMaskStream = 4,
  kSplitStream = 5,
};

double effective_lambda(const ExperimentConfig& c, std::size_t iter) {
  if (c.lambda_ramp_iters == 0) return c.lambda;
  const std::size_t warm = c.resolved_warmup();
  const double done = iter >= warm ? static_cast<double>(iter - warm + 1) : 0.0;
  return c.lambda * std::min(1.0, done / static_cast<double>(c.lambda_ramp_iters));
}

void check_loss(double v, const char* what) {
  if (!std::isfinite(v)) throw TrainingDivergence(std::string("non-finite ") + what);
}

}  // namespace

EpochSampler::EpochSampler(std::vector<std::size_t> ids, Rng rng) : ids_(std::move(ids)), rng_(rng) {
  if (ids_.empty()) throw std::invalid_argument("EpochSampler: no ids to sample from");
  reshuffle();
}

void EpochSampler::reshuffle() {
  for (std::size_t i = ids_.size(); i > 1; --i) std::swap(ids_[i - 1], ids_[rng_.uniform_index(i)]);
  cursor_ = 0;
}

std::size_t EpochSampler::next() {
  if (cursor_ == ids_.size()) reshuffle();
  return ids_[cursor_++];
}

std::vector<std::size_t> EpochSampler::next_batch(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (auto& v : out) v = next();
  return out;
}

MaskGenerator make_mask_generator(const ExperimentConfig& config) {
  switch (config.strategy) {
    case MixStrategy::cutmix:
      return [](const LabelMap& ya, Rng& rng) { return cutmix_mask(ya.height(), ya.width(), rng); };
    case MixStrategy::classmix:
      return [](const LabelMap& ya, Rng& rng) { return classmix_mask(ya, rng).mask; };
    case MixStrategy::complexmix: {
      const ComplexMixSpec spec = config.complexmix_spec();
      return [spec](const LabelMap& ya, Rng& rng) {
        const std::size_t p = sample_p(spec, ya.height(), ya.width(), rng);
        return complexmix_mask(ya, p, rng, spec.pool);
      };
    }
    case MixStrategy::none:
      break;
  }
  return {};
}

void ema_update(ModelParams& teacher, const ModelParams& student, double alpha) {
  if (!teacher.same_shapes(student)) throw std::invalid_argument("ema_update: teacher/student shapes differ");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("ema_update: alpha must be in [0,1]");
  if (alpha == 1.0) return;
  auto& tp = teacher.params();
  const auto& sp = student.params();
  for (std::size_t i = 0; i < tp.size(); ++i) {
    auto& phi = tp[i].value;
    const auto& theta = sp[i].value;
    if (alpha == 0.0) {
      phi = theta;
      continue;
    }
    for (std::size_t k = 0; k < phi.size(); ++k) phi[k] = alpha * phi[k] + (1.0 - alpha) * theta[k];
  }
}

ModelParams copy_values(const ModelParams& src) {
  ModelParams out = src;
  for (auto& p : out.params()) {
    std::fill(p.grad.begin(), p.grad.end(), 0.0);
    std::fill(p.momentum.begin(), p.momentum.end(), 0.0);
  }
  return out;
}

TrainState init_state(const SegmentationModel& model, const ExperimentConfig& config) {
  config.validate();
  TrainState s;
  s.config = config;
  s.rng = Rng(config.seed);
  s.mask_rng = s.rng.fork(kMaskStream);
  Rng init = s.rng.fork(kInitStream);
  s.student = model.init_params(init);
  s.teacher = copy_values(s.student);
  return s;
}

namespace {

// Forward, loss, and backward for each labeled sample; returns batch-mean loss.
double accumulate_supervised(TrainState& state, const SegmentationModel& model,
                             const std::vector<const Sample*>& labeled) {
  double total = 0.0;
  for (const Sample* s : labeled) {
    const ForwardPass pass = model.forward(state.student, s->image);
    const LossResult r = supervised_ce(softmax(pass.logits), s->labels, labeled.size());
    check_loss(r.loss, "supervised loss");
    model.backward(state.student, pass, r.grad_logits);
    total += r.loss;
  }
  return total;
}

}  // namespace

LogRow supervised_step(TrainState& state, const SegmentationModel& model,
                       const std::vector<const Sample*>& labeled) {
  const auto& c = state.config;
  if (state.iter >= c.total_iters) throw std::logic_error("supervised_step: iteration budget exhausted");
  LogRow row;
  row.iter = state.iter;
  row.lr = poly_lr(state.iter, c.total_iters, c.lr0, c.poly_power);
  state.student.zero_grad();
  row.loss.supervised_loss = accumulate_supervised(state, model, labeled);
  row.loss.total = row.loss.supervised_loss;
  sgd_step(state.student, row.lr, c.momentum, c.weight_decay);
  ++state.iter;
  state.history.push_back(row);
  return row;
}

void warmup(TrainState& state, const SegmentationModel& model,
            const std::function<std::vector<const Sample*>()>& next_labeled) {
  if (state.iter != 0) throw std::logic_error("warmup: state has already been trained");
  const std::size_t n = state.config.resolved_warmup();
  for (std::size_t i = 0; i < n; ++i) supervised_step(state, model, next_labeled());
  state.teacher = copy_values(state.student);
}

LogRow semi_step(TrainState& state, const SegmentationModel& model,
                 const std::vector<const Sample*>& labeled, const std::vector<UnlabeledPair>& pairs,
                 const MaskGenerator* mask_override) {
  const auto& c = state.config;
  if (state.iter >= c.total_iters) throw std::logic_error("semi_step: iteration budget exhausted");
  LogRow row;
  row.iter = state.iter;
  row.lr = poly_lr(state.iter, c.total_iters, c.lr0, c.poly_power);
  const double lambda = effective_lambda(c, state.iter);
  row.loss.lambda = lambda;

  state.student.zero_grad();
  row.loss.supervised_loss = accumulate_supervised(state, model, labeled);

  MaskGenerator generator;
  if (mask_override != nullptr) {
    generator = *mask_override;
  } else {
    generator = make_mask_generator(c);
  }
  if (generator && !pairs.empty()) {
    double unsup = 0.0;
    double gated = 0.0;
    bool any_empty = false;
    for (const auto& pair : pairs) {
      const ProbMap pa = softmax(model.forward(state.teacher, *pair.a).logits);
      const ProbMap pb = softmax(model.forward(state.teacher, *pair.b).logits);
      const LabelMap ya = argmax_labels(pa);
      const LabelMap yb = argmax_labels(pb);
      const RealGrid ga = confidence_gate(pa, c.tau);
      const RealGrid gb = confidence_gate(pb, c.tau);

      const MixMask m = generator(ya, state.mask_rng);
      if (m.popcount() == 0) ++row.degenerate_masks;
      const Image mixed = mix_images(*pair.a, *pair.b, m);
      const LabelMap target = mix_labels(ya, yb, m);
      const RealGrid gate = mix_weights(ga, gb, m);

      const ForwardPass pass = model.forward(state.student, mixed);
      LossResult r = unsupervised_ce(softmax(pass.logits), target, gate, pairs.size(), c.gate_norm);
      check_loss(r.loss, "unsupervised loss");
      unsup += r.loss;
      gated += r.gated_fraction;
      any_empty = any_empty || r.empty_gate;
      if (lambda > 0.0 && !r.empty_gate) {
        for (auto& g : r.grad_logits.data) g *= lambda;
        model.backward(state.student, pass, r.grad_logits);
      }
    }
    row.loss.unsupervised_loss = unsup;
    row.loss.gated_pixel_fraction = gated / static_cast<double>(pairs.size());
    row.loss.empty_gate = any_empty;
  }
  row.loss.total = combined_loss(row.loss.supervised_loss, row.loss.unsupervised_loss, lambda);

  sgd_step(state.student, row.lr, c.momentum, c.weight_decay);
  ema_update(state.teacher, state.student, c.ema_alpha);
  ++state.iter;
  state.history.push_back(row);
  return row;
}

ConfusionMatrix evaluate(const SegmentationModel& model, const ModelParams& params, const Dataset& ds,
                         const std::vector<std::size_t>& ids) {
  ConfusionMatrix cm(ds.num_classes);
  for (auto id : ids) {
    const Sample& s = ds.samples.at(id);
    cm.accumulate(argmax_labels(softmax(model.forward(params, s.image).logits)), s.labels);
  }
  return cm;
}

void write_log_csv(std::ostream& out, const std::vector<LogRow>& history) {
  out << "iter,lr,L_s,L_u,lambda,gated_fraction,degenerate_masks,val_miou\n";
  char buf[256];
  for (const auto& r : history) {
    std::snprintf(buf, sizeof(buf), "%zu,%.10g,%.10g,%.10g,%.10g,%.10g,%zu,", r.iter, r.lr,
                  r.loss.supervised_loss, r.loss.unsupervised_loss, r.loss.lambda,
                  r.loss.gated_pixel_fraction, r.degenerate_masks);
    out << buf;
    if (r.val_miou) {
      std::snprintf(buf, sizeof(buf), "%.10g", *r.val_miou);
      out << buf;
    }
    out << "\n";
  }
}

namespace {

void persist(const RunOutputs& outputs, const ModelParams& student, const ModelParams& teacher,
             const std::vector<LogRow>& history) {
  if (!outputs.dir) return;
  std::filesystem::create_directories(*outputs.dir);
  save_checkpoint(*outputs.dir / "student.ckpt", student);
  save_checkpoint(*outputs.dir / "teacher.ckpt", teacher);
  std::ostringstream log;
  write_log_csv(log, history);
  write_file_atomic(*outputs.dir / "train_log.csv", log.str());
}

}  // namespace

RunResult run(const ExperimentConfig& config, const Dataset& dataset, const RunOutputs& outputs) {
  config.validate();
  if (dataset.num_classes < 2) throw std::invalid_argument("run: dataset needs at least 2 classes");
  const ReferenceNet model(dataset.num_classes, config.hidden_channels);

  RunResult result;
  result.state = init_state(model, config);
  TrainState& state = result.state;
  Rng split_rng = state.rng.fork(kSplitStream);
  result.split = make_split(dataset.train_pool, dataset.split.validation, config.labeled_fraction, split_rng);
  const auto& split = result.split;

  EpochSampler labeled_sampler(split.labeled, state.rng.fork(kLabeledStream));
  // With every pool image labeled, the consistency branch reuses their images.
  EpochSampler unlabeled_sampler(split.unlabeled.empty() ? split.labeled : split.unlabeled,
                                 state.rng.fork(kUnlabeledStream));

  auto next_labeled = [&] {
    std::vector<const Sample*> batch;
    for (auto id : labeled_sampler.next_batch(config.batch_size)) batch.push_back(&dataset.samples[id]);
    return batch;
  };
  auto maybe_eval = [&](LogRow& row) {
    if (config.eval_every > 0 && (row.iter + 1) % config.eval_every == 0 && !split.validation.empty()) {
      row.val_miou = mean_iou(evaluate(model, state.student, dataset, split.validation));
      state.history.back().val_miou = row.val_miou;
    }
  };

  ModelParams last_good_student = copy_values(state.student);
  ModelParams last_good_teacher = copy_values(state.teacher);
  try {
    const std::size_t warm = config.resolved_warmup();
    for (std::size_t i = 0; i < warm; ++i) {
      last_good_student = copy_values(state.student);
      LogRow row = supervised_step(state, model, next_labeled());
      maybe_eval(row);
    }
    state.teacher = copy_values(state.student);

    while (state.iter < config.total_iters) {
      last_good_student = copy_values(state.student);
      last_good_teacher = copy_values(state.teacher);
      const auto labeled = next_labeled();
      std::vector<UnlabeledPair> pairs;
      if (config.strategy != MixStrategy::none) {
        for (std::size_t b = 0; b < config.batch_size; ++b) {
          const std::size_t ia = unlabeled_sampler.next();
          const std::size_t ib = unlabeled_sampler.next();
          pairs.push_back({&dataset.samples[ia].image, &dataset.samples[ib].image});
        }
      }
      LogRow row = semi_step(state, model, labeled, pairs);
      maybe_eval(row);
    }
  } catch (...) {
    persist(outputs, last_good_student, last_good_teacher, state.history);
    throw;
  }

  result.confusion = evaluate(model, state.student, dataset, split.validation);
  result.final_miou = mean_iou(result.confusion);
  persist(outputs, state.student, state.teacher, state.history);
  return result;
}

}  // namespace mixseg
