#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

#include "mixseg/config.hpp"
#include "mixseg/core.hpp"
#include "mixseg/data.hpp"
#include "mixseg/losses.hpp"
#include "mixseg/metrics.hpp"
#include "mixseg/model.hpp"

namespace mixseg {

struct LogRow {
  std::size_t iter = 0;  // iteration index the update was applied at
  double lr = 0.0;
  LossReport loss;
  std::size_t degenerate_masks = 0;
  std::optional<double> val_miou;
};

struct TrainState {
  ModelParams student;
  ModelParams teacher;
  std::size_t iter = 0;
  Rng rng;       // root stream; the others are forked from it
  Rng mask_rng;  // consumed by mask generation only
  ExperimentConfig config;
  std::vector<LogRow> history;
};

// Cycles through ids in a seeded order, reshuffling when an epoch is used up.
class EpochSampler {
 public:
  EpochSampler(std::vector<std::size_t> ids, Rng rng);
  std::size_t next();
  std::vector<std::size_t> next_batch(std::size_t n);

 private:
  void reshuffle();
  std::vector<std::size_t> ids_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

struct UnlabeledPair {
  const Image* a;
  const Image* b;
};

// Builds the mix mask from the teacher's labels for the first image.
using MaskGenerator = std::function<MixMask(const LabelMap& teacher_labels_a, Rng& rng)>;
MaskGenerator make_mask_generator(const ExperimentConfig& config);

// phi <- alpha*phi + (1-alpha)*theta; alpha = 0 copies, alpha = 1 is a no-op.
void ema_update(ModelParams& teacher, const ModelParams& student, double alpha);

// Copies parameter values only; gradient and momentum buffers are zeroed.
ModelParams copy_values(const ModelParams& src);

TrainState init_state(const SegmentationModel& model, const ExperimentConfig& config);

// One supervised update of the student on the batch.
LogRow supervised_step(TrainState& state, const SegmentationModel& model,
                       const std::vector<const Sample*>& labeled);

// Runs warmup_iters supervised steps, then copies the student into the teacher.
void warmup(TrainState& state, const SegmentationModel& model,
            const std::function<std::vector<const Sample*>()>& next_labeled);

// One mean-teacher iteration: teacher pseudo-labels and gates for each
// pair, mask from the first image, mixed input/target/gate, combined loss
// gradient, SGD step at poly_lr, EMA teacher update.
LogRow semi_step(TrainState& state, const SegmentationModel& model,
                 const std::vector<const Sample*>& labeled, const std::vector<UnlabeledPair>& pairs,
                 const MaskGenerator* mask_override = nullptr);

ConfusionMatrix evaluate(const SegmentationModel& model, const ModelParams& params, const Dataset& ds,
                         const std::vector<std::size_t>& ids);

struct RunResult {
  TrainState state;
  SplitManifest split;
  ConfusionMatrix confusion{1};
  double final_miou = 0.0;
};

struct RunOutputs {
  // When set: student.ckpt, teacher.ckpt and train_log.csv are written here,
  // including after a failure (last good parameters, partial log).
  std::optional<std::filesystem::path> dir;
};

// Split is drawn from the dataset's training pool with the run seed;
// evaluation uses the dataset's validation ids.
RunResult run(const ExperimentConfig& config, const Dataset& dataset, const RunOutputs& outputs = {});

// iter,lr,L_s,L_u,lambda,gated_fraction,degenerate_masks,val_miou
void write_log_csv(std::ostream& out, const std::vector<LogRow>& history);

}  // namespace mixseg
