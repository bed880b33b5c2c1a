#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mixseg/config.hpp"
#include "mixseg/data.hpp"
#include "mixseg/metrics.hpp"

namespace mixseg {

struct SweepSpec {
  std::vector<MixStrategy> strategies{MixStrategy::none, MixStrategy::complexmix};
  std::vector<double> fractions{0.125};
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t workers = 0;  // 0: one per hardware thread
  std::string dir = "sweep";
};

// Top-level config file. Relative directories resolve against the output
// root (--out, else MIXSEG_OUT_DIR, else the working directory).
struct ProjectConfig {
  std::string dataset_dir;  // required
  DatasetSpec dataset;
  ExperimentConfig experiment;
  std::optional<std::string> run_dir;
  SweepSpec sweep;
};

nlohmann::json read_json_file(const std::filesystem::path& path);
ProjectConfig project_from_json(const nlohmann::json& j);
nlohmann::json project_to_json(const ProjectConfig& c);

// "a.b=value": value parsed as JSON, falling back to a plain string.
void apply_override(nlohmann::json& j, const std::string& assignment);

std::filesystem::path resolve_out_root(const std::optional<std::string>& flag);

std::filesystem::path cmd_gen_data(const ProjectConfig& cfg, const std::filesystem::path& out_root);

struct TrainOutcome {
  std::filesystem::path run_dir;
  std::optional<double> miou;  // empty for dry runs
};
TrainOutcome cmd_train(const ProjectConfig& cfg, const std::filesystem::path& out_root, bool dry_run,
                       std::ostream& log);

struct SweepRow {
  MixStrategy strategy = MixStrategy::none;
  double fraction = 0.0;
  std::uint64_t seed = 0;
  std::string status;  // "ok" or "failed: <reason>"
  std::optional<double> miou;
  std::vector<std::optional<double>> iou;
};

// Runs every (strategy, fraction, seed) cell, writing results.csv and
// summary.csv under the sweep directory. With resume, cells that already
// have an "ok" row are kept and skipped.
std::vector<SweepRow> cmd_sweep(const ProjectConfig& cfg, const std::filesystem::path& out_root, bool resume,
                                std::ostream& log);

std::vector<SweepRow> read_results_csv(const std::filesystem::path& path);

ConfusionMatrix cmd_eval(const ProjectConfig& cfg, const std::filesystem::path& out_root,
                         const std::filesystem::path& checkpoint, const std::string& subset);

// Exit codes: 0 success, 1 configuration error, 2 runtime failure.
int cli_main(int argc, char** argv);

}  // namespace mixseg
