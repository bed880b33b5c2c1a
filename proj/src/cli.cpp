#include "mixseg/cli.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "mixseg/trainer.hpp"

namespace mixseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Re-raises a nested ConfigError with its field qualified by the section.
template <typename F>
auto within(const std::string& section, F&& f) {
  try {
    return f();
  } catch (const ConfigError& e) {
    const std::string what = e.what();
    const std::string prefix = e.field() + ": ";
    const std::string msg = what.rfind(prefix, 0) == 0 ? what.substr(prefix.size()) : what;
    throw ConfigError(section + "." + e.field(), msg);
  }
}

std::string fraction_label(double f) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", f);
  return buf;
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string cell_name(MixStrategy s, double fraction, std::uint64_t seed) {
  return to_string(s) + "_f" + fraction_label(fraction) + "_s" + std::to_string(seed);
}

bool is_count(const json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

SweepSpec sweep_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("sweep", "expected a JSON object");
  SweepSpec s;
  for (const auto& [key, v] : j.items()) {
    const std::string field = "sweep." + key;
    if (key == "strategies") {
      if (!v.is_array() || v.empty()) throw ConfigError(field, "expected a non-empty array of strategy names");
      s.strategies.clear();
      for (const auto& e : v) {
        if (!e.is_string()) throw ConfigError(field, "expected strategy names");
        try {
          s.strategies.push_back(parse_strategy(e.get<std::string>()));
        } catch (const ConfigError&) {
          throw ConfigError(field, "unknown strategy '" + e.get<std::string>() + "'");
        }
      }
    } else if (key == "fractions") {
      if (!v.is_array() || v.empty()) throw ConfigError(field, "expected a non-empty array of numbers");
      s.fractions.clear();
      for (const auto& e : v) {
        if (!e.is_number() || !(e.get<double>() > 0.0 && e.get<double>() <= 1.0)) {
          throw ConfigError(field, "each fraction must be a number in (0,1]");
        }
        s.fractions.push_back(e.get<double>());
      }
    } else if (key == "seeds") {
      if (!v.is_array() || v.empty()) throw ConfigError(field, "expected a non-empty array of integers");
      s.seeds.clear();
      for (const auto& e : v) {
        if (!is_count(e)) throw ConfigError(field, "seeds must be non-negative integers");
        s.seeds.push_back(e.get<std::uint64_t>());
      }
    } else if (key == "workers") {
      if (!is_count(v)) throw ConfigError(field, "expected a non-negative integer");
      s.workers = v.get<std::size_t>();
    } else if (key == "dir") {
      if (!v.is_string()) throw ConfigError(field, "expected a string");
      s.dir = v.get<std::string>();
    } else {
      throw ConfigError(field, "unknown field");
    }
  }
  return s;
}

json sweep_to_json(const SweepSpec& s) {
  json strategies = json::array();
  for (auto st : s.strategies) strategies.push_back(to_string(st));
  return json{{"strategies", strategies}, {"fractions", s.fractions}, {"seeds", s.seeds},
              {"workers", s.workers}, {"dir", s.dir}};
}

fs::path under(const fs::path& root, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : root / path;
}

Dataset load_dataset(const ProjectConfig& cfg, const fs::path& out_root) {
  const fs::path dir = under(out_root, cfg.dataset_dir);
  if (!fs::exists(dir / "split.json")) {
    throw std::runtime_error("dataset not found at " + dir.string() + " (run gen-data first)");
  }
  return read_dataset(dir);
}

std::string csv_safe(std::string s) {
  for (auto& ch : s)
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  return s;
}

std::string config_comment(const json& j) { return "# config " + j.dump() + "\n"; }

void write_results(const fs::path& path, const json& header, const std::vector<SweepRow>& rows,
                   std::size_t num_classes) {
  std::ostringstream out;
  out << config_comment(header);
  out << "strategy,labeled_fraction,seed,status,miou";
  for (std::size_t c = 0; c < num_classes; ++c) out << ",iou_" << c;
  out << "\n";
  for (const auto& r : rows) {
    out << to_string(r.strategy) << "," << fraction_label(r.fraction) << "," << r.seed << "," << csv_safe(r.status)
        << "," << (r.miou ? format_real(*r.miou) : "");
    for (std::size_t c = 0; c < num_classes; ++c) {
      out << ",";
      if (c < r.iou.size() && r.iou[c]) out << format_real(*r.iou[c]);
    }
    out << "\n";
  }
  write_file_atomic(path, out.str());
}

void write_summary(const fs::path& path, const SweepSpec& spec, const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "strategy";
  for (double f : spec.fractions) out << "," << fraction_label(f);
  out << "\n";
  for (auto s : spec.strategies) {
    out << to_string(s);
    for (double f : spec.fractions) {
      std::vector<double> per_seed;
      for (const auto& r : rows)
        if (r.strategy == s && r.fraction == f && r.miou) per_seed.push_back(*r.miou);
      out << ",";
      if (!per_seed.empty()) out << format_percent_summary(mean_iou_over_seeds(per_seed));
    }
    out << "\n";
  }
  write_file_atomic(path, out.str());
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

}  // namespace

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("<file>", "cannot open config " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("<file>", std::string("invalid JSON: ") + e.what());
  }
}

ProjectConfig project_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("<root>", "expected a JSON object");
  ProjectConfig c;
  bool have_dataset_dir = false;
  for (const auto& [key, v] : j.items()) {
    if (key == "dataset_dir") {
      if (!v.is_string() || v.get<std::string>().empty()) throw ConfigError(key, "expected a non-empty string");
      c.dataset_dir = v.get<std::string>();
      have_dataset_dir = true;
    } else if (key == "dataset") {
      c.dataset = within("dataset", [&] { return dataset_spec_from_json(v); });
    } else if (key == "experiment") {
      c.experiment = within("experiment", [&] { return experiment_from_json(v); });
    } else if (key == "run_dir") {
      if (!v.is_string()) throw ConfigError(key, "expected a string");
      c.run_dir = v.get<std::string>();
    } else if (key == "sweep") {
      c.sweep = sweep_from_json(v);
    } else {
      throw ConfigError(key, "unknown field");
    }
  }
  if (!have_dataset_dir) throw ConfigError("dataset_dir", "required field is missing");
  return c;
}

json project_to_json(const ProjectConfig& c) {
  json j;
  j["dataset_dir"] = c.dataset_dir;
  j["dataset"] = dataset_spec_to_json(c.dataset);
  j["experiment"] = experiment_to_json(c.experiment);
  if (c.run_dir) j["run_dir"] = *c.run_dir;
  j["sweep"] = sweep_to_json(c.sweep);
  return j;
}

void apply_override(json& j, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError(assignment, "override must look like key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;
  }
  json* node = &j;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError(key, "empty path component");
    if (!node->is_object()) throw ConfigError(key, "cannot descend into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    start = dot + 1;
  }
}

fs::path resolve_out_root(const std::optional<std::string>& flag) {
  if (flag && !flag->empty()) return *flag;
  if (const char* env = std::getenv("MIXSEG_OUT_DIR"); env != nullptr && *env != '\0') return env;
  return fs::current_path();
}

fs::path cmd_gen_data(const ProjectConfig& cfg, const fs::path& out_root) {
  const fs::path dir = under(out_root, cfg.dataset_dir);
  const Dataset ds = generate_dataset(cfg.dataset);
  write_dataset(dir, ds);
  write_file_atomic(dir / "dataset.json", dataset_spec_to_json(cfg.dataset).dump(2) + "\n");
  return dir;
}

TrainOutcome cmd_train(const ProjectConfig& cfg, const fs::path& out_root, bool dry_run, std::ostream& log) {
  const ExperimentConfig& e = cfg.experiment;
  const std::string name = cfg.run_dir.value_or("runs/" + to_string(e.strategy) + "_s" + std::to_string(e.seed));
  TrainOutcome outcome{under(out_root, name), std::nullopt};
  const json header = project_to_json(cfg);

  if (dry_run) {
    const std::size_t warm = e.resolved_warmup();
    const auto labeled = static_cast<std::size_t>(
        std::llround(e.labeled_fraction * static_cast<double>(cfg.dataset.train_pool)));
    log << header.dump(2) << "\n";
    log << "plan: " << warm << " supervised warm-up iterations, " << (e.total_iters - warm) << " "
        << (e.strategy == MixStrategy::none ? "supervised" : to_string(e.strategy) + " mean-teacher")
        << " iterations, batch " << e.batch_size << "\n";
    log << "split: " << labeled << " labeled, " << (cfg.dataset.train_pool - labeled) << " unlabeled, "
        << cfg.dataset.val_pool << " validation\n";
    log << "outputs: " << outcome.run_dir.string() << "\n";
    return outcome;
  }

  const Dataset ds = load_dataset(cfg, out_root);
  fs::create_directories(outcome.run_dir);
  write_file_atomic(outcome.run_dir / "config.json", header.dump(2) + "\n");
  const RunResult r = run(e, ds, RunOutputs{outcome.run_dir});

  std::ostringstream eval;
  eval << config_comment(header);
  eval << "strategy,labeled_fraction,seed,miou";
  const auto iou = iou_per_class(r.confusion);
  for (std::size_t c = 0; c < iou.size(); ++c) eval << ",iou_" << c;
  eval << "\n" << to_string(e.strategy) << "," << fraction_label(e.labeled_fraction) << "," << e.seed << ","
       << format_real(r.final_miou);
  for (const auto& v : iou) eval << "," << (v ? format_real(*v) : "");
  eval << "\n";
  write_file_atomic(outcome.run_dir / "eval.csv", eval.str());
  outcome.miou = r.final_miou;
  log << "mIoU " << format_real(100.0 * r.final_miou) << " (" << outcome.run_dir.string() << ")\n";
  return outcome;
}

std::vector<SweepRow> read_results_csv(const fs::path& path) {
  std::vector<SweepRow> rows;
  std::ifstream in(path);
  if (!in) return rows;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto f = split_csv_line(line);
    if (f.size() < 5) throw FormatError("results.csv: short row '" + line + "'");
    SweepRow r;
    r.strategy = parse_strategy(f[0]);
    r.fraction = std::stod(f[1]);
    r.seed = std::stoull(f[2]);
    r.status = f[3];
    if (!f[4].empty()) r.miou = std::stod(f[4]);
    for (std::size_t k = 5; k < f.size(); ++k)
      r.iou.push_back(f[k].empty() ? std::nullopt : std::optional<double>(std::stod(f[k])));
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<SweepRow> cmd_sweep(const ProjectConfig& cfg, const fs::path& out_root, bool resume,
                                std::ostream& log) {
  const Dataset ds = load_dataset(cfg, out_root);
  const SweepSpec& spec = cfg.sweep;
  const fs::path dir = under(out_root, spec.dir);
  fs::create_directories(dir);
  const json header = project_to_json(cfg);
  write_file_atomic(dir / "config.json", header.dump(2) + "\n");

  struct Cell {
    MixStrategy strategy;
    double fraction;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (auto s : spec.strategies)
    for (double f : spec.fractions)
      for (auto seed : spec.seeds) cells.push_back({s, f, seed});

  std::map<std::string, SweepRow> done;
  if (resume) {
    for (auto& r : read_results_csv(dir / "results.csv"))
      if (r.status == "ok") done[cell_name(r.strategy, r.fraction, r.seed)] = r;
  }

  std::vector<std::optional<SweepRow>> results(cells.size());
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    auto it = done.find(cell_name(cells[i].strategy, cells[i].fraction, cells[i].seed));
    if (it != done.end()) {
      results[i] = it->second;
    } else {
      todo.push_back(i);
    }
  }
  log << cells.size() << " cells, " << todo.size() << " to run\n";

  std::mutex mu;
  auto flush = [&] {
    std::vector<SweepRow> rows;
    for (const auto& r : results)
      if (r) rows.push_back(*r);
    write_results(dir / "results.csv", header, rows, ds.num_classes);
  };
  flush();

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < todo.size(); k = next++) {
      const Cell& cell = cells[todo[k]];
      ExperimentConfig e = cfg.experiment;
      e.strategy = cell.strategy;
      e.labeled_fraction = cell.fraction;
      e.seed = cell.seed;
      if (cell.strategy == MixStrategy::none) e.lambda = 0.0;
      SweepRow row{cell.strategy, cell.fraction, cell.seed, "ok", std::nullopt, {}};
      try {
        const fs::path run_dir = dir / "runs" / cell_name(cell.strategy, cell.fraction, cell.seed);
        const RunResult r = run(e, ds, RunOutputs{run_dir});
        row.miou = r.final_miou;
        row.iou = iou_per_class(r.confusion);
      } catch (const std::exception& ex) {
        row.status = std::string("failed: ") + ex.what();
      }
      std::lock_guard<std::mutex> lock(mu);
      results[todo[k]] = row;
      log << cell_name(cell.strategy, cell.fraction, cell.seed) << " "
          << (row.miou ? format_real(100.0 * *row.miou) : row.status) << "\n";
      flush();
    }
  };
  std::size_t workers = spec.workers != 0 ? spec.workers : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, std::max<std::size_t>(todo.size(), 1));
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<SweepRow> rows;
  for (auto& r : results) rows.push_back(std::move(*r));
  write_summary(dir / "summary.csv", spec, rows);
  return rows;
}

ConfusionMatrix cmd_eval(const ProjectConfig& cfg, const fs::path& out_root, const fs::path& checkpoint,
                         const std::string& subset) {
  const Dataset ds = load_dataset(cfg, out_root);
  std::vector<std::size_t> ids;
  if (subset == "validation") {
    ids = ds.split.validation;
  } else if (subset == "train") {
    ids = ds.train_pool;
  } else if (subset == "all") {
    ids.resize(ds.samples.size());
    for (std::size_t k = 0; k < ids.size(); ++k) ids[k] = k;
  } else {
    throw ConfigError("--subset", "expected validation, train or all");
  }
  const ModelParams params = load_checkpoint(checkpoint);
  const ReferenceNet model(ds.num_classes, cfg.experiment.hidden_channels);
  return evaluate(model, params, ds, ids);
}

int cli_main(int argc, char** argv) {
  CLI::App app{"Mask-mixing semi-supervised segmentation experiments"};
  app.require_subcommand(1);
  app.fallthrough();
  std::optional<std::string> out_flag;
  app.add_option("--out", out_flag, "Output root (default: $MIXSEG_OUT_DIR or the working directory)");

  std::string config_path;
  std::vector<std::string> overrides;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("config", config_path, "JSON config file")->required();
    sub->add_option("--set", overrides, "Override a config field, e.g. experiment.lr0=0.01");
  };

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset and split");
  add_common(gen);

  auto* train = app.add_subcommand("train", "Train one run and evaluate it");
  add_common(train);
  bool dry_run = false;
  std::optional<std::string> strategy;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> iters;
  std::optional<double> fraction;
  train->add_flag("--dry-run", dry_run, "Print the resolved config and iteration plan only");
  train->add_option("--strategy", strategy, "none|cutmix|classmix|complexmix");
  train->add_option("--seed", seed, "Run seed");
  train->add_option("--iters", iters, "Total iterations");
  train->add_option("--fraction", fraction, "Labeled fraction");
  std::optional<std::string> run_dir;
  train->add_option("--run-dir", run_dir, "Run output directory");

  auto* sweep = app.add_subcommand("sweep", "Run strategies x fractions x seeds and summarise");
  add_common(sweep);
  bool resume = false;
  sweep->add_flag("--resume", resume, "Skip cells that already have an ok row in results.csv");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  add_common(ev);
  std::string checkpoint;
  std::string subset = "validation";
  ev->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  ev->add_option("--subset", subset, "validation|train|all");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    json raw = read_json_file(config_path);
    if (strategy) overrides.push_back("experiment.strategy=" + json(*strategy).dump());
    if (run_dir) overrides.push_back("run_dir=" + json(*run_dir).dump());
    if (seed) overrides.push_back("experiment.seed=" + std::to_string(*seed));
    if (iters) overrides.push_back("experiment.total_iters=" + std::to_string(*iters));
    if (fraction) overrides.push_back("experiment.labeled_fraction=" + format_real(*fraction));
    for (const auto& o : overrides) apply_override(raw, o);
    const ProjectConfig cfg = project_from_json(raw);
    const fs::path root = resolve_out_root(out_flag);

    if (*gen) {
      std::cout << cmd_gen_data(cfg, root).string() << "\n";
    } else if (*train) {
      cmd_train(cfg, root, dry_run, std::cout);
    } else if (*sweep) {
      const auto rows = cmd_sweep(cfg, root, resume, std::cout);
      std::ifstream summary(under(root, cfg.sweep.dir) / "summary.csv");
      std::cout << summary.rdbuf();
      const bool any_failed = std::any_of(rows.begin(), rows.end(), [](const SweepRow& r) { return !r.miou; });
      return any_failed ? 2 : 0;
    } else if (*ev) {
      const ConfusionMatrix cm = cmd_eval(cfg, root, checkpoint, subset);
      const auto iou = iou_per_class(cm);
      std::cout << "miou";
      for (std::size_t c = 0; c < iou.size(); ++c) std::cout << ",iou_" << c;
      std::cout << "\n" << format_real(mean_iou(cm));
      for (const auto& v : iou) std::cout << "," << (v ? format_real(*v) : "");
      std::cout << "\n";
    }
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace mixseg
