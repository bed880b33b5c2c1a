#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "mixseg/cli.hpp"

using namespace mixseg;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json tiny_json() {
  return json{{"dataset_dir", "data"},
              {"dataset", {{"train_pool", 8}, {"val_pool", 4}, {"scene", {{"height", 8}, {"width", 8}}}}},
              {"experiment",
               {{"total_iters", 8}, {"lr0", 0.05}, {"hidden_channels", 4}, {"p_choices", {2, 4}},
                {"labeled_fraction", 0.25}}},
              {"sweep", {{"strategies", {"none", "complexmix"}}, {"seeds", {0, 1}}, {"workers", 2}}}};
}

fs::path fresh(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("mixseg_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

int invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "mixseg");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST(ProjectConfig, MissingRequiredFieldNamed) {
  try {
    project_from_json(json::object());
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "dataset_dir");
  }
}

TEST(ProjectConfig, NestedFieldsQualified) {
  json j = tiny_json();
  j["experiment"]["momentun"] = 0.5;
  try {
    project_from_json(j);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(e.field(), "experiment.momentun");
  }
  json k = tiny_json();
  k["sweep"]["strategies"] = {"mixup"};
  EXPECT_THROW(project_from_json(k), ConfigError);
}

TEST(ProjectConfig, RoundTrip) {
  const ProjectConfig c = project_from_json(tiny_json());
  EXPECT_EQ(project_to_json(project_from_json(project_to_json(c))), project_to_json(c));
}

TEST(Overrides, SetNestedValues) {
  json j = tiny_json();
  apply_override(j, "experiment.lr0=0.5");
  apply_override(j, "experiment.strategy=cutmix");
  apply_override(j, "run_dir=\"runs/x\"");
  const ProjectConfig c = project_from_json(j);
  EXPECT_EQ(c.experiment.lr0, 0.5);
  EXPECT_EQ(c.experiment.strategy, MixStrategy::cutmix);
  EXPECT_EQ(*c.run_dir, "runs/x");
  EXPECT_THROW(apply_override(j, "noequals"), ConfigError);
  EXPECT_THROW(apply_override(j, "experiment.lr0.x=1"), ConfigError);
}

TEST(GenData, DefaultLayoutAndIdempotentBytes) {
  const fs::path root = fresh("gen");
  ProjectConfig c = project_from_json(json{{"dataset_dir", "data"}});
  const fs::path dir = cmd_gen_data(c, root);
  std::size_t images = 0, labels = 0;
  for (const auto& e : fs::directory_iterator(dir / "images")) images += e.path().extension() == ".ppm";
  for (const auto& e : fs::directory_iterator(dir / "labels")) labels += e.path().extension() == ".pgm";
  EXPECT_EQ(images, 300u);
  EXPECT_EQ(labels, 300u);
  const std::string split = slurp(dir / "split.json"), img = slurp(dir / "images" / "0123.ppm");
  cmd_gen_data(c, root);
  EXPECT_EQ(slurp(dir / "split.json"), split);
  EXPECT_EQ(slurp(dir / "images" / "0123.ppm"), img);
  fs::remove_all(root);
}

TEST(Train, RepeatRunsAreBitIdentical) {
  const fs::path root = fresh("train");
  ProjectConfig c = project_from_json(tiny_json());
  cmd_gen_data(c, root);
  std::ostringstream log;
  c.run_dir = "a";
  const auto a = cmd_train(c, root, false, log);
  c.run_dir = "b";
  const auto b = cmd_train(c, root, false, log);
  for (const char* f : {"student.ckpt", "teacher.ckpt", "train_log.csv"})
    EXPECT_EQ(slurp(a.run_dir / f), slurp(b.run_dir / f)) << f;
  EXPECT_EQ(*a.miou, *b.miou);
  const std::string eval = slurp(a.run_dir / "eval.csv");
  EXPECT_EQ(eval.rfind("# config {", 0), 0u);
  fs::remove_all(root);
}

TEST(Train, DryRunWritesNothing) {
  const fs::path root = fresh("dry");
  const ProjectConfig c = project_from_json(tiny_json());
  std::ostringstream log;
  const auto out = cmd_train(c, root, true, log);
  EXPECT_FALSE(out.miou.has_value());
  EXPECT_FALSE(fs::exists(out.run_dir));
  EXPECT_NE(log.str().find("plan: 0 supervised warm-up iterations, 8 complexmix"), std::string::npos);
  fs::remove_all(root);
}

TEST(Sweep, CountsCellsAggregatesAndResumes) {
  const fs::path root = fresh("sweep");
  const ProjectConfig c = project_from_json(tiny_json());
  cmd_gen_data(c, root);
  std::ostringstream log;
  const auto rows = cmd_sweep(c, root, false, log);
  ASSERT_EQ(rows.size(), 4u);
  for (const auto& r : rows) EXPECT_EQ(r.status, "ok");

  const auto stored = read_results_csv(root / "sweep" / "results.csv");
  ASSERT_EQ(stored.size(), 4u);
  std::vector<double> none;
  for (const auto& r : stored)
    if (r.strategy == MixStrategy::none) none.push_back(*r.miou);
  const std::string summary = slurp(root / "sweep" / "summary.csv");
  EXPECT_NE(summary.find("none," + format_percent_summary(mean_iou_over_seeds(none))), std::string::npos);
  EXPECT_EQ(summary.find("strategy,0.125\n"), 0u);

  const auto before = fs::last_write_time(root / "sweep" / "runs" / "none_f0.125_s0" / "student.ckpt");
  std::ostringstream log2;
  cmd_sweep(c, root, true, log2);
  EXPECT_NE(log2.str().find("4 cells, 0 to run"), std::string::npos);
  EXPECT_EQ(fs::last_write_time(root / "sweep" / "runs" / "none_f0.125_s0" / "student.ckpt"), before);
  fs::remove_all(root);
}

TEST(Sweep, FailedCellsRecordedAndOthersContinue) {
  const fs::path root = fresh("sweepfail");
  json j = tiny_json();
  j["sweep"]["fractions"] = {0.01, 0.25};
  j["sweep"]["strategies"] = {"none"};
  j["sweep"]["seeds"] = {0};
  const ProjectConfig c = project_from_json(j);
  cmd_gen_data(c, root);
  std::ostringstream log;
  const auto rows = cmd_sweep(c, root, false, log);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].status.rfind("failed: ", 0), 0u);
  EXPECT_EQ(rows[1].status, "ok");
  fs::remove_all(root);
}

TEST(CliMain, ExitCodes) {
  const fs::path root = fresh("main");
  const fs::path cfg = root / "c.json";
  std::ofstream(cfg) << tiny_json().dump();
  const std::string out = "--out=" + root.string();
  EXPECT_EQ(invoke({"train", cfg.string(), out}), 2);  // no dataset yet
  EXPECT_EQ(invoke({"gen-data", cfg.string(), out}), 0);
  EXPECT_EQ(invoke({"train", cfg.string(), out, "--set", "experiment.tau=2"}), 1);
  EXPECT_EQ(invoke({"train", cfg.string(), out, "--iters", "3", "--run-dir", "r"}), 0);
  EXPECT_TRUE(fs::exists(root / "r" / "student.ckpt"));
  EXPECT_EQ(invoke({"eval", cfg.string(), out, "--checkpoint", (root / "r" / "student.ckpt").string()}), 0);
  EXPECT_EQ(invoke({"eval", cfg.string(), out, "--checkpoint", (root / "missing.ckpt").string()}), 2);
  EXPECT_EQ(invoke({"frobnicate"}), 1);
  EXPECT_EQ(invoke({"gen-data", (root / "absent.json").string()}), 1);
  fs::remove_all(root);
}
