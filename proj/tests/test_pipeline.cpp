#include <cstdlib>

#include <gtest/gtest.h>

#include "fixture_builder.hpp"

using namespace ecstat;
using namespace ecstat::testing;

namespace {

RunConfig config_for(const std::filesystem::path& manifest, const std::filesystem::path& out, unsigned threads = 1) {
  RunConfig cfg;
  cfg.manifest_path = manifest;
  cfg.output_dir = out;
  cfg.threads = threads;
  cfg.seed = 7;
  return cfg;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ECSTAT_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(Evaluate, IdenticalFeaturesHitTheClamp) {
  TempDir dir("eval");
  const auto manifest = write_fixture(dir.path(), {1, 6, 6, false, true});
  auto result = cmd_evaluate(config_for(manifest, dir / "out"));
  ASSERT_EQ(result.records.size(), 1u);
  EXPECT_TRUE(result.failures.empty());
  EXPECT_NEAR(result.records[0].e_values.at("R11"), -std::log(1e-12), 1e-9);
  EXPECT_NEAR(result.records[0].e_values.at("R11"), 27.631, 1e-3);
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "evaluation.csv"));
}

TEST(Evaluate, MatchesDirectLibraryCalls) {
  TempDir dir("eval");
  const auto manifest_path = write_fixture(dir.path(), {3});
  const auto cfg = config_for(manifest_path, dir / "out");
  auto result = cmd_evaluate(cfg);
  ASSERT_EQ(result.records.size(), 3u);
  const auto manifest = load_manifest(manifest_path);
  const auto csv = load_ec_csv(dir / "out" / "evaluation.csv");
  EXPECT_EQ(csv, result.records);
  for (const auto& e : manifest.entries) {
    const auto t = load_feature_map(manifest.resolve(e.transferred_features.at("R11")), {AxisOrder::HWC, "R11"});
    const auto s = load_feature_map(manifest.resolve(e.style_features.at("R11")), {AxisOrder::HWC, "R11"});
    const auto dirs = make_directions(64, kDefaultDirections, layer_seed(7, 0));
    const double e_direct = e_statistic(t, s, dirs);
    const double lm_direct = object_coherence(t, load_mask(manifest.resolve(*e.mask))).l_m;
    auto it = std::find_if(result.records.begin(), result.records.end(),
                           [&](const auto& r) { return r.key() == e.key(); });
    ASSERT_NE(it, result.records.end());
    EXPECT_EQ(it->e_values.at("R11"), e_direct);
    EXPECT_EQ(it->c_lm.at("R11"), lm_direct);
  }
}

TEST(Evaluate, OutputIndependentOfThreadCount) {
  TempDir dir("eval");
  const auto manifest = write_fixture(dir.path(), {6});
  cmd_evaluate(config_for(manifest, dir / "one", 1));
  cmd_evaluate(config_for(manifest, dir / "four", 4));
  EXPECT_EQ(slurp(dir / "one" / "evaluation.csv"), slurp(dir / "four" / "evaluation.csv"));
}

TEST(Evaluate, RequireLmFailsEntriesWithoutMask) {
  TempDir dir("eval");
  const auto manifest = write_fixture(dir.path(), {2, 8, 8, false});
  auto cfg = config_for(manifest, dir / "out");
  EXPECT_EQ(cmd_evaluate(cfg).failures.size(), 0u);
  cfg.require_lm = true;
  auto result = cmd_evaluate(cfg);
  EXPECT_EQ(result.records.size(), 0u);
  EXPECT_EQ(result.failures.size(), 2u);
}

TEST(Evaluate, MissingFeatureFileIsReportedPerEntry) {
  TempDir dir("eval");
  const auto manifest = write_fixture(dir.path(), {3});
  std::filesystem::remove(dir / "feat" / "transfer1.npy");
  auto result = cmd_evaluate(config_for(manifest, dir / "out"));
  EXPECT_EQ(result.records.size(), 2u);
  ASSERT_EQ(result.failures.size(), 1u);
  EXPECT_EQ(result.failures[0].key.method, "acg");
  EXPECT_EQ(result.failures[0].key.style_id, "style0");
}

TEST(Evaluate, PbCsvSuppliesCAuc) {
  TempDir dir("eval");
  const auto manifest = write_fixture(dir.path(), {2});
  std::ofstream(dir / "pb.csv") << "method,style_id,content_id,style_weight,auc\n"
                                << "gatys,style0,content0,100,0.625\n";
  auto cfg = config_for(manifest, dir / "out");
  cfg.pb_csv = dir / "pb.csv";
  auto result = cmd_evaluate(cfg);
  ASSERT_EQ(result.records.size(), 2u);
  for (const auto& r : result.records) {
    if (r.method == "gatys") EXPECT_EQ(r.c_auc, 0.625);
    else EXPECT_FALSE(r.c_auc.has_value());
  }
}

TEST(Evaluate, ConfigurationProblems) {
  RunConfig cfg;
  EXPECT_TRUE(cfg.problems().empty());
  cfg.layers = {"R99"};
  cfg.threads = 0;
  EXPECT_EQ(cfg.problems().size(), 2u);
  EXPECT_THROW(cmd_evaluate(cfg), ArgumentError);
}

TEST(MakeManifest, MainScheme) {
  ManifestSpec spec;
  spec.styles = 10;
  spec.contents = 10;
  spec.seed = 3;
  const auto m = make_manifest(spec);
  ASSERT_EQ(m.entries.size(), 300u);
  std::map<double, std::set<std::pair<std::string, std::string>>> by_weight;
  for (const auto& e : m.entries) by_weight[e.style_weight].insert({e.style_id, e.content_id});
  ASSERT_EQ(by_weight.size(), 20u);
  EXPECT_EQ(by_weight.begin()->first, 50.0);
  EXPECT_EQ(by_weight.rbegin()->first, 2000.0);
  for (const auto& [w, pairs] : by_weight) EXPECT_EQ(pairs.size(), 15u);
  EXPECT_TRUE(std::all_of(m.entries.begin(), m.entries.end(), [](const auto& e) {
    return e.mask && *e.mask == "masks/" + e.content_id + ".png";
  }));
}

TEST(MakeManifest, AggressiveSchemeAndDeterminism) {
  ManifestSpec spec;
  spec.styles = 4;
  spec.contents = 5;
  spec.mode = WeightScheme::Aggressive;
  spec.seed = 11;
  const auto a = make_manifest(spec);
  ASSERT_EQ(a.entries.size(), 300u);
  for (const auto& e : a.entries) {
    EXPECT_GE(e.style_weight, 2000.0);
    EXPECT_LE(e.style_weight, 10000.0);
  }
  EXPECT_EQ(manifest_to_json(a), manifest_to_json(make_manifest(spec)));
  spec.seed = 12;
  EXPECT_NE(manifest_to_json(a), manifest_to_json(make_manifest(spec)));
  spec.styles = 2;
  spec.contents = 7;
  EXPECT_THROW(make_manifest(spec), ArgumentError);
}

TEST(MakeManifest, RoundTripsThroughJson) {
  ManifestSpec spec;
  spec.styles = 5;
  spec.contents = 3;
  const auto m = make_manifest(spec);
  const auto back = parse_manifest(manifest_to_json(m));
  EXPECT_EQ(manifest_to_json(back), manifest_to_json(m));
  const auto problems = validate_manifest(back);
  EXPECT_FALSE(problems.empty()); // placeholder paths do not exist yet
  EXPECT_TRUE(std::none_of(problems.begin(), problems.end(),
                           [](const auto& p) { return p.kind == ProblemKind::DuplicateTriplet; }));
}

TEST(EcPlotCommand, CurvesMatchLoessFit) {
  std::vector<TripletRecord> recs;
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0, 1);
  for (const char* m : {"acg", "gatys"})
    for (int i = 0; i < 30; ++i) {
      TripletRecord r;
      r.method = m;
      r.style_id = "s";
      r.content_id = "c" + std::to_string(i);
      r.style_weight = 100;
      r.c_auc = u(rng);
      r.e_values["R11"] = 2 * *r.c_auc + u(rng);
      recs.push_back(r);
    }
  const auto res = ec_plot(recs, "R11", std::nullopt, {});
  EXPECT_EQ(res.c_kind, CKind::Auc);
  ASSERT_EQ(res.curves_json.size(), 2u);
  for (const auto& j : res.curves_json) {
    const auto method = j.at("method").get<std::string>();
    const auto direct = loess_fit(ec_points(group_by_method(recs).at(method), "R11", CKind::Auc));
    EXPECT_EQ(j.at("fitted").get<std::vector<double>>(), direct.fitted);
  }
}

TEST(SymmetryCheck, TwentyTrialsPass) {
  SymmetryCheckOptions o;
  o.trials = 20;
  o.seed = 5;
  const auto report = cmd_symmetry_check(o);
  EXPECT_TRUE(report.at("all_ok").get<bool>());
  EXPECT_EQ(report.at("trials").size(), 20u);
}

TEST(OutputDir, FlagThenEnvironment) {
  ::unsetenv(kOutputDirEnv);
  EXPECT_EQ(resolve_output_dir(std::nullopt), ".");
  ::setenv(kOutputDirEnv, "/tmp/from_env", 1);
  EXPECT_EQ(resolve_output_dir(std::nullopt), "/tmp/from_env");
  EXPECT_EQ(resolve_output_dir(std::filesystem::path("flag")), "flag");
  ::unsetenv(kOutputDirEnv);
}

TEST(Cli, ExitCodesAndOutputs) {
  TempDir dir("cli");
  const auto manifest = write_fixture(dir.path(), {4});
  const auto out = (dir / "out").string();
  EXPECT_EQ(run_cli("-o " + out + " evaluate " + manifest.string() + " --seed 7"), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "evaluation.csv"));
  const auto csv = (dir / "out" / "evaluation.csv").string();
  EXPECT_EQ(run_cli("-o " + out + " ensemble " + csv), 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "ensemble_E.csv"));
  EXPECT_EQ(run_cli("-o " + out + " make-manifest --styles 4 --contents 4"), 0);
  EXPECT_EQ(load_manifest(dir / "out" / "manifest.json").entries.size(), 300u);
  EXPECT_EQ(run_cli("-o " + out + " gram " + (dir / "feat" / "style0.npy").string()), 0);
  EXPECT_EQ(npy::load(dir / "out" / "gram.npy").shape, (std::vector<std::size_t>{64, 64}));
  EXPECT_EQ(run_cli("symmetry-check --trials 3"), 0);

  EXPECT_EQ(run_cli(""), 2);
  EXPECT_EQ(run_cli("evaluate"), 2);
  EXPECT_EQ(run_cli("symmetry-check --c1 4 --c2 6"), 2);
  EXPECT_EQ(run_cli("-o " + out + " make-manifest --styles 2 --contents 2"), 2);
  EXPECT_EQ(run_cli("-o " + out + " evaluate " + manifest.string() + " --require-lm --layer R21"), 1);
}
