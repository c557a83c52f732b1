// ecstat: evaluate style-transfer outputs (E/C statistics, EC plots,
// ensembles, symmetry checks).
//
// Exit codes: 0 ok, 1 partial failure / runtime error, 2 usage error.

#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ecstat/ecstat.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ecstat::IoError("cannot write " + path.string());
  out << text;
}

std::optional<ecstat::CKind> parse_c_kind(const std::string& s) {
  if (s == "auc") return ecstat::CKind::Auc;
  if (s == "lm") return ecstat::CKind::Lm;
  if (s == "auto") return std::nullopt;
  throw CLI::ValidationError("--c-kind", "must be auc, lm or auto");
}

} // namespace

int main(int argc, char** argv) {
  using namespace ecstat;
  CLI::App app{"Quantitative evaluation of style-transfer outputs"};
  app.require_subcommand(1);
  std::optional<std::filesystem::path> output_dir;
  app.add_option("-o,--output-dir", output_dir, "Output directory (default: $ECSTAT_OUTPUT_DIR or .)");

  // evaluate
  RunConfig run;
  std::string kl = "style-to-transfer";
  bool any_channels = false;
  auto* evaluate = app.add_subcommand("evaluate", "Compute E and C for every manifest entry");
  evaluate->add_option("manifest", run.manifest_path, "Manifest JSON")->required()->check(CLI::ExistingFile);
  evaluate->add_option("--layer,--layers", run.layers, "Layers to evaluate (default R11)")->delimiter(',');
  evaluate->add_option("--seed", run.seed, "Master seed for the random directions");
  evaluate->add_option("--directions", run.directions, "Random unit directions per layer")->check(CLI::PositiveNumber);
  evaluate->add_option("--ridge", run.ridge, "Ridge added to the within-class covariance");
  evaluate->add_option("--threads", run.threads, "Worker threads")->check(CLI::PositiveNumber);
  evaluate->add_option("--pb-csv", run.pb_csv, "Per-image Pb AUC CSV")->check(CLI::ExistingFile);
  evaluate->add_option("--kl", kl, "KL direction")->check(CLI::IsMember({"style-to-transfer", "transfer-to-style"}));
  evaluate->add_flag("--require-lm", run.require_lm, "Fail entries without a segmentation mask");
  evaluate->add_flag("--any-channels", any_channels, "Skip VGG channel-count validation");

  // make-manifest
  ManifestSpec mspec;
  std::string mode = "main";
  std::string manifest_out = "manifest.json";
  auto* make = app.add_subcommand("make-manifest", "Generate a weight/style/content manifest skeleton");
  make->add_option("--styles", mspec.styles, "Number of style images")->required()->check(CLI::PositiveNumber);
  make->add_option("--contents", mspec.contents, "Number of content images")->required()->check(CLI::PositiveNumber);
  make->add_option("--mode", mode, "Weight scheme")->check(CLI::IsMember({"main", "aggressive"}));
  make->add_option("--seed", mspec.seed, "Seed");
  make->add_option("--method", mspec.method, "Method name written into every entry");
  make->add_option("--out", manifest_out, "Output file name (inside the output directory)");

  // ecplot
  std::vector<std::filesystem::path> csvs;
  std::string layer = "R11";
  std::string c_kind = "auto";
  LoessOptions loess;
  auto* ecplot = app.add_subcommand("ecplot", "EC scatter with Loess curves and stderr bands");
  ecplot->add_option("csv", csvs, "Evaluation CSVs")->required()->check(CLI::ExistingFile);
  ecplot->add_option("--layer", layer, "Layer whose E is plotted");
  ecplot->add_option("--c-kind", c_kind, "C axis: auc, lm or auto");
  ecplot->add_option("--span", loess.span, "Loess span in (0,1]");
  ecplot->add_option("--degree", loess.degree, "Loess degree (1 or 2)");
  ecplot->add_option("--grid", loess.grid_size, "Grid points")->check(CLI::PositiveNumber);

  // ensemble
  std::string ens_mode = "E";
  bool normalize = false;
  auto* ensemble = app.add_subcommand("ensemble", "Ensemble E / Ensemble Q selection");
  ensemble->add_option("csv", csvs, "Evaluation CSVs")->required()->check(CLI::ExistingFile);
  ensemble->add_option("--mode", ens_mode, "E or Q")->check(CLI::IsMember({"E", "Q"}));
  ensemble->add_option("--layer", layer, "Layer whose E is compared");
  ensemble->add_option("--c-kind", c_kind, "C used for Q: auc, lm or auto");
  ensemble->add_flag("--normalize-c", normalize, "Min-max normalize C before forming Q");

  // symmetry-check
  SymmetryCheckOptions sym;
  auto* symcheck = app.add_subcommand("symmetry-check", "Verify within/cross-layer symmetry elements");
  symcheck->add_option("--c1", sym.c1, "Layer-1 channels")->check(CLI::PositiveNumber);
  symcheck->add_option("--c2", sym.c2, "Layer-2 channels (< c1)")->check(CLI::PositiveNumber);
  symcheck->add_option("--samples", sym.samples, "Samples per trial (default 40*c1)");
  symcheck->add_option("--b-scale", sym.b_scale, "Length of b, |b| < 1");
  symcheck->add_option("--seed", sym.seed, "Seed");
  symcheck->add_option("--trials", sym.trials, "Number of trials");

  // gram
  std::filesystem::path gram_a, gram_b, gram_out = "gram.npy";
  auto* gram = app.add_subcommand("gram", "Dump a within- or cross-layer gram matrix as NPY");
  gram->add_option("features", gram_a, "Feature NPY (finer layer for cross grams)")->required()->check(CLI::ExistingFile);
  gram->add_option("--with", gram_b, "Second (coarser) feature NPY for a cross-layer gram")->check(CLI::ExistingFile);
  gram->add_option("--out", gram_out, "Output file name (inside the output directory)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    const auto out_dir = resolve_output_dir(output_dir);

    if (*evaluate) {
      run.output_dir = out_dir;
      run.check_channels = !any_channels;
      run.kl_direction = kl == "style-to-transfer" ? KlDirection::StyleToTransferred : KlDirection::TransferredToStyle;
      if (auto p = run.problems(); !p.empty()) {
        for (const auto& msg : p) std::cerr << "error: " << msg << '\n';
        return kUsage;
      }
      const auto result = cmd_evaluate(run);
      for (const auto& f : result.failures) std::cerr << "entry " << to_string(f.key) << " failed: " << f.message << '\n';
      std::cout << "wrote " << (out_dir / "evaluation.csv").string() << " (" << result.records.size() << " rows, "
                << result.failures.size() << " failures)\n";
      return result.failures.empty() ? kOk : kFailure;
    }

    if (*make) {
      mspec.mode = mode == "main" ? WeightScheme::Main : WeightScheme::Aggressive;
      const auto m = make_manifest(mspec);
      write_text(out_dir / manifest_out, manifest_to_json(m).dump(2) + "\n");
      std::cout << "wrote " << (out_dir / manifest_out).string() << " (" << m.entries.size() << " entries)\n";
      return kOk;
    }

    if (*ecplot) {
      const auto records = load_ec_csvs(csvs);
      const auto res = ec_plot(records, layer, parse_c_kind(c_kind), loess);
      write_text(out_dir / "ecplot.svg", res.svg);
      write_text(out_dir / "ecplot_curves.json", res.curves_json.dump(2) + "\n");
      std::cout << "wrote " << (out_dir / "ecplot.svg").string() << " and ecplot_curves.json\n";
      return kOk;
    }

    if (*ensemble) {
      const auto records = load_ec_csvs(csvs);
      EnsembleOptions eo;
      eo.mode = ens_mode == "E" ? EnsembleMode::E : EnsembleMode::Q;
      eo.layer = layer;
      eo.c_kind = parse_c_kind(c_kind).value_or(choose_c_axis(records));
      eo.normalize_c = normalize;
      const auto selected = ensemble_select(group_by_method(records), eo);
      const auto name = eo.mode == EnsembleMode::E ? "ensemble_E.csv" : "ensemble_Q.csv";
      std::filesystem::create_directories(out_dir);
      emit_ec_csv(selected, out_dir / name);
      std::cout << "wrote " << (out_dir / name).string() << " (" << selected.size() << " triplets)\n";
      return kOk;
    }

    if (*symcheck) {
      if (!(sym.c2 < sym.c1)) {
        std::cerr << "error: --c2 must be smaller than --c1\n";
        return kUsage;
      }
      if (!(std::abs(sym.b_scale) < 1.0)) {
        std::cerr << "error: --b-scale must satisfy |b| < 1\n";
        return kUsage;
      }
      const auto report = cmd_symmetry_check(sym);
      std::cout << report.dump(2) << '\n';
      return report.at("all_ok").get<bool>() ? kOk : kFailure;
    }

    if (*gram) {
      const auto fa = load_feature_map(gram_a, {AxisOrder::HWC, {}, false});
      GramMatrix g = gram_b.empty() ? within_gram(fa) : cross_gram(fa, load_feature_map(gram_b, {AxisOrder::HWC, {}, false}));
      const std::size_t shape[2] = {static_cast<std::size_t>(g.rows()), static_cast<std::size_t>(g.cols())};
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = g.values;
      std::filesystem::create_directories(out_dir);
      npy::save(out_dir / gram_out, shape, std::span<const double>(rm.data(), static_cast<std::size_t>(rm.size())),
                npy::DType::F8);
      std::cout << "wrote " << (out_dir / gram_out).string() << " (" << shape[0] << "x" << shape[1] << ")\n";
      return kOk;
    }
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kUsage;
}
