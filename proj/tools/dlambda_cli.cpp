// dlambda: simulate, extract, bin, reconstruct and report double-lambda
// homodyne tomography runs. Every verb works on one run directory (--out).

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "dlambda/pipeline.hpp"

namespace {

using namespace dlambda;
namespace fs = std::filesystem;

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::optional<int> jobs;
  std::optional<int> cutoff;
  std::optional<int> n_bins;
  bool paper_scale = false;
};

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "run configuration (JSON)");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--out", f.out, "run directory");
  cmd->add_option("--jobs", f.jobs, "parallel reconstructions")->check(CLI::PositiveNumber);
  cmd->add_option("--cutoff", f.cutoff, "Fock cutoff")->check(CLI::Range(2, 100));
  cmd->add_option("--n-bins", f.n_bins, "number of phase bins")->check(CLI::PositiveNumber);
  cmd->add_flag("--paper-scale", f.paper_scale, "100 MHz sampling");
}

// Flags override the config file; without --config, a run directory's own
// config.json is used when present.
pipeline::RunConfig make_config(const Flags& f) {
  pipeline::RunConfig c;
  if (!f.config.empty()) {
    c = pipeline::load_config(f.config);
  } else if (!f.out.empty() && fs::exists(fs::path(f.out) / "config.json")) {
    c = pipeline::load_config(fs::path(f.out) / "config.json");
  }
  if (f.seed) c.seed = f.seed;
  if (!f.out.empty()) c.out = f.out;
  if (f.jobs) c.jobs = *f.jobs;
  if (f.cutoff) c.analysis.cutoff = *f.cutoff;
  if (f.n_bins) c.analysis.n_bins = *f.n_bins;
  if (f.paper_scale) c.paper_scale = true;
  return c;
}

void require_seed(const pipeline::RunConfig& c) {
  if (!c.seed) throw UsageError("a seed is required: pass --seed or set \"seed\" in the config");
}

int run_calibrate(const std::string& out) {
  const auto base = atomic::paper_base_params();
  auto preset = atomic::calibrate(base, atomic::FieldSet{});
  preset.name = "paper-default";
  auto c1 = preset.controls;
  c1.Ec2 = 0.0;
  const double t1 = atomic::probe_transmission(preset.params, c1);
  const double t2 = atomic::probe_transmission(preset.params, preset.controls);
  const fs::path path = out.empty() ? pipeline::preset_dir() / "paper-default.json" : fs::path(out);
  io::write_preset(path, preset);
  std::printf("wrote %s: Ec1=%.10g Ec2=%.10g optical_depth=%.10g T(control 1)=%.4f T(both)=%.4f\n",
              path.string().c_str(), preset.controls.Ec1, preset.controls.Ec2, preset.params.alpha_p, t1, t2);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"double-lambda homodyne tomography pipeline"};
  app.require_subcommand(1);
  Flags f;
  std::string calib_out;

  auto* sim = app.add_subcommand("simulate", "synthesize homodyne bursts, truth and reference traces");
  auto* ext = app.add_subcommand("extract", "quadrature records and bin manifest from traces");
  auto* bin = app.add_subcommand("bin", "re-bin records by FWM phase");
  auto* rec = app.add_subcommand("reconstruct", "MLE reconstruction per bin and case");
  auto* rep = app.add_subcommand("report", "plot-ready tables from reports");
  auto* all = app.add_subcommand("pipeline", "all stages");
  for (auto* cmd : {sim, ext, bin, rec, rep, all}) add_common(cmd, f);
  auto* cal = app.add_subcommand("calibrate", "refit the paper-default medium preset");
  cal->add_option("--out", calib_out, "preset file to write");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (cal->parsed()) return run_calibrate(calib_out);
    pipeline::RunConfig c;
    try {
      c = make_config(f);
      if (sim->parsed() || all->parsed()) require_seed(c);
      pipeline::validate(c);
    } catch (const Error& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return 2;
    }
    const fs::path dir = c.out;
    if (sim->parsed()) pipeline::simulate(c, dir);
    if (ext->parsed()) pipeline::extract_stage(c, dir);
    if (bin->parsed()) pipeline::bin_stage(c, dir);
    if (rec->parsed()) pipeline::reconstruct_stage(c, dir);
    if (rep->parsed()) pipeline::report_stage(dir, pipeline::load_reports(dir));
    if (all->parsed()) pipeline::run_pipeline(c, dir);
    return 0;
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n" << app.help();
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return (e.code() == Errc::config) ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
