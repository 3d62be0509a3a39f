#pragma once

// Run configuration and the five stages behind the command-line tool:
// simulate -> extract -> bin -> reconstruct -> report.
//
// Run directory layout:
//   config.json              resolved configuration
//   trace_000.bin ...        one file per burst (or .csv)
//   vacuum.bin               signal-blocked burst for the quadrature scale
//   reference.bin            burst without the cell, the input-state reference
//   truth.csv                per-scan ground truth
//   records.csv, fits.csv    quadrature records and per-record fits
//   reference_records.csv    probe records of the reference burst
//   bins.csv                 bin manifest
//   reports/, wigner/        per (bin, case) reports and Wigner grids
//   figures/                 plot-ready tables

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <iostream>
#include <mutex>
#include <optional>
#include <thread>

#include "dlambda/atomic_model.hpp"
#include "dlambda/io.hpp"
#include "dlambda/phase_extract.hpp"
#include "dlambda/tomography.hpp"
#include "dlambda/trace_synth.hpp"

#ifndef DLAMBDA_DEFAULT_PRESET_DIR
#define DLAMBDA_DEFAULT_PRESET_DIR "presets"
#endif

namespace dlambda::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct AnalysisConfig {
  int n_bins = 10;
  int cutoff = 10;
  int bootstrap_resamples = 20;
  double degenerate_sigmas = extract::kDefaultDegenerateSigmas;
  int max_iter = 2000;
  double tol = 1e-9;
  double wigner_half_width = 5.0;
  int wigner_points = 101;
};

struct RunConfig {
  std::string preset = "paper-default";
  std::optional<atomic::AtomicParams> params;  // inline parameters replace the preset
  json fields_override = json::object();
  synth::PulseSchedule schedule;
  synth::ScanConfig scan;
  synth::NoiseConfig noise;
  AnalysisConfig analysis;
  int bursts = 1;
  int propagation_steps = atomic::kDefaultPropagationSteps;
  std::optional<std::uint64_t> seed;
  fs::path out = "run";
  std::string trace_format = "binary";
  bool paper_scale = false;
  int jobs = 1;
};

// ---------------------------------------------------------------------------
// Logging: one JSON object per line on stderr

inline std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}

inline void log(const json& record) {
  const std::lock_guard lock(log_mutex());
  std::cerr << record.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Configuration

inline fs::path preset_dir() {
  if (const char* env = std::getenv("DLAMBDA_PRESET_DIR"); env && *env) return env;
  return DLAMBDA_DEFAULT_PRESET_DIR;
}

/// A name resolves to <preset dir>/<name>.json; a value ending in .json is a path.
inline atomic::MediumPreset load_preset(const std::string& name) {
  fs::path p = name;
  if (p.extension() != ".json") p = preset_dir() / (name + ".json");
  if (!fs::exists(p)) throw Error(Errc::config, "preset '" + name + "' not found (looked for " + p.string() + ")");
  return io::read_preset(p);
}

namespace detail {

inline void check_keys(const json& j, const std::string& what, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw Error(Errc::config, what + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }))
      throw Error(Errc::config, what + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
void get_if(const json& j, const char* key, T& dst, const std::string& what) {
  if (!j.contains(key)) return;
  try {
    dst = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(Errc::config, what + "." + key + ": wrong type");
  }
}

inline synth::DriftModel parse_drift_model(const std::string& s) {
  if (s == "random-walk") return synth::DriftModel::random_walk;
  if (s == "uniform-resample") return synth::DriftModel::uniform_resample;
  throw Error(Errc::config, "noise.drift_model: expected random-walk or uniform-resample, got '" + s + "'");
}

inline const char* drift_model_name(synth::DriftModel m) {
  return m == synth::DriftModel::random_walk ? "random-walk" : "uniform-resample";
}

}  // namespace detail

inline RunConfig config_from_json(const json& j) {
  using detail::get_if;
  detail::check_keys(j, "config",
                     {"preset", "params", "fields", "schedule", "scan", "noise", "analysis", "bursts",
                      "propagation_steps", "seed", "out", "trace_format", "paper_scale", "jobs"});
  RunConfig c;
  get_if(j, "preset", c.preset, "config");
  if (j.contains("params")) c.params = io::params_from_json(j.at("params"), atomic::paper_base_params());
  if (j.contains("fields")) {
    (void)io::fields_from_json(j.at("fields"));  // key/type validation
    c.fields_override = j.at("fields");
  }
  if (j.contains("schedule")) {
    const auto& s = j.at("schedule");
    detail::check_keys(s, "schedule", {"pulse_len", "gap", "cycle"});
    get_if(s, "pulse_len", c.schedule.pulse_len, "schedule");
    get_if(s, "gap", c.schedule.gap, "schedule");
    get_if(s, "cycle", c.schedule.cycle, "schedule");
  }
  if (j.contains("scan")) {
    const auto& s = j.at("scan");
    detail::check_keys(s, "scan", {"scan_freq", "burst_len", "sample_rate", "lo_gain"});
    get_if(s, "scan_freq", c.scan.scan_freq, "scan");
    get_if(s, "burst_len", c.scan.burst_len, "scan");
    get_if(s, "sample_rate", c.scan.sample_rate, "scan");
    get_if(s, "lo_gain", c.scan.lo_gain, "scan");
  }
  if (j.contains("noise")) {
    const auto& s = j.at("noise");
    detail::check_keys(s, "noise", {"vacuum_std", "electronic_std", "drift_std_per_scan", "drift_model"});
    get_if(s, "vacuum_std", c.noise.vacuum_std, "noise");
    get_if(s, "electronic_std", c.noise.electronic_std, "noise");
    get_if(s, "drift_std_per_scan", c.noise.drift_std_per_scan, "noise");
    if (s.contains("drift_model")) {
      std::string m;
      get_if(s, "drift_model", m, "noise");
      c.noise.drift_model = detail::parse_drift_model(m);
    }
  }
  if (j.contains("analysis")) {
    const auto& s = j.at("analysis");
    detail::check_keys(s, "analysis",
                       {"n_bins", "cutoff", "bootstrap_resamples", "degenerate_sigmas", "max_iter", "tol",
                        "wigner_half_width", "wigner_points"});
    auto& a = c.analysis;
    get_if(s, "n_bins", a.n_bins, "analysis");
    get_if(s, "cutoff", a.cutoff, "analysis");
    get_if(s, "bootstrap_resamples", a.bootstrap_resamples, "analysis");
    get_if(s, "degenerate_sigmas", a.degenerate_sigmas, "analysis");
    get_if(s, "max_iter", a.max_iter, "analysis");
    get_if(s, "tol", a.tol, "analysis");
    get_if(s, "wigner_half_width", a.wigner_half_width, "analysis");
    get_if(s, "wigner_points", a.wigner_points, "analysis");
  }
  get_if(j, "bursts", c.bursts, "config");
  get_if(j, "propagation_steps", c.propagation_steps, "config");
  if (j.contains("seed")) {
    if (!j.at("seed").is_number_unsigned()) throw Error(Errc::config, "config.seed: expected a non-negative integer");
    c.seed = j.at("seed").get<std::uint64_t>();
  }
  if (j.contains("out")) c.out = j.at("out").get<std::string>();
  get_if(j, "trace_format", c.trace_format, "config");
  get_if(j, "paper_scale", c.paper_scale, "config");
  get_if(j, "jobs", c.jobs, "config");
  return c;
}

inline RunConfig load_config(const fs::path& path) {
  try {
    return config_from_json(io::parse_json_file(path));
  } catch (const Error& e) {
    throw Error(e.code(), path.filename().string() + ": " + e.what());
  }
}

/// Medium, fields and scan after applying the preset, overrides and scale mode.
struct Resolved {
  atomic::AtomicParams params;
  atomic::FieldSet fields;
  synth::ScanConfig scan;
};

inline Resolved resolve(const RunConfig& c) {
  Resolved r;
  atomic::FieldSet controls;
  if (c.params) {
    r.params = *c.params;
  } else {
    const auto p = load_preset(c.preset);
    r.params = p.params;
    controls = p.controls;
  }
  r.fields = controls;
  r.fields = io::fields_from_json(c.fields_override, r.fields);
  r.scan = c.paper_scale ? synth::paper_scale(c.scan) : c.scan;
  return r;
}

inline void validate(const RunConfig& c) {
  const auto r = resolve(c);
  r.params.validate();
  r.fields.validate();
  c.schedule.validate();
  r.scan.validate(c.schedule);
  c.noise.validate();
  if (c.bursts < 1) throw Error(Errc::config, "bursts must be >= 1");
  if (c.analysis.n_bins < 1) throw Error(Errc::config, "analysis.n_bins must be >= 1");
  if (c.analysis.cutoff < 2) throw Error(Errc::config, "analysis.cutoff must be >= 2");
  if (c.analysis.bootstrap_resamples < 0) throw Error(Errc::config, "analysis.bootstrap_resamples must be >= 0");
  if (c.analysis.wigner_points < 2) throw Error(Errc::config, "analysis.wigner_points must be >= 2");
  if (c.jobs < 1) throw Error(Errc::config, "jobs must be >= 1");
  if (c.trace_format != "binary" && c.trace_format != "csv")
    throw Error(Errc::config, "trace_format must be binary or csv");
}

inline json config_to_json(const RunConfig& c) {
  const auto r = resolve(c);
  json j;
  j["preset"] = c.preset;
  j["params"] = io::params_to_json(r.params);
  j["fields"] = io::fields_to_json(r.fields);
  j["schedule"] = {{"pulse_len", c.schedule.pulse_len}, {"gap", c.schedule.gap}, {"cycle", c.schedule.cycle}};
  j["scan"] = {{"scan_freq", r.scan.scan_freq},
               {"burst_len", r.scan.burst_len},
               {"sample_rate", r.scan.sample_rate},
               {"lo_gain", r.scan.lo_gain}};
  j["noise"] = {{"vacuum_std", c.noise.vacuum_std},
                {"electronic_std", c.noise.electronic_std},
                {"drift_std_per_scan", c.noise.drift_std_per_scan},
                {"drift_model", detail::drift_model_name(c.noise.drift_model)}};
  const auto& a = c.analysis;
  j["analysis"] = {{"n_bins", a.n_bins},
                   {"cutoff", a.cutoff},
                   {"bootstrap_resamples", a.bootstrap_resamples},
                   {"degenerate_sigmas", a.degenerate_sigmas},
                   {"max_iter", a.max_iter},
                   {"tol", a.tol},
                   {"wigner_half_width", a.wigner_half_width},
                   {"wigner_points", a.wigner_points}};
  j["bursts"] = c.bursts;
  j["propagation_steps"] = c.propagation_steps;
  if (c.seed) j["seed"] = *c.seed;
  j["out"] = c.out.string();
  j["trace_format"] = c.trace_format;
  j["paper_scale"] = false;  // already folded into scan.sample_rate
  j["jobs"] = c.jobs;
  return j;
}

// ---------------------------------------------------------------------------
// Stage helpers

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  return synth::stream_rng(seed, tag, index)();
}

inline constexpr std::uint64_t kBurstTag = 0x6275727374ULL;
inline constexpr std::uint64_t kVacuumTag = 0x766163ULL;
inline constexpr std::uint64_t kReferenceTag = 0x726566ULL;
inline constexpr std::uint64_t kBootstrapTag = 0x626f6f74ULL;

inline std::string trace_ext(const RunConfig& c) { return c.trace_format == "csv" ? ".csv" : ".bin"; }

inline fs::path burst_path(const fs::path& dir, int b, const std::string& ext) {
  char name[32];
  std::snprintf(name, sizeof name, "trace_%03d", b);
  return dir / (std::string(name) + ext);
}

inline void write_trace(const fs::path& path, const synth::HomodyneTrace& t) {
  if (path.extension() == ".csv")
    io::write_trace_csv(path, t);
  else
    io::write_trace_binary(path, t);
}

/// Burst files in the run directory, in burst order.
inline std::vector<fs::path> burst_files(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) throw Error(Errc::io, "not a directory: " + dir.string());
  for (const auto& e : fs::directory_iterator(dir)) {
    const auto name = e.path().filename().string();
    if (name.rfind("trace_", 0) == 0 && (e.path().extension() == ".bin" || e.path().extension() == ".csv"))
      out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) throw Error(Errc::io, "no trace_*.bin or trace_*.csv files in " + dir.string());
  return out;
}

inline fs::path find_aux_trace(const fs::path& dir, const std::string& stem) {
  for (const char* ext : {".bin", ".csv"}) {
    const auto p = dir / (stem + ext);
    if (fs::exists(p)) return p;
  }
  throw Error(Errc::io, "missing " + stem + " trace in " + dir.string());
}

// ---------------------------------------------------------------------------
// simulate

struct SimulationSummary {
  atomic::TransferMatrix transfer;
  std::size_t scans = 0;
};

inline SimulationSummary simulate(const RunConfig& c, const fs::path& dir) {
  if (!c.seed) throw Error(Errc::config, "simulate requires a seed");
  validate(c);
  const auto r = resolve(c);
  const auto T = atomic::transfer_matrix(r.params, r.fields, c.propagation_steps);
  const auto ext = trace_ext(c);
  std::vector<synth::TruthRecord> truth;
  const auto shots = static_cast<std::int64_t>(r.scan.shots_per_burst());
  for (int b = 0; b < c.bursts; ++b) {
    synth::SynthOptions opt;
    opt.propagation_steps = c.propagation_steps;
    opt.scan_id_offset = b * shots;
    auto tr = synth::synth_burst_with_transfer(T, r.fields, c.schedule, r.scan, c.noise,
                                               derive_seed(*c.seed, kBurstTag, static_cast<std::uint64_t>(b)), opt);
    // truth rows for a trailing partial scan carry no pulses
    for (const auto& t : *tr.truth)
      if (t.scan_id < opt.scan_id_offset + shots) truth.push_back(t);
    write_trace(burst_path(dir, b, ext), tr);
    log({{"stage", "simulate"}, {"burst", b}, {"samples", tr.samples.size()}});
  }
  {
    atomic::FieldSet vac = r.fields;
    vac.Ep = vac.Es = 0.0;
    auto tr = synth::synth_burst_with_transfer(T, vac, c.schedule, r.scan, c.noise,
                                               derive_seed(*c.seed, kVacuumTag, 0));
    tr.truth.reset();
    write_trace(dir / ("vacuum" + ext), tr);
  }
  {
    atomic::FieldSet ref = r.fields;
    ref.Es = 0.0;
    auto tr = synth::synth_burst_with_transfer(synth::no_cell_transfer(), ref, c.schedule, r.scan, c.noise,
                                               derive_seed(*c.seed, kReferenceTag, 0));
    tr.truth.reset();
    write_trace(dir / ("reference" + ext), tr);
  }
  io::write_truth(dir / "truth.csv", truth);
  io::write_json(dir / "config.json", config_to_json(c));
  log({{"stage", "simulate"},
       {"bursts", c.bursts},
       {"scans", truth.size()},
       {"T_pp", std::abs(T.pp)},
       {"T_ps", std::abs(T.ps)}});
  return {T, truth.size()};
}

// ---------------------------------------------------------------------------
// extract

struct ExtractSummary {
  double scale = 0.0;
  std::size_t shots = 0;
  std::size_t records = 0;
  std::size_t degenerate = 0;
};

/// Probe-case records of a reference burst, referenced to their own fitted phase.
inline std::vector<extract::QuadratureRecord> reference_records(const synth::HomodyneTrace& tr, double scale,
                                                                double degenerate_sigmas) {
  const auto shots = extract::split_shots(tr);
  std::vector<extract::QuadratureRecord> out;
  for (const auto& s : shots) {
    auto peaks = extract::extract_peaks(s, tr.schedule, tr.scan);
    auto& pk = peaks[0];
    for (auto& p : pk) p.volts *= scale;
    extract::QuadratureRecord r;
    r.scan_id = s.scan_id;
    r.pulse_case = synth::PulseCase::probe_only;
    r.fit = extract::fit_sinusoid(pk, tr.scan.omega(), degenerate_sigmas);
    r.degenerate = r.fit.degenerate;
    const double ref = r.degenerate ? 0.0 : r.fit.phase;
    for (const auto& p : pk) r.points.push_back({tr.scan.lo_phase(p.time) - ref, p.volts});
    out.push_back(std::move(r));
  }
  return out;
}

inline ExtractSummary extract_stage(const RunConfig& c, const fs::path& dir) {
  ExtractSummary sum;
  const auto vac = io::read_trace(find_aux_trace(dir, "vacuum"));
  sum.scale = extract::calibrate_vacuum(vac, vac.schedule, vac.scan);
  extract::RecordOptions opt;
  opt.degenerate_sigmas = c.analysis.degenerate_sigmas;

  std::vector<extract::QuadratureRecord> records;
  std::int64_t offset = 0;
  for (const auto& f : burst_files(dir)) {
    const auto tr = io::read_trace(f);
    const auto shots = extract::split_shots(tr, offset);
    offset += static_cast<std::int64_t>(shots.size());
    sum.shots += shots.size();
    auto recs = extract::to_quadrature_records(shots, tr.schedule, tr.scan, sum.scale, opt);
    records.insert(records.end(), std::make_move_iterator(recs.begin()), std::make_move_iterator(recs.end()));
  }
  sum.records = records.size();
  sum.degenerate = extract::count_degenerate(records);
  io::write_records(dir / "records.csv", records);
  io::write_fits(dir / "fits.csv", records);
  io::write_bin_manifest(dir / "bins.csv", extract::bin_records(records, c.analysis.n_bins));

  const auto ref = io::read_trace(find_aux_trace(dir, "reference"));
  const auto ref_records = reference_records(ref, sum.scale, c.analysis.degenerate_sigmas);
  io::write_records(dir / "reference_records.csv", ref_records);
  io::write_fits(dir / "reference_fits.csv", ref_records);

  log({{"stage", "extract"},
       {"scale", sum.scale},
       {"shots", sum.shots},
       {"records", sum.records},
       {"degenerate_excluded", sum.degenerate},
       {"reference_degenerate", extract::count_degenerate(ref_records)}});
  if (sum.degenerate == sum.records) log({{"stage", "extract"}, {"warning", "all records degenerate"}});
  return sum;
}

// ---------------------------------------------------------------------------
// bin

inline std::vector<extract::PhaseBin> bin_stage(const RunConfig& c, const fs::path& dir) {
  const auto records = io::read_records(dir / "records.csv", dir / "fits.csv");
  auto bins = extract::bin_records(records, c.analysis.n_bins);
  io::write_bin_manifest(dir / "bins.csv", bins);
  json counts = json::array();
  for (const auto& b : bins)
    counts.push_back({b.count(synth::PulseCase::probe_only), b.count(synth::PulseCase::double_lambda),
                      b.count(synth::PulseCase::fwm_only)});
  log({{"stage", "bin"}, {"n_bins", c.analysis.n_bins}, {"counts", counts}});
  return bins;
}

// ---------------------------------------------------------------------------
// reconstruct

struct BinReport {
  int bin_index = -1;  // -1 for the input reference
  double lo = 0.0, hi = 0.0;
  synth::PulseCase pulse_case = synth::PulseCase::probe_only;
  std::size_t records = 0;
  tomo::ReconstructionReport report;
  int bootstrap_used = 0;
  int bootstrap_failed = 0;
  bool bootstrap_insufficient = false;
};

inline json bin_report_to_json(const BinReport& b) {
  return {{"bin_index", b.bin_index},
          {"lo", b.lo},
          {"hi", b.hi},
          {"case", synth::case_name(b.pulse_case)},
          {"records", b.records},
          {"bootstrap", {{"used", b.bootstrap_used}, {"failed", b.bootstrap_failed}, {"insufficient", b.bootstrap_insufficient}}},
          {"report", io::report_to_json(b.report)}};
}

inline BinReport bin_report_from_json(const json& j) {
  try {
    BinReport b;
    b.bin_index = j.at("bin_index").get<int>();
    b.lo = j.at("lo").get<double>();
    b.hi = j.at("hi").get<double>();
    b.pulse_case = synth::parse_case(j.at("case").get<std::string>());
    b.records = j.at("records").get<std::size_t>();
    b.bootstrap_used = j.at("bootstrap").at("used").get<int>();
    b.bootstrap_failed = j.at("bootstrap").at("failed").get<int>();
    b.bootstrap_insufficient = j.at("bootstrap").at("insufficient").get<bool>();
    b.report = io::report_from_json(j.at("report"));
    return b;
  } catch (const json::exception& e) {
    throw Error(Errc::parse, std::string("bin report: ") + e.what());
  }
}

inline std::string report_stem(int bin, synth::PulseCase c) {
  if (bin < 0) return std::string("reference_") + synth::case_name(c);
  char buf[48];
  std::snprintf(buf, sizeof buf, "bin%02d_%s", bin, synth::case_name(c));
  return buf;
}

/// Input state rotated onto the phase of rho's mean amplitude.
inline tomo::DensityMatrix aligned_input(const tomo::DensityMatrix& input, const tomo::DensityMatrix& rho) {
  const Complex a_out = tomo::mean_amplitude(rho);
  const Complex a_in = tomo::mean_amplitude(input);
  if (std::abs(a_out) < 1e-12 || std::abs(a_in) < 1e-12) return input;
  return tomo::rotate(input, std::arg(a_out) - std::arg(a_in));
}

inline double input_output_fidelity(const tomo::DensityMatrix& input, const tomo::DensityMatrix& rho) {
  return tomo::fidelity(aligned_input(input, rho), rho);
}

/// Full report for one dataset. With an input state, fidelity_vs_input is filled.
inline BinReport reconstruct_one(const tomo::QuadratureDataset& data, const AnalysisConfig& a,
                                 const tomo::DensityMatrix* input, std::uint64_t boot_seed) {
  tomo::ReportOptions ro;
  ro.mle.max_iter = a.max_iter;
  ro.mle.tol = a.tol;
  ro.wigner_half_width = a.wigner_half_width;
  ro.wigner_points = a.wigner_points;
  BinReport b;
  b.report = tomo::mle_reconstruct(data, a.cutoff, ro);
  if (input) b.report.fidelity_vs_input.value = input_output_fidelity(*input, b.report.rho);
  if (a.bootstrap_resamples > 0 && data.pairs.size() >= 100) {
    const tomo::MetricSet metrics = [&](const tomo::DensityMatrix& rho) {
      return std::vector<double>{input ? input_output_fidelity(*input, rho) : 0.0, tomo::coherent_overlap(rho),
                                 tomo::purity(rho), tomo::mean_photon(rho)};
    };
    const auto boot = tomo::bootstrap_errors(data, a.cutoff, a.bootstrap_resamples, metrics, boot_seed, ro.mle);
    b.report.fidelity_vs_input.err = boot.stddev[0];
    b.report.coherent_overlap.err = boot.stddev[1];
    b.report.purity.err = boot.stddev[2];
    b.report.mean_photon.err = boot.stddev[3];
    b.bootstrap_used = boot.used;
    b.bootstrap_failed = boot.failed;
    b.bootstrap_insufficient = boot.insufficient;
  } else {
    b.bootstrap_insufficient = true;
  }
  return b;
}

inline tomo::WignerGrid report_wigner(const tomo::DensityMatrix& rho, const AnalysisConfig& a) {
  const auto axis = tomo::uniform_axis(-a.wigner_half_width, a.wigner_half_width, a.wigner_points);
  return tomo::wigner(rho, axis, axis);
}

/// Runs fn(0..n-1) on up to `jobs` threads; results must be stored by index.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, std::min<int>(jobs, static_cast<int>(n))));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex fail_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          const std::lock_guard lock(fail_mutex);
          if (!failure) failure = std::current_exception();
          next.store(n);
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline std::vector<BinReport> reconstruct_stage(const RunConfig& c, const fs::path& dir) {
  const auto& a = c.analysis;
  const std::uint64_t seed = c.seed.value_or(0);
  const auto records = io::read_records(dir / "records.csv", dir / "fits.csv");
  const auto bins = extract::bin_records(records, a.n_bins);
  io::write_bin_manifest(dir / "bins.csv", bins);

  const auto ref_records = io::read_records(dir / "reference_records.csv", dir / "reference_fits.csv");
  BinReport ref = reconstruct_one(tomo::dataset_from_records(ref_records), a, nullptr,
                                  derive_seed(seed, kBootstrapTag, 1u << 20));
  ref.records = ref_records.size() - extract::count_degenerate(ref_records);
  ref.report.fidelity_vs_input.value = 1.0;
  io::write_json(dir / "reports" / (report_stem(-1, ref.pulse_case) + ".json"), bin_report_to_json(ref));
  io::write_wigner(dir / "wigner" / (report_stem(-1, ref.pulse_case) + ".csv"), report_wigner(ref.report.rho, a));
  log({{"stage", "reconstruct"}, {"reference_mean_photon", ref.report.mean_photon.value},
       {"reference_purity", ref.report.purity.value}});

  struct Job {
    const extract::PhaseBin* bin;
    synth::PulseCase pc;
  };
  std::vector<Job> jobs;
  for (const auto& b : bins) {
    for (auto pc : synth::kCaseOrder) {
      if (b.count(pc) == 0) {
        log({{"stage", "reconstruct"}, {"warning", "empty bin skipped"}, {"bin", b.index}, {"case", synth::case_name(pc)}});
        continue;
      }
      jobs.push_back({&b, pc});
    }
  }
  std::vector<BinReport> out(jobs.size());
  parallel_for(jobs.size(), c.jobs, [&](std::size_t i) {
    const auto& job = jobs[i];
    const auto& recs = job.bin->records[static_cast<int>(job.pc)];
    auto data = tomo::dataset_from_records(recs);
    data.source_bin = job.bin->index;
    BinReport r = reconstruct_one(
        data, a, &ref.report.rho,
        derive_seed(seed, kBootstrapTag, static_cast<std::uint64_t>(job.bin->index * 3 + static_cast<int>(job.pc))));
    r.bin_index = job.bin->index;
    r.lo = job.bin->lo;
    r.hi = job.bin->hi;
    r.pulse_case = job.pc;
    r.records = recs.size();
    const auto stem = report_stem(r.bin_index, r.pulse_case);
    io::write_json(dir / "reports" / (stem + ".json"), bin_report_to_json(r));
    io::write_wigner(dir / "wigner" / (stem + ".csv"), report_wigner(r.report.rho, a));
    log({{"stage", "reconstruct"},
         {"bin", r.bin_index},
         {"case", synth::case_name(r.pulse_case)},
         {"points", r.report.n_points},
         {"iterations", r.report.iterations},
         {"converged", r.report.converged},
         {"fidelity_vs_input", r.report.fidelity_vs_input.value},
         {"coherent_overlap", r.report.coherent_overlap.value}});
    out[i] = std::move(r);
  });
  return out;
}

// ---------------------------------------------------------------------------
// report

/// Bin reports in the run directory (the input reference excluded), ordered by bin then case.
inline std::vector<BinReport> load_reports(const fs::path& dir) {
  std::vector<BinReport> out;
  const auto rd = dir / "reports";
  if (!fs::is_directory(rd)) throw Error(Errc::io, "no reports directory in " + dir.string());
  for (const auto& e : fs::directory_iterator(rd)) {
    if (e.path().extension() != ".json") continue;
    auto b = bin_report_from_json(io::parse_json_file(e.path()));
    if (b.bin_index >= 0) out.push_back(std::move(b));
  }
  std::sort(out.begin(), out.end(), [](const BinReport& x, const BinReport& y) {
    return std::pair{x.bin_index, static_cast<int>(x.pulse_case)} < std::pair{y.bin_index, static_cast<int>(y.pulse_case)};
  });
  return out;
}

/// Plot-ready tables; every table carries the bin range and record count.
inline void report_stage(const fs::path& dir, const std::vector<BinReport>& reports) {
  if (reports.empty()) throw Error(Errc::insufficient_data, "no reports to summarize");
  using io::fmt;
  const auto fig = dir / "figures";
  const auto manifest = io::read_bin_manifest(dir / "bins.csv");
  const int n_bins = static_cast<int>(manifest.size());
  auto bin_cols = [&](int k, synth::PulseCase pc) {
    const auto& m = manifest.at(static_cast<std::size_t>(k));
    return std::to_string(k) + "," + fmt(m.lo) + "," + fmt(m.hi) + "," +
           std::to_string(m.counts[static_cast<std::size_t>(pc)]);
  };

  if (fs::exists(dir / "records.csv")) {
    const auto records = io::read_records(dir / "records.csv", dir / "fits.csv");
    io::atomic_write(fig / "phase_scatter.csv", [&](std::ostream& os) {
      os << "bin_index,lo,hi,count,scan_id,dphi_fwm,dphi_dl,amp_probe,amp_dl,amp_fwm\n";
      for (std::size_t i = 0; i + 2 < records.size(); i += 3) {
        const auto& p = records[i];
        if (p.degenerate || records[i + 1].degenerate) continue;
        const int k = extract::bin_index(p.dphi_fwm, n_bins);
        // fit amplitudes are 2|alpha| in quadrature units
        os << bin_cols(k, synth::PulseCase::double_lambda) << ',' << p.scan_id << ',' << fmt(p.dphi_fwm) << ','
           << fmt(p.dphi_dl) << ',' << fmt(0.5 * p.fit.amplitude) << ',' << fmt(0.5 * records[i + 1].fit.amplitude)
           << ',' << fmt(0.5 * records[i + 2].fit.amplitude) << '\n';
      }
    });
    io::atomic_write(fig / "quadrature_scatter.csv", [&](std::ostream& os) {
      os << "bin_index,lo,hi,count,case,scan_id,theta,x\n";
      for (const auto& r : records) {
        if (r.degenerate) continue;
        const int k = extract::bin_index(r.dphi_fwm, n_bins);
        const auto cols = bin_cols(k, r.pulse_case) + "," + synth::case_name(r.pulse_case) + "," +
                          std::to_string(r.scan_id) + ",";
        for (const auto& q : r.points) os << cols << fmt(q.theta) << ',' << fmt(q.x) << '\n';
      }
    });
  }

  io::atomic_write(fig / "wigner_index.csv", [&](std::ostream& os) {
    os << "bin_index,lo,hi,count,case,file\n";
    for (const auto& r : reports)
      os << bin_cols(r.bin_index, r.pulse_case) << ',' << synth::case_name(r.pulse_case) << ",wigner/"
         << report_stem(r.bin_index, r.pulse_case) << ".csv\n";
  });
  io::atomic_write(fig / "wigner_locus.csv", [&](std::ostream& os) {
    os << "bin_index,lo,hi,count,case,x,p,radius\n";
    for (const auto& r : reports) {
      const auto& w = r.report.wigner_max_location;
      os << bin_cols(r.bin_index, r.pulse_case) << ',' << synth::case_name(r.pulse_case) << ',' << fmt(w[0]) << ','
         << fmt(w[1]) << ',' << fmt(std::hypot(w[0], w[1])) << '\n';
    }
  });
  io::atomic_write(fig / "mean_photon.csv", [&](std::ostream& os) {
    os << "bin_index,lo,hi,count,case,mean_photon,err\n";
    for (const auto& r : reports)
      os << bin_cols(r.bin_index, r.pulse_case) << ',' << synth::case_name(r.pulse_case) << ','
         << fmt(r.report.mean_photon.value) << ',' << fmt(r.report.mean_photon.err) << '\n';
  });
  io::atomic_write(fig / "fidelity.csv", [&](std::ostream& os) {
    os << "bin_index,lo,hi,count,case,fidelity_vs_input,fidelity_err,coherent_overlap,overlap_err,purity,purity_err\n";
    for (const auto& r : reports) {
      const auto& m = r.report;
      os << bin_cols(r.bin_index, r.pulse_case) << ',' << synth::case_name(r.pulse_case) << ','
         << fmt(m.fidelity_vs_input.value) << ',' << fmt(m.fidelity_vs_input.err) << ','
         << fmt(m.coherent_overlap.value) << ',' << fmt(m.coherent_overlap.err) << ',' << fmt(m.purity.value) << ','
         << fmt(m.purity.err) << '\n';
    }
  });
  log({{"stage", "report"}, {"reports", reports.size()}, {"dir", fig.string()}});
}

inline std::vector<BinReport> run_pipeline(const RunConfig& c, const fs::path& dir) {
  simulate(c, dir);
  extract_stage(c, dir);
  auto reports = reconstruct_stage(c, dir);
  report_stage(dir, reports);
  return reports;
}

}  // namespace dlambda::pipeline
