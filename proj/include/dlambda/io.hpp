#pragma once

// File formats. Text numbers use %.17g so every file round-trips exactly.
// All writers go through atomic_write (temp file + rename).

#include <charconv>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dlambda/atomic_model.hpp"
#include "dlambda/core.hpp"
#include "dlambda/phase_extract.hpp"
#include "dlambda/tomography.hpp"
#include "dlambda/trace_synth.hpp"

namespace dlambda::io {

namespace fs = std::filesystem;
using json = nlohmann::json;

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void atomic_write(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw Error(Errc::io, "cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(Errc::io, "cannot open " + tmp.string() + " for writing");
    body(os);
    os.flush();
    if (!os) throw Error(Errc::io, "write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error(Errc::io, "cannot rename " + tmp.string() + ": " + ec.message());
}

inline std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(Errc::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

namespace detail {

inline std::string where(const fs::path& file, std::size_t line) {
  return file.filename().string() + ":" + std::to_string(line) + ": ";
}

inline double parse_double(std::string_view s, const fs::path& file, std::size_t line) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw Error(Errc::parse, where(file, line) + "expected a number, got '" + std::string(s) + "'");
  return v;
}

inline std::int64_t parse_int(std::string_view s, const fs::path& file, std::size_t line) {
  while (!s.empty() && (s.back() == ' ' || s.back() == '\r')) s.remove_suffix(1);
  std::int64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw Error(Errc::parse, where(file, line) + "expected an integer, got '" + std::string(s) + "'");
  return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep = ',') {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto p = line.find(sep, start);
    if (p == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, p - start));
    start = p + 1;
  }
}

// Line iterator with 1-based numbering.
struct Lines {
  std::string text;
  std::size_t pos = 0;
  std::size_t number = 0;

  bool next(std::string_view& out) {
    if (pos >= text.size()) return false;
    auto e = text.find('\n', pos);
    if (e == std::string::npos) e = text.size();
    out = std::string_view(text).substr(pos, e - pos);
    if (!out.empty() && out.back() == '\r') out.remove_suffix(1);
    pos = e + 1;
    ++number;
    return true;
  }
};

inline void expect_header(Lines& lines, std::string_view want, const fs::path& file) {
  std::string_view l;
  if (!lines.next(l)) throw Error(Errc::parse, where(file, 1) + "empty file");
  if (l != want) throw Error(Errc::parse, where(file, lines.number) + "expected header '" + std::string(want) + "'");
}

inline std::vector<std::string_view> fields(std::string_view l, std::size_t n, const fs::path& file,
                                            std::size_t line) {
  auto f = split(l);
  if (f.size() != n)
    throw Error(Errc::parse, where(file, line) + "expected " + std::to_string(n) + " fields, got " +
                                 std::to_string(f.size()));
  return f;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Trace files

inline constexpr char kTraceMagic[8] = {'D', 'L', 'T', 'R', 'A', 'C', 'E', '1'};

inline std::vector<std::pair<std::string, std::string>> trace_header(const synth::HomodyneTrace& t) {
  return {{"sample_rate", fmt(t.sample_rate)},
          {"pulse_len", fmt(t.schedule.pulse_len)},
          {"gap", fmt(t.schedule.gap)},
          {"cycle", fmt(t.schedule.cycle)},
          {"scan_freq", fmt(t.scan.scan_freq)},
          {"burst_len", fmt(t.scan.burst_len)},
          {"lo_gain", fmt(t.scan.lo_gain)},
          {"seed", std::to_string(t.seed)},
          {"n_samples", std::to_string(t.samples.size())}};
}

namespace detail {

struct TraceHeader {
  std::map<std::string, std::pair<std::string, std::size_t>> kv;  // value, line

  void apply(synth::HomodyneTrace& t, const fs::path& file, std::size_t end_line) const {
    auto get = [&](const char* k) -> const std::pair<std::string, std::size_t>& {
      auto it = kv.find(k);
      if (it == kv.end()) throw Error(Errc::parse, where(file, end_line) + "header is missing key '" + k + "'");
      return it->second;
    };
    auto num = [&](const char* k) {
      const auto& [v, line] = get(k);
      return parse_double(v, file, line);
    };
    t.sample_rate = num("sample_rate");
    t.scan.sample_rate = t.sample_rate;
    t.schedule.pulse_len = num("pulse_len");
    t.schedule.gap = num("gap");
    t.schedule.cycle = num("cycle");
    t.scan.scan_freq = num("scan_freq");
    t.scan.burst_len = num("burst_len");
    t.scan.lo_gain = num("lo_gain");
    {
      const auto& [v, line] = get("seed");
      std::uint64_t s = 0;
      const auto r = std::from_chars(v.data(), v.data() + v.size(), s);
      if (r.ec != std::errc() || r.ptr != v.data() + v.size())
        throw Error(Errc::parse, where(file, line) + "bad seed '" + v + "'");
      t.seed = s;
    }
  }

  std::size_t n_samples(const fs::path& file, std::size_t end_line) const {
    auto it = kv.find("n_samples");
    if (it == kv.end()) throw Error(Errc::parse, where(file, end_line) + "header is missing key 'n_samples'");
    const auto v = parse_int(it->second.first, file, it->second.second);
    if (v < 0) throw Error(Errc::parse, where(file, it->second.second) + "negative n_samples");
    return static_cast<std::size_t>(v);
  }

  void add(std::string_view kvline, const fs::path& file, std::size_t line) {
    const auto eq = kvline.find('=');
    if (eq == std::string_view::npos || eq == 0)
      throw Error(Errc::parse, where(file, line) + "expected key=value, got '" + std::string(kvline) + "'");
    kv[std::string(kvline.substr(0, eq))] = {std::string(kvline.substr(eq + 1)), line};
  }
};

}  // namespace detail

inline void write_trace_csv(const fs::path& path, const synth::HomodyneTrace& t) {
  atomic_write(path, [&](std::ostream& os) {
    for (const auto& [k, v] : trace_header(t)) os << "# " << k << '=' << v << '\n';
    os << "time,voltage\n";
    std::string buf;
    for (std::size_t i = 0; i < t.samples.size(); ++i) {
      buf.clear();
      buf += fmt(static_cast<double>(i) / t.sample_rate);
      buf += ',';
      buf += fmt(t.samples[i]);
      buf += '\n';
      os << buf;
    }
  });
}

/// Binary layout: 8-byte magic, the same key=value header as the CSV form
/// terminated by an empty line, uint64 sample count, float64 samples (host order).
inline void write_trace_binary(const fs::path& path, const synth::HomodyneTrace& t) {
  atomic_write(path, [&](std::ostream& os) {
    os.write(kTraceMagic, sizeof kTraceMagic);
    os << '\n';
    for (const auto& [k, v] : trace_header(t)) os << k << '=' << v << '\n';
    os << '\n';
    const std::uint64_t n = t.samples.size();
    os.write(reinterpret_cast<const char*>(&n), sizeof n);
    os.write(reinterpret_cast<const char*>(t.samples.data()), static_cast<std::streamsize>(n * sizeof(double)));
  });
}

inline synth::HomodyneTrace read_trace(const fs::path& path) {
  const std::string data = read_file(path);
  synth::HomodyneTrace t;
  detail::TraceHeader h;
  if (data.size() >= sizeof kTraceMagic && std::memcmp(data.data(), kTraceMagic, sizeof kTraceMagic) == 0) {
    std::size_t pos = sizeof kTraceMagic + 1;
    std::size_t line = 1;
    for (;;) {
      const auto e = data.find('\n', pos);
      if (e == std::string::npos) throw Error(Errc::parse, detail::where(path, line) + "unterminated header");
      ++line;
      const std::string_view l(data.data() + pos, e - pos);
      pos = e + 1;
      if (l.empty()) break;
      h.add(l, path, line);
    }
    h.apply(t, path, line);
    const std::size_t n = h.n_samples(path, line);
    std::uint64_t count = 0;
    if (data.size() < pos + sizeof count) throw Error(Errc::parse, "truncated trace file " + path.string());
    std::memcpy(&count, data.data() + pos, sizeof count);
    pos += sizeof count;
    if (count != n || data.size() != pos + count * sizeof(double))
      throw Error(Errc::parse, "sample count does not match header in " + path.string());
    t.samples.resize(count);
    std::memcpy(t.samples.data(), data.data() + pos, count * sizeof(double));
    return t;
  }

  detail::Lines lines{data};
  std::string_view l;
  bool header_done = false;
  while (lines.next(l)) {
    if (!l.empty() && l.front() == '#') {
      auto kv = l.substr(1);
      while (!kv.empty() && kv.front() == ' ') kv.remove_prefix(1);
      h.add(kv, path, lines.number);
      continue;
    }
    if (l != "time,voltage") throw Error(Errc::parse, detail::where(path, lines.number) + "expected 'time,voltage'");
    header_done = true;
    break;
  }
  if (!header_done) throw Error(Errc::parse, detail::where(path, lines.number) + "missing column header");
  h.apply(t, path, lines.number);
  const std::size_t n = h.n_samples(path, lines.number);
  t.samples.reserve(n);
  while (lines.next(l)) {
    if (l.empty()) continue;
    const auto f = detail::fields(l, 2, path, lines.number);
    t.samples.push_back(detail::parse_double(f[1], path, lines.number));
  }
  if (t.samples.size() != n)
    throw Error(Errc::parse, detail::where(path, lines.number) + "sample count does not match header");
  return t;
}

// ---------------------------------------------------------------------------
// Ground truth

inline void write_truth(const fs::path& path, const std::vector<synth::TruthRecord>& truth) {
  atomic_write(path, [&](std::ostream& os) {
    os << "scan_id,phi_p,dphi_fwm,dphi_dl,E_E,E_F\n";
    for (const auto& r : truth)
      os << r.scan_id << ',' << fmt(r.phi_p) << ',' << fmt(r.dphi_fwm) << ',' << fmt(r.dphi_dl) << ',' << fmt(r.E_E)
         << ',' << fmt(r.E_F) << '\n';
  });
}

inline std::vector<synth::TruthRecord> read_truth(const fs::path& path) {
  detail::Lines lines{read_file(path)};
  detail::expect_header(lines, "scan_id,phi_p,dphi_fwm,dphi_dl,E_E,E_F", path);
  std::vector<synth::TruthRecord> out;
  std::string_view l;
  while (lines.next(l)) {
    if (l.empty()) continue;
    const auto f = detail::fields(l, 6, path, lines.number);
    const auto n = lines.number;
    out.push_back({detail::parse_int(f[0], path, n), detail::parse_double(f[1], path, n),
                   detail::parse_double(f[2], path, n), detail::parse_double(f[3], path, n),
                   detail::parse_double(f[4], path, n), detail::parse_double(f[5], path, n)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Quadrature records: one row per point; fit parameters in a sidecar

inline void write_records(const fs::path& path, const std::vector<extract::QuadratureRecord>& records) {
  atomic_write(path, [&](std::ostream& os) {
    os << "scan_id,case,theta,x,dphi_fwm,dphi_dl,degenerate\n";
    for (const auto& r : records) {
      const std::string tail =
          "," + fmt(r.dphi_fwm) + "," + fmt(r.dphi_dl) + "," + (r.degenerate ? "1" : "0") + "\n";
      for (const auto& p : r.points)
        os << r.scan_id << ',' << synth::case_name(r.pulse_case) << ',' << fmt(p.theta) << ',' << fmt(p.x) << tail;
    }
  });
}

inline void write_fits(const fs::path& path, const std::vector<extract::QuadratureRecord>& records) {
  atomic_write(path, [&](std::ostream& os) {
    os << "scan_id,case,amplitude,phase,offset,residual_rms,amplitude_stderr,degenerate\n";
    for (const auto& r : records)
      os << r.scan_id << ',' << synth::case_name(r.pulse_case) << ',' << fmt(r.fit.amplitude) << ','
         << fmt(r.fit.phase) << ',' << fmt(r.fit.offset) << ',' << fmt(r.fit.residual_rms) << ','
         << fmt(r.fit.amplitude_stderr) << ',' << (r.fit.degenerate ? 1 : 0) << '\n';
  });
}

inline bool parse_flag(std::string_view s, const fs::path& file, std::size_t line) {
  if (s == "1") return true;
  if (s == "0") return false;
  throw Error(Errc::parse, detail::where(file, line) + "expected 0 or 1, got '" + std::string(s) + "'");
}

inline synth::PulseCase parse_case_at(std::string_view s, const fs::path& file, std::size_t line) {
  try {
    return synth::parse_case(std::string(s));
  } catch (const Error& e) {
    throw Error(Errc::parse, detail::where(file, line) + e.what());
  }
}

/// Reads records.csv; when fits_path exists its fit parameters are attached.
inline std::vector<extract::QuadratureRecord> read_records(const fs::path& path, const fs::path& fits_path = {}) {
  detail::Lines lines{read_file(path)};
  detail::expect_header(lines, "scan_id,case,theta,x,dphi_fwm,dphi_dl,degenerate", path);
  std::vector<extract::QuadratureRecord> out;
  std::string_view l;
  while (lines.next(l)) {
    if (l.empty()) continue;
    const auto n = lines.number;
    const auto f = detail::fields(l, 7, path, n);
    const auto scan_id = detail::parse_int(f[0], path, n);
    const auto c = parse_case_at(f[1], path, n);
    if (out.empty() || out.back().scan_id != scan_id || out.back().pulse_case != c) {
      extract::QuadratureRecord r;
      r.scan_id = scan_id;
      r.pulse_case = c;
      r.dphi_fwm = detail::parse_double(f[4], path, n);
      r.dphi_dl = detail::parse_double(f[5], path, n);
      r.degenerate = parse_flag(f[6], path, n);
      out.push_back(std::move(r));
    }
    out.back().points.push_back({detail::parse_double(f[2], path, n), detail::parse_double(f[3], path, n)});
  }
  if (!fits_path.empty() && fs::exists(fits_path)) {
    detail::Lines fl{read_file(fits_path)};
    detail::expect_header(fl, "scan_id,case,amplitude,phase,offset,residual_rms,amplitude_stderr,degenerate",
                          fits_path);
    std::size_t i = 0;
    while (fl.next(l)) {
      if (l.empty()) continue;
      const auto n = fl.number;
      const auto f = detail::fields(l, 8, fits_path, n);
      if (i >= out.size() || out[i].scan_id != detail::parse_int(f[0], fits_path, n) ||
          out[i].pulse_case != parse_case_at(f[1], fits_path, n))
        throw Error(Errc::parse, detail::where(fits_path, n) + "fit row does not match records");
      auto& fit = out[i++].fit;
      fit.amplitude = detail::parse_double(f[2], fits_path, n);
      fit.phase = detail::parse_double(f[3], fits_path, n);
      fit.offset = detail::parse_double(f[4], fits_path, n);
      fit.residual_rms = detail::parse_double(f[5], fits_path, n);
      fit.amplitude_stderr = detail::parse_double(f[6], fits_path, n);
      fit.degenerate = parse_flag(f[7], fits_path, n);
    }
    if (i != out.size()) throw Error(Errc::parse, fits_path.string() + ": fewer fit rows than records");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Bin manifest

struct BinManifestRow {
  int index = 0;
  double lo = 0.0, hi = 0.0;
  std::array<std::size_t, 3> counts{};
};

inline void write_bin_manifest(const fs::path& path, const std::vector<extract::PhaseBin>& bins) {
  atomic_write(path, [&](std::ostream& os) {
    os << "bin_index,lo,hi,count_probe,count_dl,count_fwm\n";
    for (const auto& b : bins)
      os << b.index << ',' << fmt(b.lo) << ',' << fmt(b.hi) << ',' << b.count(synth::PulseCase::probe_only) << ','
         << b.count(synth::PulseCase::double_lambda) << ',' << b.count(synth::PulseCase::fwm_only) << '\n';
  });
}

inline std::vector<BinManifestRow> read_bin_manifest(const fs::path& path) {
  detail::Lines lines{read_file(path)};
  detail::expect_header(lines, "bin_index,lo,hi,count_probe,count_dl,count_fwm", path);
  std::vector<BinManifestRow> out;
  std::string_view l;
  while (lines.next(l)) {
    if (l.empty()) continue;
    const auto n = lines.number;
    const auto f = detail::fields(l, 6, path, n);
    BinManifestRow r;
    r.index = static_cast<int>(detail::parse_int(f[0], path, n));
    r.lo = detail::parse_double(f[1], path, n);
    r.hi = detail::parse_double(f[2], path, n);
    for (int c = 0; c < 3; ++c) r.counts[static_cast<std::size_t>(c)] = static_cast<std::size_t>(detail::parse_int(f[3 + c], path, n));
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Density matrices, Wigner grids, reports

inline json density_to_json(const tomo::DensityMatrix& rho) {
  json re = json::array(), im = json::array();
  for (int m = 0; m < rho.cutoff; ++m)
    for (int n = 0; n < rho.cutoff; ++n) {
      re.push_back(rho.elems(m, n).real());
      im.push_back(rho.elems(m, n).imag());
    }
  return {{"cutoff", rho.cutoff}, {"real", re}, {"imag", im}};
}

inline tomo::DensityMatrix density_from_json(const json& j) {
  try {
    const int N = j.at("cutoff").get<int>();
    const auto re = j.at("real").get<std::vector<double>>();
    const auto im = j.at("imag").get<std::vector<double>>();
    if (N < 1 || re.size() != static_cast<std::size_t>(N) * N || im.size() != re.size())
      throw Error(Errc::parse, "density matrix: array sizes do not match cutoff");
    tomo::Matrix m(N, N);
    for (int a = 0; a < N; ++a)
      for (int b = 0; b < N; ++b) {
        const auto k = static_cast<std::size_t>(a) * N + b;
        m(a, b) = Complex{re[k], im[k]};
      }
    return tomo::DensityMatrix(std::move(m));
  } catch (const json::exception& e) {
    throw Error(Errc::parse, std::string("density matrix: ") + e.what());
  }
}

inline json parse_json_file(const fs::path& path) {
  try {
    return json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw Error(Errc::parse, path.filename().string() + ": " + e.what());
  }
}

inline void write_json(const fs::path& path, const json& j) {
  atomic_write(path, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

inline void write_density(const fs::path& path, const tomo::DensityMatrix& rho) { write_json(path, density_to_json(rho)); }

inline tomo::DensityMatrix read_density(const fs::path& path) { return density_from_json(parse_json_file(path)); }

inline void write_wigner(const fs::path& path, const tomo::WignerGrid& g) {
  atomic_write(path, [&](std::ostream& os) {
    os << "x,p,w\n";
    for (std::size_t i = 0; i < g.x_axis.size(); ++i)
      for (std::size_t j = 0; j < g.p_axis.size(); ++j)
        os << fmt(g.x_axis[i]) << ',' << fmt(g.p_axis[j]) << ','
           << fmt(g.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))) << '\n';
  });
}

/// Rows must be x-major, as written by write_wigner.
inline tomo::WignerGrid read_wigner(const fs::path& path) {
  detail::Lines lines{read_file(path)};
  detail::expect_header(lines, "x,p,w", path);
  std::vector<std::array<double, 3>> rows;
  std::string_view l;
  while (lines.next(l)) {
    if (l.empty()) continue;
    const auto f = detail::fields(l, 3, path, lines.number);
    rows.push_back({detail::parse_double(f[0], path, lines.number), detail::parse_double(f[1], path, lines.number),
                    detail::parse_double(f[2], path, lines.number)});
  }
  tomo::WignerGrid g;
  if (rows.empty()) return g;
  for (const auto& r : rows) {
    if (r[0] != rows.front()[0]) break;
    g.p_axis.push_back(r[1]);
  }
  if (rows.size() % g.p_axis.size() != 0) throw Error(Errc::parse, path.string() + ": grid is not rectangular");
  const std::size_t nx = rows.size() / g.p_axis.size();
  g.values.resize(static_cast<Eigen::Index>(nx), static_cast<Eigen::Index>(g.p_axis.size()));
  for (std::size_t i = 0; i < nx; ++i) {
    g.x_axis.push_back(rows[i * g.p_axis.size()][0]);
    for (std::size_t j = 0; j < g.p_axis.size(); ++j)
      g.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i * g.p_axis.size() + j][2];
  }
  return g;
}

inline json estimate_json(const tomo::Estimate& e) { return {{"value", e.value}, {"err", e.err}}; }

inline tomo::Estimate estimate_from(const json& j) { return {j.at("value").get<double>(), j.at("err").get<double>()}; }

inline json report_to_json(const tomo::ReconstructionReport& r) {
  return {{"rho", density_to_json(r.rho)},
          {"log_likelihood", r.log_likelihood},
          {"iterations", r.iterations},
          {"converged", r.converged},
          {"n_points", r.n_points},
          {"underflow_points", r.underflow_points},
          {"min_accepted_step", r.min_accepted_step},
          {"fidelity_vs_input", estimate_json(r.fidelity_vs_input)},
          {"coherent_overlap", estimate_json(r.coherent_overlap)},
          {"purity", estimate_json(r.purity)},
          {"mean_photon", estimate_json(r.mean_photon)},
          {"wigner_max_location", {r.wigner_max_location[0], r.wigner_max_location[1]}}};
}

inline tomo::ReconstructionReport report_from_json(const json& j) {
  try {
    tomo::ReconstructionReport r;
    r.rho = density_from_json(j.at("rho"));
    r.log_likelihood = j.at("log_likelihood").get<double>();
    r.iterations = j.at("iterations").get<int>();
    r.converged = j.at("converged").get<bool>();
    r.n_points = j.at("n_points").get<std::size_t>();
    r.underflow_points = j.at("underflow_points").get<std::size_t>();
    r.min_accepted_step = j.at("min_accepted_step").get<double>();
    r.fidelity_vs_input = estimate_from(j.at("fidelity_vs_input"));
    r.coherent_overlap = estimate_from(j.at("coherent_overlap"));
    r.purity = estimate_from(j.at("purity"));
    r.mean_photon = estimate_from(j.at("mean_photon"));
    r.wigner_max_location = {j.at("wigner_max_location").at(0).get<double>(),
                             j.at("wigner_max_location").at(1).get<double>()};
    return r;
  } catch (const json::exception& e) {
    throw Error(Errc::parse, std::string("report: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Atomic presets

inline json params_to_json(const atomic::AtomicParams& p) {
  return {{"Gamma", p.Gamma},     {"gamma", p.gamma},     {"Delta1", p.Delta1},   {"Delta2", p.Delta2},
          {"Delta", p.Delta},     {"dip13", p.dip13},     {"dip23", p.dip23},     {"alpha_p", p.alpha_p},
          {"alpha_s", p.alpha_s}, {"length", p.length},   {"gamma31", p.gamma31}, {"mu13", p.mu13}};
}

namespace detail {

/// Copies known keys into fields; unknown keys are a config error.
template <class T>
void read_fields(const json& j, const std::string& what, std::initializer_list<std::pair<const char*, T*>> keys) {
  if (!j.is_object()) throw Error(Errc::config, what + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool known = false;
    for (const auto& [k, ptr] : keys) {
      if (it.key() == k) {
        if (!it.value().is_number()) throw Error(Errc::config, what + "." + k + ": expected a number");
        *ptr = it.value().template get<T>();
        known = true;
      }
    }
    if (!known) throw Error(Errc::config, what + ": unknown key '" + it.key() + "'");
  }
}

}  // namespace detail

/// Missing keys keep the values already in `p`.
inline atomic::AtomicParams params_from_json(const json& j, atomic::AtomicParams p = {}) {
  detail::read_fields<double>(j, "params",
                              {{"Gamma", &p.Gamma},
                               {"gamma", &p.gamma},
                               {"Delta1", &p.Delta1},
                               {"Delta2", &p.Delta2},
                               {"Delta", &p.Delta},
                               {"dip13", &p.dip13},
                               {"dip23", &p.dip23},
                               {"alpha_p", &p.alpha_p},
                               {"alpha_s", &p.alpha_s},
                               {"length", &p.length},
                               {"gamma31", &p.gamma31},
                               {"mu13", &p.mu13}});
  return p;
}

inline json fields_to_json(const atomic::FieldSet& f) {
  return {{"Ep", f.Ep},         {"Es", f.Es},         {"Ec1", f.Ec1},       {"Ec2", f.Ec2},
          {"phi_p", f.phi_p},   {"phi_s", f.phi_s},   {"phi_c1", f.phi_c1}, {"phi_c2", f.phi_c2}};
}

inline atomic::FieldSet fields_from_json(const json& j, atomic::FieldSet f = {}) {
  detail::read_fields<double>(j, "fields",
                              {{"Ep", &f.Ep},
                               {"Es", &f.Es},
                               {"Ec1", &f.Ec1},
                               {"Ec2", &f.Ec2},
                               {"phi_p", &f.phi_p},
                               {"phi_s", &f.phi_s},
                               {"phi_c1", &f.phi_c1},
                               {"phi_c2", &f.phi_c2}});
  return f;
}

inline json preset_to_json(const atomic::MediumPreset& p) {
  json c = {{"Ec1", p.controls.Ec1}, {"Ec2", p.controls.Ec2}, {"phi_c1", p.controls.phi_c1},
            {"phi_c2", p.controls.phi_c2}};
  return {{"name", p.name}, {"params", params_to_json(p.params)}, {"controls", c}};
}

inline atomic::MediumPreset preset_from_json(const json& j) {
  atomic::MediumPreset p;
  try {
    p.name = j.at("name").get<std::string>();
    p.params = params_from_json(j.at("params"));
    p.controls = fields_from_json(j.at("controls"));
  } catch (const json::exception& e) {
    throw Error(Errc::config, std::string("preset: ") + e.what());
  }
  for (auto it = j.begin(); it != j.end(); ++it)
    if (it.key() != "name" && it.key() != "params" && it.key() != "controls")
      throw Error(Errc::config, "preset: unknown key '" + it.key() + "'");
  p.params.validate();
  return p;
}

inline void write_preset(const fs::path& path, const atomic::MediumPreset& p) { write_json(path, preset_to_json(p)); }

inline atomic::MediumPreset read_preset(const fs::path& path) { return preset_from_json(parse_json_file(path)); }

}  // namespace dlambda::io
