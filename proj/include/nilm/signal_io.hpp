#pragma once

// Sample files (CSV and NILM1 binary), scenario scripts and label tracks.

#include <charconv>
#include <fstream>
#include <sstream>
#include <cctype>
#include <string>
#include <vector>

#include "nilm/signal.hpp"

namespace nilm {

enum class SampleFormat { csv, binary };

inline SampleFormat parse_sample_format(std::string_view s) {
  if (s == "csv") return SampleFormat::csv;
  if (s == "bin" || s == "binary") return SampleFormat::binary;
  fail(ErrorKind::Parse, "unknown sample format '" + std::string(s) + "'");
}

/// Format from a file extension: ".bin" is binary, anything else CSV.
inline SampleFormat sample_format_for(const std::string& path) {
  return path.size() >= 4 && path.substr(path.size() - 4) == ".bin" ? SampleFormat::binary : SampleFormat::csv;
}

// Shortest decimal representation that parses back to the same double.
inline std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

inline bool parse_double(std::string_view text, double& out) {
  while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
  while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r')) text.remove_suffix(1);
  if (text.empty()) return false;
  if (text.front() == '+') text.remove_prefix(1);
  auto res = std::from_chars(text.data(), text.data() + text.size(), out);
  return res.ec == std::errc() && res.ptr == text.data() + text.size();
}

inline std::vector<std::string_view> split(std::string_view line, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(sep, start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::Io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorKind::Io, "cannot write '" + path + "'");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  require(static_cast<bool>(out), ErrorKind::Io, "short write to '" + path + "'");
}

// --- sample streams ---------------------------------------------------------

inline std::string samples_to_csv(const Stream& s) {
  std::string out = "t_s,v,i\n";
  out.reserve(s.size() * 48);
  for (std::size_t k = 0; k < s.size(); ++k) {
    out += format_double(static_cast<double>(k) / s.rate_hz);
    out += ',';
    out += format_double(s.v[k]);
    out += ',';
    out += format_double(s.i[k]);
    out += '\n';
  }
  return out;
}

inline Stream samples_from_csv(std::string_view text) {
  Stream s;
  std::size_t line_no = 0;
  std::vector<double> times;
  bool header_seen = false;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = text.substr(0, eol);
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (!header_seen) {
      require(line == "t_s,v,i", ErrorKind::Parse, "line 1: expected header 't_s,v,i'");
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    require(cells.size() == 3, ErrorKind::Parse,
            "line " + std::to_string(line_no) + ": expected 3 columns, got " + std::to_string(cells.size()));
    double t, v, i;
    if (!parse_double(cells[0], t) || !parse_double(cells[1], v) || !parse_double(cells[2], i)) {
      fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": non-numeric cell");
    }
    times.push_back(t);
    s.v.push_back(v);
    s.i.push_back(i);
  }
  require(header_seen, ErrorKind::Parse, "line 1: missing header 't_s,v,i'");
  if (times.size() >= 2 && times[1] > times[0]) s.rate_hz = std::round(1.0 / (times[1] - times[0]));
  return s;
}

inline std::vector<std::uint8_t> samples_to_binary(const Stream& s) {
  require(s.v.size() == s.i.size(), ErrorKind::LengthMismatch, "voltage and current channels differ in length");
  ByteWriter w;
  w.raw("NILM1");
  w.u32(static_cast<std::uint32_t>(s.size()));
  w.f64(s.rate_hz);
  for (std::size_t k = 0; k < s.size(); ++k) {
    w.f64(s.v[k]);
    w.f64(s.i[k]);
  }
  return w.take();
}

inline Stream samples_from_binary(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  require(bytes.size() >= 5 && r.raw(5) == "NILM1", ErrorKind::Format, "missing NILM1 magic");
  const std::uint32_t count = r.u32();
  Stream s;
  s.rate_hz = r.f64();
  require(r.remaining() == static_cast<std::size_t>(count) * 16, ErrorKind::Truncation,
          "sample payload size does not match the declared count");
  s.v.resize(count);
  s.i.resize(count);
  for (std::uint32_t k = 0; k < count; ++k) {
    s.v[k] = r.f64();
    s.i[k] = r.f64();
  }
  return s;
}

inline void save_samples(const Stream& s, const std::string& path, SampleFormat format) {
  if (format == SampleFormat::csv) {
    write_file(path, samples_to_csv(s));
  } else {
    const auto bytes = samples_to_binary(s);
    write_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
  }
}

inline Stream load_samples(const std::string& path, SampleFormat format) {
  const std::string content = read_file(path);
  if (format == SampleFormat::csv) return samples_from_csv(content);
  return samples_from_binary(
      std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(content.data()), content.size()));
}

// --- scenario scripts ------------------------------------------------------
//
//   version: 1
//   duration_s: 30
//   mains_amplitude_v: 325.27
//   mains_freq_hz: 50
//   appliance lamp kind=resistive power=60 noise=0.005
//   appliance charger kind=rectifier power=10 harmonics=1:1,3:0.6,5:0.3
//   event 2.05 lamp on
//   event 6.25 lamp off
//
// '#' starts a comment. Appliances must be declared before the events that
// reference them.

struct ScenarioFile {
  ScenarioScript script;
  ApplianceRegistry registry;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t k = 0;
  while (k < s.size()) {
    while (k < s.size() && std::isspace(static_cast<unsigned char>(s[k]))) ++k;
    const std::size_t b = k;
    while (k < s.size() && !std::isspace(static_cast<unsigned char>(s[k]))) ++k;
    if (k > b) out.push_back(s.substr(b, k - b));
  }
  return out;
}

}  // namespace detail

inline ScenarioFile parse_scenario(std::string_view text) {
  ScenarioFile file;
  bool have_version = false;
  bool have_duration = false;
  std::size_t line_no = 0;
  auto error = [&](const std::string& what) { fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": " + what); };
  auto number = [&](std::string_view s) {
    double x;
    if (!parse_double(s, x)) error("invalid number '" + std::string(s) + "'");
    return x;
  };

  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;

    if (auto colon = line.find(':'); colon != std::string_view::npos && line.find(' ') > colon) {
      const auto key = detail::trim(line.substr(0, colon));
      const auto value = detail::trim(line.substr(colon + 1));
      if (key == "version") {
        if (number(value) != 1.0) error("unsupported scenario version '" + std::string(value) + "'");
        have_version = true;
      } else if (key == "duration_s") {
        file.script.duration_s = number(value);
        have_duration = true;
      } else if (key == "mains_amplitude_v") {
        file.script.mains.amplitude_v = number(value);
      } else if (key == "mains_freq_hz") {
        file.script.mains.freq_hz = number(value);
      } else {
        error("unknown key '" + std::string(key) + "'");
      }
      continue;
    }

    const auto tok = detail::tokens(line);
    if (tok[0] == "appliance") {
      if (tok.size() < 3) error("appliance needs an id and attributes");
      const std::string id(tok[1]);
      if (file.registry.count(id)) error("duplicate appliance '" + id + "'");
      ApplianceModel m;
      bool have_kind = false;
      for (std::size_t t = 2; t < tok.size(); ++t) {
        const auto eq = tok[t].find('=');
        if (eq == std::string_view::npos) error("expected key=value, got '" + std::string(tok[t]) + "'");
        const auto k = tok[t].substr(0, eq);
        const auto v = tok[t].substr(eq + 1);
        if (k == "kind") {
          try {
            m.kind = parse_appliance_kind(v);
          } catch (const Error&) {
            error("unknown appliance kind '" + std::string(v) + "'");
          }
          have_kind = true;
        } else if (k == "power") {
          m.nominal_power_w = number(v);
        } else if (k == "phase") {
          m.phase_rad = number(v);
        } else if (k == "cut") {
          m.cut_angle_rad = number(v);
        } else if (k == "noise") {
          m.noise_rms_a = number(v);
        } else if (k == "harmonics") {
          for (auto pair : split(v, ',')) {
            const auto c = pair.find(':');
            if (c == std::string_view::npos) error("harmonic entries look like order:amplitude");
            const double order = number(pair.substr(0, c));
            m.harmonic_profile[static_cast<int>(order)] = number(pair.substr(c + 1));
          }
        } else {
          error("unknown appliance attribute '" + std::string(k) + "'");
        }
      }
      if (!have_kind) error("appliance '" + id + "' lacks kind=");
      try {
        m.validate();
      } catch (const Error& e) {
        error(e.what());
      }
      file.registry.emplace(id, std::move(m));
    } else if (tok[0] == "event") {
      if (tok.size() != 4) error("event lines look like: event <time_s> <appliance> on|off");
      ScriptEvent ev;
      ev.time_s = number(tok[1]);
      ev.appliance_id = std::string(tok[2]);
      if (!file.registry.count(ev.appliance_id)) error("unknown appliance id '" + ev.appliance_id + "'");
      if (tok[3] == "on") {
        ev.action = SwitchAction::on;
      } else if (tok[3] == "off") {
        ev.action = SwitchAction::off;
      } else {
        error("event action must be on or off");
      }
      file.script.events.push_back(std::move(ev));
    } else {
      error("unrecognised line '" + std::string(line) + "'");
    }
  }
  line_no = 0;
  if (!have_version) error("missing 'version: 1'");
  if (!have_duration) error("missing 'duration_s'");
  file.script.validate();
  return file;
}

inline std::string scenario_to_text(const ScenarioFile& file) {
  std::ostringstream out;
  out << "version: 1\n";
  out << "duration_s: " << format_double(file.script.duration_s) << "\n";
  out << "mains_amplitude_v: " << format_double(file.script.mains.amplitude_v) << "\n";
  out << "mains_freq_hz: " << format_double(file.script.mains.freq_hz) << "\n";
  for (const auto& [id, m] : file.registry) {
    out << "appliance " << id << " kind=" << to_string(m.kind) << " power=" << format_double(m.nominal_power_w);
    if (m.kind == ApplianceKind::reactive) out << " phase=" << format_double(m.phase_rad);
    if (m.kind == ApplianceKind::phase_cut) out << " cut=" << format_double(m.cut_angle_rad);
    if (m.kind == ApplianceKind::rectifier) {
      out << " harmonics=";
      bool first = true;
      for (auto [order, amp] : m.harmonic_profile) {
        out << (first ? "" : ",") << order << ":" << format_double(amp);
        first = false;
      }
    }
    if (m.noise_rms_a > 0.0) out << " noise=" << format_double(m.noise_rms_a);
    out << "\n";
  }
  for (const auto& ev : file.script.events) {
    out << "event " << format_double(ev.time_s) << " " << ev.appliance_id << " "
        << (ev.action == SwitchAction::on ? "on" : "off") << "\n";
  }
  return out.str();
}

inline std::string join(const std::vector<std::string>& items, char sep) {
  std::string out;
  for (std::size_t k = 0; k < items.size(); ++k) {
    if (k) out += sep;
    out += items[k];
  }
  return out;
}

/// Label track CSV: `window_index,active,toggled`; id sets joined by '|', "none" when empty.
inline std::string labels_to_csv(const std::vector<WindowLabel>& labels) {
  std::string out = "window_index,active,toggled\n";
  for (const auto& l : labels) {
    out += std::to_string(l.index) + "," + (l.active.empty() ? "none" : join(l.active, '|')) + "," +
           (l.toggled.empty() ? "none" : join(l.toggled, '|')) + "\n";
  }
  return out;
}

}  // namespace nilm
