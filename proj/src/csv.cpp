#include "odmr/csv.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <system_error>
#include <unistd.h>

namespace odmr::io {

namespace {

[[noreturn]] void fail(size_t line, const std::string& what) {
  throw ParseError("line " + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> out;
  size_t start = 0;
  while (true) {
    const size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

double parse_number(const std::string& field, size_t line) {
  double v = 0.0;
  const char* first = field.data();
  const char* last = first + field.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    fail(line, "expected a number, got '" + field + "'");
  if (!std::isfinite(v)) fail(line, "non-finite value '" + field + "'");
  return v;
}

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows; // ragged-free: all rows header-sized
};

Table read_table(std::istream& in, const std::vector<std::vector<std::string>>& accepted_headers) {
  std::string line;
  size_t lineno = 0;

  if (!std::getline(in, line)) throw ParseError("empty input");
  ++lineno;
  const auto header = split_fields(line);

  bool ok = false;
  for (const auto& h : accepted_headers)
    if (header == h) { ok = true; break; }
  if (!ok) fail(lineno, "unrecognized header '" + line + "'");

  Table t;
  t.header = header;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) fail(lineno, "blank line");
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      fail(lineno, "expected " + std::to_string(header.size()) + " fields, got " +
                       std::to_string(fields.size()));
    std::vector<double> row;
    row.reserve(fields.size());
    for (const auto& f : fields) row.push_back(parse_number(f, lineno));
    t.rows.push_back(std::move(row));
  }
  if (t.rows.empty()) throw ParseError("no data rows");
  return t;
}

template <class Reader>
auto read_file(const std::string& path, Reader reader) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path + ": cannot open");
  try {
    return reader(in);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

} // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

lineshape::OdmrSpectrum read_spectrum(std::istream& in) {
  const Table t = read_table(in, {{"freq_mhz", "signal"}, {"freq_mhz", "signal", "sigma"}});
  const Eigen::Index n = static_cast<Eigen::Index>(t.rows.size());
  const bool has_sigma = t.header.size() == 3;
  Eigen::ArrayXd f(n), s(n), sig(has_sigma ? n : 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    f[i] = t.rows[static_cast<size_t>(i)][0];
    s[i] = t.rows[static_cast<size_t>(i)][1];
    if (has_sigma) sig[i] = t.rows[static_cast<size_t>(i)][2];
  }
  try {
    if (has_sigma) return lineshape::OdmrSpectrum(f, s, sig);
    return lineshape::OdmrSpectrum(f, s);
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("invalid spectrum: ") + e.what());
  }
}

Series read_series(std::istream& in) {
  const Table t = read_table(in, {{"temp_k", "d_mhz"},
                                  {"temp_k", "d_mhz", "sigma_mhz"},
                                  {"temp_k", "e_mhz"},
                                  {"temp_k", "e_mhz", "sigma_mhz"}});
  Series s;
  s.value_column = t.header[1];
  for (const auto& row : t.rows) {
    s.points.push_back({row[0], row[1]});
    if (row.size() == 3) s.sigmas.push_back(row[2]);
  }
  return s;
}

std::vector<lattice::LatticeRecord> read_lattice(std::istream& in) {
  const Table t = read_table(in, {{"temp_k", "a_angstrom", "c_angstrom"}});
  std::vector<lattice::LatticeRecord> out;
  out.reserve(t.rows.size());
  for (size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    try {
      out.emplace_back(row[0], row[1], row[2]);
    } catch (const std::invalid_argument& e) {
      fail(i + 2, e.what());
    }
  }
  return out;
}

std::vector<double> read_values(std::istream& in) {
  const Table t = read_table(in, {{"value_mhz"}});
  std::vector<double> out;
  out.reserve(t.rows.size());
  for (const auto& row : t.rows) out.push_back(row[0]);
  return out;
}

lineshape::OdmrSpectrum read_spectrum_file(const std::string& path) {
  return read_file(path, [](std::istream& in) { return read_spectrum(in); });
}
Series read_series_file(const std::string& path) {
  return read_file(path, [](std::istream& in) { return read_series(in); });
}
std::vector<lattice::LatticeRecord> read_lattice_file(const std::string& path) {
  return read_file(path, [](std::istream& in) { return read_lattice(in); });
}
std::vector<double> read_values_file(const std::string& path) {
  return read_file(path, [](std::istream& in) { return read_values(in); });
}

void write_spectrum(std::ostream& out, const lineshape::OdmrSpectrum& s) {
  const bool has_sigma = s.sigma.has_value();
  out << (has_sigma ? "freq_mhz,signal,sigma\n" : "freq_mhz,signal\n");
  for (Eigen::Index i = 0; i < s.freqs.size(); ++i) {
    out << format_double(s.freqs[i]) << ',' << format_double(s.signal[i]);
    if (has_sigma) out << ',' << format_double((*s.sigma)[i]);
    out << '\n';
  }
}

void write_text_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  const fs::path dir = target.parent_path().empty() ? fs::path(".") : target.parent_path();
  fs::path tmp = dir / (target.filename().string() + ".tmp." + std::to_string(::getpid()));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw std::runtime_error("write failed for " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw std::runtime_error("cannot move temporary file onto " + path);
  }
}

} // namespace odmr::io
