#ifndef ODMR_CSV_HPP
#define ODMR_CSV_HPP

#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "odmr/errors.hpp"
#include "odmr/lattice.hpp"
#include "odmr/lineshape.hpp"
#include "odmr/thermal.hpp"

namespace odmr::io {

/// Shortest decimal string that round-trips back to the same double.
std::string format_double(double v);

/// A (T, value[, sigma]) series; value_column records which header variant
/// the file carried (d_mhz or e_mhz). sigmas is empty when the column is
/// absent, otherwise one entry per point.
struct Series {
  std::vector<thermal::CalibrationPoint> points;
  std::vector<double> sigmas;
  std::string value_column;
};

// Readers are strict about the documented formats: exact header, comma
// separator, '.' decimal, Unix newlines. Errors carry 1-based line numbers.
lineshape::OdmrSpectrum read_spectrum(std::istream& in);
Series read_series(std::istream& in);
std::vector<lattice::LatticeRecord> read_lattice(std::istream& in);
std::vector<double> read_values(std::istream& in);

lineshape::OdmrSpectrum read_spectrum_file(const std::string& path);
Series read_series_file(const std::string& path);
std::vector<lattice::LatticeRecord> read_lattice_file(const std::string& path);
std::vector<double> read_values_file(const std::string& path);

void write_spectrum(std::ostream& out, const lineshape::OdmrSpectrum& s);

/// Write via a sibling temp file then rename, so readers never observe a
/// half-written file.
void write_text_atomic(const std::string& path, const std::string& content);

} // namespace odmr::io

#endif
