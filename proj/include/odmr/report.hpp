#ifndef ODMR_REPORT_HPP
#define ODMR_REPORT_HPP

#include <json.hpp>

#include "odmr/errors.hpp"
#include "odmr/thermal.hpp"

namespace odmr::report {

using json = nlohmann::json;

inline constexpr const char* schema_version = "1.0";

/// Fresh report object carrying the schema version and a report kind tag.
json make_report(const std::string& kind);

/// Throws ParseError unless the document carries a schema_version whose
/// major number matches ours.
void check_schema_version(const json& doc);

json calibration_to_json(const thermal::CalibrationModel& m);
thermal::CalibrationModel calibration_from_json(const json& doc);

} // namespace odmr::report

#endif
