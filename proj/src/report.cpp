#include "odmr/report.hpp"

#include <string>

namespace odmr::report {

namespace {

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& rows) {
  if (!rows.is_array()) throw ParseError("covariance: expected an array of rows");
  const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
  if (r == 0) return Eigen::MatrixXd();
  const Eigen::Index c = static_cast<Eigen::Index>(rows[0].size());
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const auto& row = rows[static_cast<size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c)
      throw ParseError("covariance: ragged rows");
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = row[static_cast<size_t>(j)].get<double>();
  }
  return m;
}

} // namespace

json make_report(const std::string& kind) {
  json doc;
  doc["schema_version"] = schema_version;
  doc["report"] = kind;
  return doc;
}

void check_schema_version(const json& doc) {
  if (!doc.contains("schema_version") || !doc["schema_version"].is_string())
    throw ParseError("missing schema_version");
  const std::string v = doc["schema_version"].get<std::string>();
  const std::string ours(schema_version);
  const auto major = v.substr(0, v.find('.'));
  if (major != ours.substr(0, ours.find('.')))
    throw ParseError("unsupported schema_version '" + v + "', expected major version " +
                     ours.substr(0, ours.find('.')));
}

json calibration_to_json(const thermal::CalibrationModel& m) {
  json doc = make_report("calibration");
  doc["model"] = thermal::to_string(m.kind);
  json p;
  switch (m.kind) {
    case thermal::ModelKind::varshni: {
      const auto& v = std::get<thermal::VarshniParams>(m.params);
      p = {{"d0", v.d0}, {"alpha", v.alpha}, {"beta", v.beta}};
      break;
    }
    case thermal::ModelKind::modified_varshni: {
      const auto& v = std::get<thermal::ModVarshniParams>(m.params);
      p = {{"d0", v.d0}, {"a", v.a}, {"b", v.b}};
      break;
    }
    case thermal::ModelKind::poly3:
    case thermal::ModelKind::poly5:
      p = {{"coefficients", std::get<thermal::PolyParams>(m.params).coefficients}};
      break;
    case thermal::ModelKind::linear: {
      const auto& v = std::get<thermal::LinearParams>(m.params);
      p = {{"intercept", v.intercept}, {"slope", v.slope}};
      break;
    }
  }
  doc["params"] = std::move(p);
  doc["covariance"] = matrix_to_json(m.covariance);
  doc["t_min_k"] = m.t_min;
  doc["t_max_k"] = m.t_max;
  doc["max_abs_residual_mhz"] = m.max_abs_residual;
  doc["monotone_decreasing"] = m.monotone_decreasing;
  doc["ssr"] = m.ssr;
  return doc;
}

thermal::CalibrationModel calibration_from_json(const json& doc) {
  check_schema_version(doc);
  for (const char* key : {"model", "params", "covariance", "t_min_k", "t_max_k",
                          "max_abs_residual_mhz", "monotone_decreasing", "ssr"})
    if (!doc.contains(key)) throw ParseError(std::string("missing field '") + key + "'");

  thermal::CalibrationModel m;
  try {
    m.kind = thermal::model_kind_from_string(doc["model"].get<std::string>());
    const json& p = doc["params"];
    switch (m.kind) {
      case thermal::ModelKind::varshni:
        m.params = thermal::VarshniParams(p.at("d0").get<double>(), p.at("alpha").get<double>(),
                                          p.at("beta").get<double>());
        break;
      case thermal::ModelKind::modified_varshni:
        m.params = thermal::ModVarshniParams(p.at("d0").get<double>(), p.at("a").get<double>(),
                                             p.at("b").get<double>());
        break;
      case thermal::ModelKind::poly3:
      case thermal::ModelKind::poly5: {
        thermal::PolyParams pp;
        pp.coefficients = p.at("coefficients").get<std::vector<double>>();
        const size_t want = static_cast<size_t>(thermal::parameter_count(m.kind));
        if (pp.coefficients.size() != want)
          throw ParseError("coefficients: expected " + std::to_string(want) + " entries");
        m.params = std::move(pp);
        break;
      }
      case thermal::ModelKind::linear:
        m.params = thermal::LinearParams{p.at("intercept").get<double>(),
                                         p.at("slope").get<double>()};
        break;
    }
    m.covariance = matrix_from_json(doc["covariance"]);
    m.t_min = doc["t_min_k"].get<double>();
    m.t_max = doc["t_max_k"].get<double>();
    m.max_abs_residual = doc["max_abs_residual_mhz"].get<double>();
    m.monotone_decreasing = doc["monotone_decreasing"].get<bool>();
    m.ssr = doc["ssr"].get<double>();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed calibration document: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ParseError(std::string("invalid calibration parameters: ") + e.what());
  }
  if (!(m.t_min <= m.t_max)) throw ParseError("t_min_k must be <= t_max_k");
  return m;
}

} // namespace odmr::report
