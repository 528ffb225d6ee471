#pragma once

// JSON helpers shared by the file formats. Non-finite reals are not valid JSON
// numbers, so they are stored as the strings "inf", "-inf" and "nan".

#include <cmath>
#include <limits>
#include <string>

#include "hir/error.hpp"
#include "json.hpp"

namespace hir::detail {

using json = nlohmann::json;

inline json real_to_json(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

inline double real_from_json(const json& j, const std::string& what) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto& s = j.get_ref<const std::string&>();
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  }
  throw FormatError(what + ": expected a real number");
}

template <typename T>
T required(const json& obj, const char* key, const std::string& context) {
  const auto it = obj.find(key);
  if (it == obj.end()) throw FormatError(context + ": missing \"" + key + "\" field");
  try {
    return it->template get<T>();
  } catch (const json::exception&) {
    throw FormatError(context + ": field \"" + key + "\" has the wrong type");
  }
}

}  // namespace hir::detail
