#pragma once

// Validates a JSON document against the subset of JSON Schema used by the
// response schemas in docs/api: type (string or list), enum, required,
// properties, additionalProperties (boolean) and items. Returns the list of
// problems, empty when the document conforms.

#include <string>
#include <vector>

#include "json.hpp"

namespace testing_support {

inline bool json_has_type(const nlohmann::json& v, const std::string& t) {
  if (t == "object") return v.is_object();
  if (t == "array") return v.is_array();
  if (t == "string") return v.is_string();
  if (t == "boolean") return v.is_boolean();
  if (t == "null") return v.is_null();
  if (t == "integer") return v.is_number_integer();
  if (t == "number") return v.is_number();
  return false;
}

inline void schema_problems(const nlohmann::json& v, const nlohmann::json& schema, const std::string& path,
                            std::vector<std::string>& out) {
  if (schema.contains("type")) {
    std::vector<std::string> types;
    if (schema["type"].is_array()) {
      types = schema["type"].get<std::vector<std::string>>();
    } else {
      types.push_back(schema["type"].get<std::string>());
    }
    bool ok = false;
    for (const auto& t : types) ok = ok || json_has_type(v, t);
    if (!ok) {
      out.push_back(path + ": expected " + schema["type"].dump() + ", got " + v.type_name());
      return;
    }
  }
  if (schema.contains("enum")) {
    bool found = false;
    for (const auto& e : schema["enum"]) found = found || e == v;
    if (!found) out.push_back(path + ": " + v.dump() + " not in " + schema["enum"].dump());
  }
  if (v.is_object()) {
    for (const auto& r : schema.value("required", nlohmann::json::array())) {
      if (!v.contains(r.get<std::string>())) out.push_back(path + ": missing '" + r.get<std::string>() + "'");
    }
    const auto props = schema.value("properties", nlohmann::json::object());
    for (auto it = v.begin(); it != v.end(); ++it) {
      if (props.contains(it.key())) {
        schema_problems(it.value(), props[it.key()], path + "." + it.key(), out);
      } else if (schema.value("additionalProperties", true) == false) {
        out.push_back(path + ": unexpected '" + it.key() + "'");
      }
    }
  }
  if (v.is_array() && schema.contains("items")) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      schema_problems(v[i], schema["items"], path + "[" + std::to_string(i) + "]", out);
    }
  }
}

inline std::vector<std::string> schema_problems(const nlohmann::json& v, const nlohmann::json& schema) {
  std::vector<std::string> out;
  schema_problems(v, schema, "$", out);
  return out;
}

}  // namespace testing_support
