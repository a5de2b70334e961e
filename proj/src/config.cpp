#include "ets/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "ets/errors.hpp"

namespace ets {

using nlohmann::json;

namespace {

std::string type_name(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_unsigned()) return "non-negative integer";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

bool integral(const json& v) {
  if (v.is_number_integer()) return true;
  if (!v.is_number_float()) return false;
  const double d = v.get<double>();
  return std::isfinite(d) && d == static_cast<double>(static_cast<std::int64_t>(d));
}

// Returns an error message, or empty when `v` fits the type of `def`.
std::string type_error(const std::string& field, const json& def, const json& v) {
  auto bad = [&] { return field + ": expected " + type_name(def) + ", got " + v.dump(); };
  if (field == "policy.keep_k") {
    if (v.is_string() || (integral(v) && v.get<double>() >= 1)) return {};
    return field + ": expected \"sqrt\" or a positive integer, got " + v.dump();
  }
  if (def.is_boolean()) return v.is_boolean() ? "" : bad();
  if (def.is_number_unsigned()) return integral(v) && v.get<double>() >= 0 ? "" : bad();
  if (def.is_number_integer()) return integral(v) ? "" : bad();
  if (def.is_number()) return v.is_number() ? "" : bad();
  if (def.is_string()) return v.is_string() ? "" : bad();
  if (def.is_array()) {
    if (!v.is_array()) return bad();
    if (def.empty()) return {};
    for (std::size_t i = 0; i < v.size(); ++i) {
      auto e = type_error(field + "[" + std::to_string(i) + "]", def.at(0), v[i]);
      if (!e.empty()) return e;
    }
    return {};
  }
  return bad();
}

// Normalises integral floats so later get<int>() calls are exact.
json normalised(const json& def, const json& v) {
  if (def.is_array()) {
    if (def.empty()) return v;
    json out = json::array();
    for (const auto& e : v) out.push_back(normalised(def.at(0), e));
    return out;
  }
  if (v.is_number_float() && (def.is_number_unsigned() || def.is_number_integer())) {
    const auto i = static_cast<std::int64_t>(v.get<double>());
    return def.is_number_unsigned() ? json(static_cast<std::uint64_t>(i)) : json(i);
  }
  return v;
}

json scalar_from_text(const std::string& field, const json& def, const std::string& text) {
  if (field == "policy.keep_k" || def.is_string()) return text;
  if (def.is_boolean()) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("--" + field + ": expected true or false, got '" + text + "'");
  }
  json v;
  try {
    v = json::parse(text);
  } catch (const json::parse_error&) {
    throw ConfigError("--" + field + ": expected " + type_name(def) + ", got '" + text + "'");
  }
  return v;
}

template <typename T>
void decode(const json& merged, const char* section, T& out) {
  try {
    from_json(merged.at(section), out);
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string(section) + ": " + e.what());
  } catch (const json::exception& e) {
    throw ConfigError(std::string(section) + ": " + e.what());
  }
}

}  // namespace

json default_config_json() {
  RunConfig d;
  return to_json(d);
}

json load_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
      if (text[i] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ConfigError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) +
                      ": syntax error: " + e.what());
  }
}

json merge_config(const json& doc) {
  json merged = default_config_json();
  if (!doc.is_object()) throw ConfigError("config: top level must be an object");
  for (const auto& [section, body] : doc.items()) {
    if (!merged.contains(section)) throw ConfigError("config: unknown section '" + section + "'");
    if (!body.is_object()) throw ConfigError(section + ": expected an object");
    for (const auto& [key, value] : body.items()) {
      const std::string field = section + "." + key;
      if (!merged[section].contains(key)) throw ConfigError(field + ": unknown field");
      const json& def = merged[section][key];
      if (auto err = type_error(field, def, value); !err.empty()) throw ConfigError(err);
      merged[section][key] = normalised(def, value);
    }
  }
  return merged;
}

void apply_override(json& merged, const std::string& dotted_key, const std::string& text) {
  const auto dot = dotted_key.find('.');
  if (dot == std::string::npos) throw ConfigError("--" + dotted_key + ": expected section.key");
  const std::string section = dotted_key.substr(0, dot);
  const std::string key = dotted_key.substr(dot + 1);
  if (!merged.contains(section) || !merged[section].contains(key))
    throw ConfigError("--" + dotted_key + ": unknown field");
  const json& def = merged[section][key];

  json value;
  if (def.is_array()) {
    if (!text.empty() && text.front() == '[') {
      try {
        value = json::parse(text);
      } catch (const json::parse_error&) {
        throw ConfigError("--" + dotted_key + ": malformed list '" + text + "'");
      }
    } else {
      value = json::array();
      std::stringstream ss(text);
      for (std::string item; std::getline(ss, item, ',');)
        value.push_back(scalar_from_text(dotted_key, def.empty() ? json("") : def.at(0), item));
    }
  } else {
    value = scalar_from_text(dotted_key, def, text);
  }
  if (auto err = type_error(dotted_key, def.is_array() && def.empty() ? value : def, value); !err.empty())
    throw ConfigError("--" + err);
  merged[section][key] = normalised(def, value);
}

RunConfig config_from_json(const json& merged) {
  RunConfig c;
  decode(merged, "policy", c.policy);
  decode(merged, "search", c.search);
  decode(merged, "sim", c.sim);
  decode(merged, "backend", c.backend);
  c.search.policy = c.policy;

  try {
    const json& s = merged.at("suite");
    c.suite.problems = s.at("problems").get<std::size_t>();
    c.suite.parallelism = s.at("parallelism").get<int>();
    c.suite.problems_file = s.at("problems_file").get<std::string>();
    const json& cmp = merged.at("compare");
    c.compare.methods = cmp.at("methods").get<std::vector<std::string>>();
    c.compare.widths = cmp.at("widths").get<std::vector<int>>();
    const json& sw = merged.at("sweep");
    c.sweep.lambda_b = sw.at("lambda_b").get<std::vector<double>>();
    c.sweep.tolerance_points = sw.at("tolerance_points").get<double>();
    c.sweep.baseline = sw.at("baseline").get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }

  try {
    c.search.validate();
    c.sim.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  if (c.suite.problems < 1) throw ConfigError("suite.problems: must be >= 1");
  if (c.suite.parallelism < 0) throw ConfigError("suite.parallelism: must be >= 0");
  for (int w : c.compare.widths)
    if (w < 1) throw ConfigError("compare.widths: every width must be >= 1");
  for (double l : c.sweep.lambda_b)
    if (!(l >= 0.0)) throw ConfigError("sweep.lambda_b: every value must be >= 0");
  if (!(c.sweep.tolerance_points >= 0.0)) throw ConfigError("sweep.tolerance_points: must be >= 0");
  return c;
}

json to_json(const RunConfig& c) {
  json policy = c.policy;
  json search = c.search;
  json sim = c.sim;
  json backend = c.backend;
  return {{"policy", policy},
          {"search", search},
          {"sim", sim},
          {"backend", backend},
          {"suite",
           {{"problems", c.suite.problems},
            {"parallelism", c.suite.parallelism},
            {"problems_file", c.suite.problems_file}}},
          {"compare", {{"methods", c.compare.methods}, {"widths", c.compare.widths}}},
          {"sweep",
           {{"lambda_b", c.sweep.lambda_b},
            {"tolerance_points", c.sweep.tolerance_points},
            {"baseline", c.sweep.baseline}}}};
}

}  // namespace ets
