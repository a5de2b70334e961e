#include "ets/report.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "ets/errors.hpp"

namespace ets {

using nlohmann::json;

namespace {

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

const char* kSummaryHeader =
    "label,method,width,keep_k,lambda_b,lambda_d,problems,correct,accuracy,answered,errors,"
    "mean_cumulative_kv_tokens,mean_generated_tokens,mean_model_calls,solves_nonoptimal";

std::string summary_fields(const RunRow& r) {
  const auto& s = r.summary;
  std::ostringstream o;
  o << csv_field(r.label) << ',' << to_string(r.policy.method) << ',' << r.policy.width << ','
    << r.policy.keep_k.str() << ',' << num(r.policy.lambda_b) << ',' << num(r.policy.lambda_d) << ','
    << s.problems << ',' << s.correct << ',' << num(s.accuracy) << ',' << s.answered << ',' << s.errors
    << ',' << num(s.mean_cumulative_kv) << ',' << num(s.mean_generated_tokens) << ','
    << num(s.mean_model_calls) << ',' << s.totals.solves_nonoptimal;
  return o.str();
}

}  // namespace

std::string results_jsonl(const SuiteResult& suite) {
  std::string out;
  for (const auto& r : suite.results) {
    out += to_json(r).dump();
    out += '\n';
  }
  return out;
}

std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string summary_csv(std::span<const RunRow> rows) {
  std::string out = std::string(kSummaryHeader) + "\n";
  for (const auto& r : rows) out += summary_fields(r) + "\n";
  return out;
}

std::string compare_csv(std::span<const RunRow> rows, std::span<const std::string> method_order) {
  if (method_order.empty()) throw InvalidArgument("compare_csv: no methods");
  std::map<int, const RunRow*> reference;
  for (const auto& r : rows)
    if (r.label == method_order.front()) reference.emplace(r.policy.width, &r);

  std::string out = std::string(kSummaryHeader) + ",kv_reduction_vs_" + csv_field(method_order.front()) + "\n";
  for (const auto& r : rows) {
    auto ref = reference.find(r.policy.width);
    std::string red = "";
    if (ref != reference.end() && r.summary.totals.cumulative_kv_tokens > 0)
      red = num(kv_reduction(ref->second->summary.totals, r.summary.totals));
    out += summary_fields(r) + "," + red + "\n";
  }
  return out;
}

SweepSelection select_lambda_b(std::span<const SweepPoint> points, double baseline_accuracy,
                               double tolerance_points) {
  SweepSelection sel;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double delta = (baseline_accuracy - points[i].accuracy) * 100.0;
    sel.delta_points.push_back(delta);
    if (delta <= tolerance_points + 1e-9 &&
        (!sel.selected || points[i].lambda_b > points[*sel.selected].lambda_b))
      sel.selected = i;
  }
  return sel;
}

std::string sweep_csv(std::span<const SweepPoint> points, const SweepSelection& selection,
                      double baseline_accuracy, double baseline_kv) {
  std::string out = "lambda_b,accuracy,accuracy_delta_points,mean_cumulative_kv_tokens,kv_reduction,selected\n";
  out += "baseline," + num(baseline_accuracy) + "," + num(0.0) + "," + num(baseline_kv) + "," + num(1.0) + ",\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto& p = points[i];
    const std::string red = p.mean_cumulative_kv > 0 ? num(baseline_kv / p.mean_cumulative_kv) : "";
    out += num(p.lambda_b) + "," + num(p.accuracy) + "," + num(selection.delta_points[i]) + "," +
           num(p.mean_cumulative_kv) + "," + red + "," + (selection.selected == i ? "*" : "") + "\n";
  }
  return out;
}

json timing_document(const std::string& label, const SuiteResult& suite, double wall_seconds) {
  json per_problem = json::array();
  for (const auto& r : suite.results) per_problem.push_back(timing_json(r));
  json totals = timing_json(suite.summary.totals);
  return {{"label", label},
          {"wall_s", wall_seconds},
          {"overhead_fraction", overhead_fraction(suite.summary.totals)},
          {"totals", totals},
          {"problems", per_problem}};
}

JsonlSummary summarize_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument(path.string() + ": cannot open");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();

  JsonlSummary s;
  s.digest = sha256_hex(text);
  double kv = 0.0, gen = 0.0;
  std::istringstream lines(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(lines, line);) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json r = json::parse(line);
      ++s.problems;
      if (r.at("correct").is_boolean() && r.at("correct").get<bool>()) ++s.correct;
      if (r.at("answered").get<bool>()) ++s.answered;
      if (r.contains("error")) ++s.errors;
      kv += r.at("metrics").at("cumulative_kv_tokens").get<double>();
      gen += r.at("metrics").at("generated_tokens").get<double>();
    } catch (const json::exception& e) {
      throw InvalidArgument(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (s.problems > 0) {
    const double n = static_cast<double>(s.problems);
    s.accuracy = static_cast<double>(s.correct) / n;
    s.mean_cumulative_kv = kv / n;
    s.mean_generated_tokens = gen / n;
  }
  return s;
}

double summary_csv_value(const std::filesystem::path& path, const std::string& column) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument(path.string() + ": cannot open baseline");
  std::string header, row;
  if (!std::getline(in, header) || !std::getline(in, row))
    throw InvalidArgument(path.string() + ": baseline has no data row");
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string f; std::getline(ss, f, ',');) out.push_back(f);
    return out;
  };
  const auto names = split(header);
  const auto values = split(row);
  for (std::size_t i = 0; i < names.size() && i < values.size(); ++i) {
    if (names[i] != column) continue;
    try {
      return std::stod(values[i]);
    } catch (const std::exception&) {
      break;
    }
  }
  throw InvalidArgument(path.string() + ": baseline has no numeric " + column + " column");
}

void write_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(path.string() + ": cannot write");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

}  // namespace ets
