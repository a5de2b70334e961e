#include "ets/cli.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <thread>

#include "CLI11.hpp"
#include "ets/config.hpp"
#include "ets/errors.hpp"
#include "ets/report.hpp"
#include "ets/rng.hpp"

namespace ets {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

struct RunOptions {
  std::string config_path;
  std::string out_dir = "out";
  std::map<std::string, std::string> fields;  // "section.key" -> text
  std::map<std::string, CLI::Option*> field_opts;
  bool trace = false;
};

const std::vector<std::pair<std::string, std::string>> kShortcuts = {
    {"method", "policy.method"},         {"width", "policy.width"},
    {"lambda-b", "policy.lambda_b"},     {"lambda-d", "policy.lambda_d"},
    {"keep-k", "policy.keep_k"},         {"seed", "search.seed"},
    {"problems", "suite.problems"},      {"parallelism", "suite.parallelism"},
    {"backend", "search.backend"},       {"max-depth", "search.max_depth"},
};

void add_run_options(CLI::App* sub, RunOptions& o) {
  sub->add_option("--config", o.config_path, "JSON config file")->check(CLI::ExistingFile);
  sub->add_option("--out", o.out_dir, "Output directory")->capture_default_str();
  sub->add_flag("--trace", o.trace, "Record per-step traces in the JSONL");
  for (const auto& [flag, field] : kShortcuts)
    o.field_opts["~" + flag] = sub->add_option("--" + flag, o.fields["~" + flag], "Same as --" + field);
  const json defaults = default_config_json();
  for (const auto& [section, body] : defaults.items())
    for (const auto& [key, value] : body.items()) {
      const std::string dotted = section + "." + key;
      auto* opt = sub->add_option("--" + dotted, o.fields[dotted]);
      opt->group("Config fields");
      opt->description(value.is_array() ? "comma-separated list (default " + value.dump() + ")"
                                        : "default " + value.dump());
      o.field_opts[dotted] = opt;
    }
}

json merged_config(const RunOptions& o) {
  json merged = merge_config(o.config_path.empty() ? json::object() : load_config_file(o.config_path));
  for (const auto& [name, opt] : o.field_opts)
    if (name[0] != '~' && opt->count() > 0) apply_override(merged, name, o.fields.at(name));
  for (const auto& [flag, field] : kShortcuts)
    if (o.field_opts.at("~" + flag)->count() > 0) apply_override(merged, field, o.fields.at("~" + flag));
  if (o.trace) merged["search"]["trace"] = true;
  return merged;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

// Owns providers and the problem list for one configuration.
class Workspace {
 public:
  explicit Workspace(const RunConfig& cfg) : env_(std::make_unique<SimEnv>(cfg.sim)) {
    if (cfg.search.backend == BackendKind::sim) {
      sim_ = std::make_unique<SimBackend>(cfg.sim);
      providers_ = {sim_.get(), sim_.get(), sim_.get()};
    } else {
      http_ = std::make_unique<HttpBackend>(HttpBackendConfig::from_env(cfg.backend));
      providers_ = {http_.get(), http_.get(), http_.get()};
    }
    if (cfg.suite.problems_file.empty())
      problems_ = sim_problems(*env_, cfg.search.seed, cfg.suite.problems);
    else
      problems_ = load_problems(cfg.suite.problems_file, cfg);
  }

  const std::vector<Problem>& problems() const { return problems_; }
  const Providers& providers() const { return providers_; }

 private:
  static std::vector<Problem> load_problems(const fs::path& path, const RunConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw ConfigError("suite.problems_file: cannot open " + path.string());
    std::vector<Problem> out;
    std::size_t lineno = 0;
    for (std::string line; std::getline(in, line);) {
      ++lineno;
      if (trim(line).empty()) continue;
      try {
        const json j = json::parse(line);
        Problem p;
        p.id = j.value("id", std::to_string(out.size()));
        p.prompt = j.at("prompt").get<std::string>();
        p.prompt_tokens = j.value("prompt_tokens", std::int64_t{0});
        p.seed = derive_seed({cfg.search.seed, static_cast<std::uint64_t>(out.size())});
        if (j.contains("answer")) {
          std::string gold = trim(j.at("answer").get<std::string>());
          p.check = [gold](const std::string& a) { return trim(a) == gold; };
        }
        out.push_back(std::move(p));
      } catch (const json::exception& e) {
        throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
      }
    }
    if (out.empty()) throw ConfigError("suite.problems_file: no problems in " + path.string());
    return out;
  }

  std::unique_ptr<SimEnv> env_;
  std::unique_ptr<SimBackend> sim_;
  std::unique_ptr<HttpBackend> http_;
  Providers providers_;
  std::vector<Problem> problems_;
};

int parallelism_of(const RunConfig& cfg) {
  if (cfg.suite.parallelism > 0) return cfg.suite.parallelism;
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

struct Executed {
  SuiteResult suite;
  double wall_seconds = 0.0;
};

Executed execute(const RunConfig& cfg) {
  Workspace ws(cfg);
  const auto t0 = std::chrono::steady_clock::now();
  Executed e;
  e.suite = run_suite(ws.problems(), cfg.search, ws.providers(), parallelism_of(cfg));
  e.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return e;
}

std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-' || c == '_') ? c : '_';
  return out;
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void print_run(std::ostream& out, const std::string& label, const Executed& e, const fs::path& jsonl,
               const std::string& digest) {
  const auto& s = e.suite.summary;
  out << label << ": problems=" << s.problems << " accuracy=" << fixed(s.accuracy)
      << " mean_cumulative_kv=" << fixed(s.mean_cumulative_kv, 1) << " errors=" << s.errors
      << " overhead_fraction=" << fixed(overhead_fraction(s.totals)) << " wall_s=" << fixed(e.wall_seconds, 2)
      << "\n  " << jsonl.string() << " sha256:" << digest << "\n";
}

fs::path prepare_out(const std::string& dir) {
  fs::path p(dir);
  fs::create_directories(p);
  return p;
}

int cmd_run(const RunOptions& o, std::ostream& out) {
  const json merged = merged_config(o);
  const RunConfig cfg = config_from_json(merged);
  const fs::path dir = prepare_out(o.out_dir);
  const Executed e = execute(cfg);

  const std::string label = to_string(cfg.policy.method);
  const std::string body = results_jsonl(e.suite);
  const std::string digest = sha256_hex(body);
  write_file(dir / "results.jsonl", body);
  const RunRow row{label, cfg.policy, e.suite.summary};
  write_file(dir / "summary.csv", summary_csv(std::span(&row, 1)));
  write_file(dir / "config.json", to_json(cfg).dump(2) + "\n");
  write_file(dir / "timing.json", timing_document(label, e.suite, e.wall_seconds).dump(2) + "\n");
  print_run(out, label, e, dir / "results.jsonl", digest);
  return e.suite.summary.errors > 0 ? kRuntime : kOk;
}

int cmd_compare(const RunOptions& o, std::ostream& out) {
  const json merged = merged_config(o);
  const RunConfig base = config_from_json(merged);
  const auto& methods = base.compare.methods;
  if (methods.size() < 2) throw ConfigError("compare.methods: at least two methods are required");
  std::vector<json> method_docs;
  for (const auto& m : methods) {
    json doc = apply_method_spec(merged, m);
    config_from_json(doc);
    method_docs.push_back(std::move(doc));
  }

  const fs::path dir = prepare_out(o.out_dir);
  std::vector<RunRow> rows;
  json timing = json::array();
  bool errors = false;
  for (int width : base.compare.widths) {
    for (std::size_t i = 0; i < methods.size(); ++i) {
      json doc = method_docs[i];
      doc["policy"]["width"] = width;
      const RunConfig cfg = config_from_json(doc);
      const Executed e = execute(cfg);
      const std::string body = results_jsonl(e.suite);
      const fs::path file = dir / ("results-" + safe_name(methods[i]) + "-w" + std::to_string(width) + ".jsonl");
      write_file(file, body);
      print_run(out, methods[i] + " w=" + std::to_string(width), e, file, sha256_hex(body));
      timing.push_back(timing_document(methods[i] + " w=" + std::to_string(width), e.suite, e.wall_seconds));
      rows.push_back({methods[i], cfg.policy, e.suite.summary});
      errors = errors || e.suite.summary.errors > 0;
    }
  }
  const std::string csv = compare_csv(rows, methods);
  write_file(dir / "compare.csv", csv);
  write_file(dir / "config.json", merged.dump(2) + "\n");
  write_file(dir / "timing.json", timing.dump(2) + "\n");
  out << "\n" << csv;
  return errors ? kRuntime : kOk;
}

int cmd_sweep(const RunOptions& o, std::ostream& out, std::ostream& err) {
  const json merged = merged_config(o);
  const RunConfig base = config_from_json(merged);
  if (base.sweep.lambda_b.empty()) throw ConfigError("sweep.lambda_b: grid is empty");

  double baseline_acc = 0.0, baseline_kv = 0.0;
  std::optional<Executed> baseline_run;
  if (base.sweep.baseline != "lambda_b=0") {
    const fs::path p(base.sweep.baseline);
    if (base.sweep.baseline.empty() || !fs::exists(p))
      throw ConfigError("sweep.baseline: missing baseline '" + base.sweep.baseline + "'");
    try {
      baseline_acc = summary_csv_value(p, "accuracy");
      baseline_kv = summary_csv_value(p, "mean_cumulative_kv_tokens");
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("sweep.baseline: ") + e.what());
    }
  }

  const fs::path dir = prepare_out(o.out_dir);
  json timing = json::array();
  bool errors = false;
  if (base.sweep.baseline == "lambda_b=0") {
    RunConfig cfg = base;
    cfg.policy.lambda_b = 0.0;
    cfg.search.policy = cfg.policy;
    const Executed e = execute(cfg);
    const std::string body = results_jsonl(e.suite);
    write_file(dir / "results-baseline.jsonl", body);
    print_run(out, "baseline lambda_b=0", e, dir / "results-baseline.jsonl", sha256_hex(body));
    timing.push_back(timing_document("baseline", e.suite, e.wall_seconds));
    baseline_acc = e.suite.summary.accuracy;
    baseline_kv = e.suite.summary.mean_cumulative_kv;
    errors = e.suite.summary.errors > 0;
  }

  std::vector<SweepPoint> points;
  for (double lb : base.sweep.lambda_b) {
    RunConfig cfg = base;
    cfg.policy.lambda_b = lb;
    cfg.search.policy = cfg.policy;
    const Executed e = execute(cfg);
    const std::string label = "lambda_b=" + fixed(lb, 3);
    const std::string body = results_jsonl(e.suite);
    const fs::path file = dir / ("results-lambda_b-" + fixed(lb, 3) + ".jsonl");
    write_file(file, body);
    print_run(out, label, e, file, sha256_hex(body));
    timing.push_back(timing_document(label, e.suite, e.wall_seconds));
    points.push_back({lb, e.suite.summary.accuracy, e.suite.summary.mean_cumulative_kv});
    errors = errors || e.suite.summary.errors > 0;
  }

  const SweepSelection sel = select_lambda_b(points, baseline_acc, base.sweep.tolerance_points);
  const std::string csv = sweep_csv(points, sel, baseline_acc, baseline_kv);
  write_file(dir / "sweep.csv", csv);
  write_file(dir / "config.json", merged.dump(2) + "\n");
  write_file(dir / "timing.json", timing.dump(2) + "\n");
  out << "\n" << csv;
  if (sel.selected) {
    out << "selected lambda_b: " << fixed(points[*sel.selected].lambda_b, 3) << "\n";
  } else {
    out << "selected lambda_b: none\n";
    err << "warning: every lambda_b degrades accuracy by more than " << base.sweep.tolerance_points
        << " points\n";
  }
  return errors ? kRuntime : kOk;
}

int cmd_report(const std::string& in_dir, std::ostream& out) {
  const fs::path dir(in_dir);
  if (!fs::is_directory(dir)) throw ConfigError("report: not a directory: " + in_dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".jsonl") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ConfigError("report: no .jsonl files in " + in_dir);

  std::vector<JsonlSummary> sums;
  for (const auto& f : files) sums.push_back(summarize_jsonl(f));
  std::string csv =
      "file,problems,correct,accuracy,answered,errors,mean_cumulative_kv_tokens,mean_generated_tokens,"
      "kv_reduction_vs_first,sha256\n";
  out << "| file | problems | accuracy | mean cumulative KV | KV reduction | errors |\n"
      << "|---|---|---|---|---|---|\n";
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto& s = sums[i];
    const std::string red = s.mean_cumulative_kv > 0 ? fixed(sums[0].mean_cumulative_kv / s.mean_cumulative_kv, 6) : "";
    csv += files[i].filename().string() + "," + std::to_string(s.problems) + "," + std::to_string(s.correct) +
           "," + fixed(s.accuracy, 6) + "," + std::to_string(s.answered) + "," + std::to_string(s.errors) + "," +
           fixed(s.mean_cumulative_kv, 6) + "," + fixed(s.mean_generated_tokens, 6) + "," + red + "," +
           s.digest + "\n";
    out << "| " << files[i].filename().string() << " | " << s.problems << " | " << fixed(s.accuracy) << " | "
        << fixed(s.mean_cumulative_kv, 1) << " | " << red << " | " << s.errors << " |\n";
  }
  write_file(dir / "report.csv", csv);

  const fs::path timing = dir / "timing.json";
  if (fs::exists(timing)) {
    std::ifstream in(timing);
    const json t = json::parse(in, nullptr, false);
    auto show = [&](const json& doc) {
      if (doc.is_object() && doc.contains("overhead_fraction"))
        out << "overhead_fraction " << doc.value("label", "") << ": "
            << fixed(doc["overhead_fraction"].get<double>()) << "\n";
    };
    if (t.is_array())
      for (const auto& d : t) show(d);
    else
      show(t);
  }
  return kOk;
}

int cmd_serve_mock(const std::string& config_path, int port, double duration_s, std::ostream& out) {
  const json merged = merge_config(config_path.empty() ? json::object() : load_config_file(config_path));
  const RunConfig cfg = config_from_json(merged);
  MockServer server(cfg.sim);
  server.start(port);
  out << "mock backend listening on " << server.base_url() << std::endl;
  const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(duration_s);
  while (duration_s <= 0 || std::chrono::steady_clock::now() < until)
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  return kOk;
}

}  // namespace

json apply_method_spec(json merged, const std::string& spec) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  for (std::size_t pos; (pos = spec.find(':', start)) != std::string::npos; start = pos + 1)
    parts.push_back(spec.substr(start, pos - start));
  parts.push_back(spec.substr(start));
  apply_override(merged, "policy.method", parts.front());
  for (std::size_t i = 1; i < parts.size(); ++i) {
    const auto eq = parts[i].find('=');
    if (eq == std::string::npos) throw ConfigError("method '" + spec + "': expected key=value after ':'");
    apply_override(merged, "policy." + parts[i].substr(0, eq), parts[i].substr(eq + 1));
  }
  return merged;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Tree search runner for reward-guided reasoning"};
  app.name("ets");
  app.require_subcommand(1);

  RunOptions run_opts, compare_opts, sweep_opts;
  auto* run = app.add_subcommand("run", "Run one suite");
  add_run_options(run, run_opts);
  auto* compare = app.add_subcommand("compare", "Run several methods and widths");
  add_run_options(compare, compare_opts);
  auto* sweep = app.add_subcommand("sweep", "Sweep lambda_b against a baseline");
  add_run_options(sweep, sweep_opts);

  std::string report_in;
  auto* report = app.add_subcommand("report", "Summarise JSONL results in a directory");
  report->add_option("--in", report_in, "Directory with results JSONL")->required();

  std::string mock_config;
  int mock_port = 8000;
  double mock_duration = 0.0;
  auto* mock = app.add_subcommand("serve-mock", "Serve the simulator over HTTP");
  mock->add_option("--config", mock_config, "JSON config file (sim section)")->check(CLI::ExistingFile);
  mock->add_option("--port", mock_port, "Port on 127.0.0.1 (0 picks one)")->capture_default_str();
  mock->add_option("--duration-s", mock_duration, "Stop after this many seconds (0 runs until killed)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (run->parsed()) return cmd_run(run_opts, out);
    if (compare->parsed()) return cmd_compare(compare_opts, out);
    if (sweep->parsed()) return cmd_sweep(sweep_opts, out, err);
    if (report->parsed()) return cmd_report(report_in, out);
    if (mock->parsed()) return cmd_serve_mock(mock_config, mock_port, mock_duration, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const InvalidArgument& e) {
    err << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

}  // namespace ets
