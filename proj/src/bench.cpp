#include "safer/bench.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "safer/error.hpp"
#include "safer/orchestrator.hpp"

namespace safer::bench {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string resolve_path(const std::string& base, const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  return (fs::path(base) / p).lexically_normal().string();
}

std::string safe_name(std::string s) {
  for (auto& c : s) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_') c = '_';
  }
  return s;
}

const std::string& script_for(const TaskSpec& t, const std::string& config) {
  const auto it = t.scripts.find(config);
  return it != t.scripts.end() ? it->second : t.script;
}

json accounting_json(const agents::Accounting& a) { return trace::to_json(a); }

agents::Accounting accounting_from(const json& j) {
  agents::Accounting a;
  a.latency_s = j.at("latency_s").get<double>();
  a.tokens_in = j.at("tokens_in").get<long>();
  a.tokens_out = j.at("tokens_out").get<long>();
  a.cost = j.at("cost").get<double>();
  return a;
}

}  // namespace

std::string to_string(TaskType t) {
  switch (t) {
    case TaskType::Mono: return "mono";
    case TaskType::Dual: return "dual";
    case TaskType::Trio: return "trio";
  }
  return "?";
}

TaskType task_type_from_string(const std::string& s) {
  if (s == "mono") return TaskType::Mono;
  if (s == "dual") return TaskType::Dual;
  if (s == "trio") return TaskType::Trio;
  throw SchemaError("unknown task type '" + s + "' (mono, dual or trio)");
}

int robot_count(TaskType t) { return t == TaskType::Mono ? 1 : t == TaskType::Dual ? 2 : 3; }

std::string to_string(JudgeMode m) {
  switch (m) {
    case JudgeMode::Rule: return "rule";
    case JudgeMode::Model: return "model";
    case JudgeMode::Both: return "both";
  }
  return "?";
}

JudgeMode judge_mode_from_string(const std::string& s) {
  if (s == "rule") return JudgeMode::Rule;
  if (s == "model") return JudgeMode::Model;
  if (s == "both") return JudgeMode::Both;
  throw SchemaError("unknown judge mode '" + s + "' (rule, model or both)");
}

std::map<TaskType, int> default_counts() { return {{TaskType::Mono, 2}, {TaskType::Dual, 3}, {TaskType::Trio, 3}}; }

SuiteConfig SuiteConfig::from_json(const json& doc, const std::string& base_dir) {
  try {
    if (doc.value("schema_version", 0) != 1) throw SchemaError("unsupported suite schema_version");
    SuiteConfig s;
    s.name = doc.value("name", "suite");
    s.baseline = doc.value("baseline", "");
    for (const auto& c : doc.at("configs")) {
      ConfigSpec cs;
      cs.name = c.at("name").get<std::string>();
      cs.safety_planner = c.value("safety_planner", true);
      cs.max_rounds = c.value("max_rounds", 3);
      cs.backend = c.value("backend", "");
      s.configs.push_back(cs);
    }
    for (const auto& t : doc.at("tasks")) {
      TaskSpec ts;
      ts.id = t.at("id").get<std::string>();
      ts.scene = resolve_path(base_dir, t.at("scene").get<std::string>());
      ts.task = t.at("task").get<std::string>();
      ts.type = task_type_from_string(t.at("type").get<std::string>());
      ts.robots = t.at("robots").get<std::vector<std::string>>();
      ts.script = resolve_path(base_dir, t.value("script", ""));
      const json scripts = t.value("scripts", json::object());
      for (const auto& [config, path] : scripts.items()) {
        ts.scripts[config] = resolve_path(base_dir, path.get<std::string>());
      }
      s.tasks.push_back(ts);
    }
    if (doc.contains("seeds")) s.seeds = doc.at("seeds").get<std::vector<long>>();
    s.judge = judge_mode_from_string(doc.value("judge", "rule"));
    if (doc.contains("counts")) {
      std::map<TaskType, int> counts;
      for (const auto& [type, n] : doc.at("counts").items()) counts[task_type_from_string(type)] = n.get<int>();
      s.counts = counts;
    }
    return s;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("suite: ") + e.what());
  }
}

SuiteConfig SuiteConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open suite '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError("suite '" + path + "': " + e.what());
  }
  return from_json(doc, fs::path(path).parent_path().string());
}

void SuiteConfig::validate() const {
  std::set<std::string> names;
  for (const auto& c : configs) {
    if (c.name.empty() || !names.insert(c.name).second) throw SchemaError("config names must be unique and non-empty");
    if (c.max_rounds < 1) throw SchemaError("config '" + c.name + "': max_rounds must be at least 1");
  }
  if (!baseline.empty() && !names.count(baseline)) throw SchemaError("baseline '" + baseline + "' is not a config");
  if (seeds.empty()) throw SchemaError("suite needs at least one seed");
  std::set<std::string> ids;
  std::map<std::string, std::map<TaskType, int>> per_scene;
  for (const auto& t : tasks) {
    if (t.id.empty() || !ids.insert(t.id).second) throw SchemaError("task ids must be unique and non-empty");
    if (static_cast<int>(t.robots.size()) != robot_count(t.type)) {
      throw SchemaError("task '" + t.id + "' is " + to_string(t.type) + " but lists " + std::to_string(t.robots.size()) +
                        " robot(s)");
    }
    if (!fs::exists(t.scene)) throw SchemaError("task '" + t.id + "': scene '" + t.scene + "' not found");
    const auto w = world::load_scene_file(t.scene);
    for (const auto& r : t.robots) {
      if (!w.find_robot(r)) throw SchemaError("task '" + t.id + "': scene has no robot '" + r + "'");
    }
    for (const auto& c : configs) {
      if (!c.backend.empty()) continue;
      const auto& script = script_for(t, c.name);
      if (script.empty()) throw SchemaError("task '" + t.id + "' has no script for config '" + c.name + "'");
      if (!fs::exists(script)) throw SchemaError("task '" + t.id + "': script '" + script + "' not found");
    }
    ++per_scene[w.scene_id][t.type];
  }
  if (counts) {
    for (const auto& [scene, got] : per_scene) {
      for (const auto& [type, want] : *counts) {
        const int n = got.count(type) ? got.at(type) : 0;
        if (n != want) {
          throw SchemaError("scene '" + scene + "' has " + std::to_string(n) + " " + to_string(type) + " task(s), suite declares " +
                            std::to_string(want));
        }
      }
    }
  }
}

json RunRecord::to_json() const {
  json j = {{"config", config},
            {"task_id", task_id},
            {"scene", scene},
            {"type", bench::to_string(type)},
            {"seed", seed},
            {"status", status},
            {"reason", reason},
            {"steps", steps},
            {"violations", violations},
            {"model_violations", model_violations ? json(*model_violations) : json(nullptr)},
            {"call_latencies", call_latencies},
            {"totals", accounting_json(totals)},
            {"calls", calls},
            {"judge_accounting", accounting_json(judge_accounting)},
            {"trace_file", trace_file}};
  return j;
}

RunRecord RunRecord::from_json(const json& j) {
  try {
    RunRecord r;
    r.config = j.at("config").get<std::string>();
    r.task_id = j.at("task_id").get<std::string>();
    r.scene = j.at("scene").get<std::string>();
    r.type = task_type_from_string(j.at("type").get<std::string>());
    r.seed = j.at("seed").get<long>();
    r.status = j.at("status").get<std::string>();
    r.reason = j.value("reason", "");
    r.steps = j.at("steps").get<int>();
    r.violations = j.at("violations").get<int>();
    if (!j.at("model_violations").is_null()) r.model_violations = j.at("model_violations").get<int>();
    r.call_latencies = j.at("call_latencies").get<std::vector<double>>();
    r.totals = accounting_from(j.at("totals"));
    r.calls = j.at("calls").get<int>();
    r.judge_accounting = accounting_from(j.at("judge_accounting"));
    r.trace_file = j.value("trace_file", "");
    if (r.steps < 0 || r.violations < 0) throw SchemaError("record counts must be non-negative");
    return r;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("run record: ") + e.what());
  }
}

Report aggregate(const std::vector<RunRecord>& records, const std::string& baseline, const std::string& suite) {
  Report rep;
  rep.suite = suite;
  rep.baseline = baseline;
  std::vector<std::string> configs;
  std::vector<std::string> scenes;
  for (const auto& r : records) {
    if (std::find(configs.begin(), configs.end(), r.config) == configs.end()) configs.push_back(r.config);
    if (std::find(scenes.begin(), scenes.end(), r.scene) == scenes.end()) scenes.push_back(r.scene);
    rep.totals += r.totals;
    rep.calls += r.calls;
  }
  for (const auto& c : configs) {
    for (const auto& s : scenes) {
      SceneRow row;
      row.config = c;
      row.scene = s;
      double steps = 0.0;
      double violations = 0.0;
      double latency = 0.0;
      long n_calls = 0;
      double tokens = 0.0;
      double cost = 0.0;
      for (const auto& r : records) {
        if (r.config != c || r.scene != s) continue;
        ++row.tasks;
        steps += r.steps;
        violations += r.violations;
        for (double l : r.call_latencies) latency += l;
        n_calls += static_cast<long>(r.call_latencies.size());
        tokens += static_cast<double>(r.totals.tokens_in + r.totals.tokens_out);
        cost += r.totals.cost;
      }
      if (row.tasks == 0) continue;
      row.as = steps / row.tasks;
      row.asv = violations / row.tasks;
      row.latency_s = n_calls ? latency / n_calls : 0.0;
      row.tokens = tokens / row.tasks;
      row.cost = cost / row.tasks;
      rep.rows.push_back(row);
    }
  }
  if (!baseline.empty()) {
    for (auto& row : rep.rows) {
      if (row.config == baseline) continue;
      for (const auto& base : rep.rows) {
        if (base.config != baseline || base.scene != row.scene) continue;
        if (base.as != 0.0) row.delta_as = 100.0 * (row.as - base.as) / base.as;
        if (base.asv != 0.0) row.delta_asv = 100.0 * (row.asv - base.asv) / base.asv;
      }
    }
  }
  return rep;
}

SuiteResult run_suite(const SuiteConfig& suite, const RunOptions& options) {
  suite.validate();
  struct Job {
    const ConfigSpec* config;
    const TaskSpec* task;
    long seed;
  };
  std::vector<Job> jobs;
  const std::vector<long> seeds = options.seed ? std::vector<long>{*options.seed} : suite.seeds;
  for (const auto& c : suite.configs) {
    for (const auto& t : suite.tasks) {
      for (long seed : seeds) jobs.push_back({&c, &t, seed});
    }
  }
  const JudgeMode mode = options.judge.value_or(suite.judge);
  if (!options.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(fs::path(options.out_dir) / "traces", ec);
    if (ec) throw Error("cannot create output directory '" + options.out_dir + "': " + ec.message());
  }

  std::vector<RunRecord> records(jobs.size());
  auto run_one = [&](std::size_t k) {
    const Job& job = jobs[k];
    RunRecord& rec = records[k];
    rec.config = job.config->name;
    rec.task_id = job.task->id;
    rec.type = job.task->type;
    rec.seed = job.seed;
    try {
      const auto w = world::load_scene_file(job.task->scene);
      rec.scene = w.scene_id;
      const std::string spec = !options.backend.empty()  ? options.backend
                               : !job.config->backend.empty() ? job.config->backend
                                                              : "scripted:" + script_for(*job.task, job.config->name);
      const auto backend = agents::make_backend(spec, job.seed);
      orchestrator::OrchestratorConfig oc;
      oc.safety_planner = job.config->safety_planner;
      oc.max_rounds = options.max_rounds.value_or(job.config->max_rounds);
      const auto tr = orchestrator::run_task(job.task->id, job.task->task, w, orchestrator::Agents::all(*backend), oc);
      rec.status = trace::to_string(*tr.status);
      rec.reason = tr.reason;
      rec.steps = tr.steps_executed;
      for (const auto& c : tr.calls) rec.call_latencies.push_back(c.accounting.latency_s);
      rec.calls = static_cast<int>(tr.calls.size());
      rec.totals = tr.totals();

      const std::string stem = safe_name(rec.config) + "__" + safe_name(rec.task_id) + "__s" + std::to_string(job.seed);
      judge::JudgeReport rule;
      if (mode != JudgeMode::Model) {
        rule = judge::rule_judge(tr);
        rec.violations = rule.count();
      }
      std::optional<judge::JudgeReport> model;
      if (mode != JudgeMode::Rule) {
        model = judge::llm_judge(tr.effective_plan(), judge::summarize(tr), *backend, tr.task_id);
        rec.model_violations = model->count();
        rec.judge_accounting = model->accounting;
        if (mode == JudgeMode::Model) rec.violations = model->count();
      }
      if (!options.out_dir.empty()) {
        rec.trace_file = "traces/" + stem + ".jsonl";
        trace::save(tr, (fs::path(options.out_dir) / rec.trace_file).string());
        json reports = json::object();
        if (mode != JudgeMode::Model) reports["rule"] = judge::to_json(rule);
        if (model) reports["model"] = judge::to_json(*model);
        std::ofstream((fs::path(options.out_dir) / "traces" / (stem + ".judge.json")).string()) << reports.dump(2) << '\n';
      }
    } catch (const std::exception& e) {
      rec.status = trace::to_string(trace::Status::Aborted);
      rec.reason = e.what();
    }
  };

  const int workers = std::max(1, std::min<int>(options.jobs, static_cast<int>(jobs.size())));
  if (workers <= 1) {
    for (std::size_t k = 0; k < jobs.size(); ++k) run_one(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < jobs.size(); k = next++) run_one(k);
      });
    }
    for (auto& t : pool) t.join();
  }

  SuiteResult out;
  out.records = std::move(records);
  out.report = aggregate(out.records, suite.baseline, suite.name);
  if (!options.out_dir.empty()) write_outputs(out, options.out_dir);
  return out;
}

std::string emit_csv(const Report& report) {
  std::ostringstream out;
  out << "config,scene,tasks,AS,ASV,delta_AS,delta_ASV,latency_s,tokens,cost\n";
  for (const auto& r : report.rows) {
    out << r.config << ',' << r.scene << ',' << r.tasks << ',' << fixed(r.as, 4) << ',' << fixed(r.asv, 4) << ','
        << (r.delta_as ? fixed(*r.delta_as, 2) : "") << ',' << (r.delta_asv ? fixed(*r.delta_asv, 2) : "") << ','
        << fixed(r.latency_s, 4) << ',' << fixed(r.tokens, 1) << ',' << fixed(r.cost, 6) << '\n';
  }
  return out.str();
}

json emit_json(const Report& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"config", r.config},
                    {"scene", r.scene},
                    {"tasks", r.tasks},
                    {"AS", r.as},
                    {"ASV", r.asv},
                    {"delta_AS", r.delta_as ? json(*r.delta_as) : json(nullptr)},
                    {"delta_ASV", r.delta_asv ? json(*r.delta_asv) : json(nullptr)},
                    {"latency_s", r.latency_s},
                    {"tokens", r.tokens},
                    {"cost", r.cost}});
  }
  return {{"suite", report.suite},
          {"baseline", report.baseline},
          {"rows", rows},
          {"calls", report.calls},
          {"totals", accounting_json(report.totals)}};
}

void write_outputs(const SuiteResult& result, const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  auto write = [&](const std::string& name, const std::string& text) {
    const auto path = (fs::path(dir) / name).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write '" + path + "'");
    out << text;
    if (!out) throw Error("failed writing '" + path + "'");
  };
  write("report.csv", emit_csv(result.report));
  write("report.json", emit_json(result.report).dump(2) + "\n");
  std::string lines;
  for (const auto& r : result.records) lines += r.to_json().dump() + "\n";
  write("records.jsonl", lines);
}

std::vector<ReferenceRow> load_reference(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open reference table '" + path + "'");
  std::string line;
  std::getline(in, line);
  if (line != "model,scene,AS,ASV") throw SchemaError("reference table header must be 'model,scene,AS,ASV'");
  std::vector<ReferenceRow> rows;
  std::size_t n = 1;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string model, scene, as, asv;
    if (!std::getline(ss, model, ',') || !std::getline(ss, scene, ',') || !std::getline(ss, as, ',') ||
        !std::getline(ss, asv)) {
      throw SchemaError("reference table line " + std::to_string(n) + " needs 4 fields");
    }
    try {
      rows.push_back({model, scene, std::stod(as), std::stod(asv)});
    } catch (const std::exception&) {
      throw SchemaError("reference table line " + std::to_string(n) + " has a non-numeric value");
    }
  }
  return rows;
}

double mean_asv_change(const std::vector<ReferenceRow>& rows, const std::string& from, const std::string& to) {
  double a = 0.0, b = 0.0;
  int na = 0, nb = 0;
  for (const auto& r : rows) {
    if (r.model == from) {
      a += r.asv;
      ++na;
    }
    if (r.model == to) {
      b += r.asv;
      ++nb;
    }
  }
  if (!na || !nb) throw Error("reference table lacks model '" + (na ? to : from) + "'");
  return 100.0 * (b / nb - a / na) / (a / na);
}

}  // namespace safer::bench
