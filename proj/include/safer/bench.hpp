#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "safer/agents.hpp"
#include "safer/judge.hpp"
#include "safer/trace.hpp"

// Suite runner and Table-I style metrics: AS (mean executed steps per task)
// and ASV (mean rule-judge violations per task), per configuration and scene.

namespace safer::bench {

enum class TaskType { Mono, Dual, Trio };
std::string to_string(TaskType t);
TaskType task_type_from_string(const std::string& s);
/// Robots a task of this type involves: 1, 2 or 3.
int robot_count(TaskType t);

struct TaskSpec {
  std::string id;
  std::string scene;  // path, resolved against the suite file
  std::string task;
  TaskType type = TaskType::Mono;
  std::vector<std::string> robots;            // robot ids the task uses
  std::string script;                          // shared by every config
  std::map<std::string, std::string> scripts;  // per-config override
};

struct ConfigSpec {
  std::string name;
  bool safety_planner = true;
  int max_rounds = 3;
  std::string backend;  // make_backend spec; empty = the task's script
};

enum class JudgeMode { Rule, Model, Both };
std::string to_string(JudgeMode m);
JudgeMode judge_mode_from_string(const std::string& s);

struct SuiteConfig {
  std::string name;
  std::string baseline;  // config the deltas are taken against; empty = none
  std::vector<ConfigSpec> configs;
  std::vector<TaskSpec> tasks;
  std::vector<long> seeds = {0};
  JudgeMode judge = JudgeMode::Rule;
  /// Tasks per scene by type, enforced when the suite declares it.
  std::optional<std::map<TaskType, int>> counts;

  static SuiteConfig from_json(const nlohmann::json& document, const std::string& base_dir = ".");
  static SuiteConfig load(const std::string& path);
  /// Checks ids, types against robot lists, counts, and that every scene and
  /// script exists. Throws SchemaError.
  void validate() const;
};

/// 2 mono, 3 dual, 3 trio.
std::map<TaskType, int> default_counts();

struct RunRecord {
  std::string config;
  std::string task_id;
  std::string scene;  // scene id
  TaskType type = TaskType::Mono;
  long seed = 0;
  std::string status;  // Completed, Failed or Aborted
  std::string reason;
  int steps = 0;       // executed instructions
  int violations = 0;  // rule judge count
  std::optional<int> model_violations;
  std::vector<double> call_latencies;
  agents::Accounting totals;  // over the trace's calls
  int calls = 0;
  agents::Accounting judge_accounting;  // model judge calls, kept apart
  std::string trace_file;

  nlohmann::json to_json() const;
  static RunRecord from_json(const nlohmann::json& j);
};

struct SceneRow {
  std::string config;
  std::string scene;
  int tasks = 0;
  double as = 0.0;
  double asv = 0.0;
  std::optional<double> delta_as;   // percent change against the baseline config
  std::optional<double> delta_asv;
  double latency_s = 0.0;  // mean per agent call
  double tokens = 0.0;     // mean per task, in + out
  double cost = 0.0;       // mean per task
};

struct Report {
  std::string suite;
  std::string baseline;
  std::vector<SceneRow> rows;  // config order, then scene order of first appearance
  agents::Accounting totals;
  int calls = 0;
};

/// Means over records grouped by (config, scene). Failed and aborted runs
/// count with their partial steps and violations.
Report aggregate(const std::vector<RunRecord>& records, const std::string& baseline = "",
                 const std::string& suite = "");

struct RunOptions {
  int jobs = 1;
  std::string out_dir;  // empty = keep nothing on disk
  std::optional<long> seed;  // replaces the suite's seed list
  std::optional<JudgeMode> judge;
  std::optional<int> max_rounds;
  std::string backend;  // replaces every config's backend when set
};

struct SuiteResult {
  std::vector<RunRecord> records;
  Report report;
};

/// Runs every (config, task, seed). A task that throws is recorded as
/// Aborted; the suite never stops early. Records come back in a fixed order
/// whatever the job count.
SuiteResult run_suite(const SuiteConfig& suite, const RunOptions& options = {});

/// Fixed column order: config,scene,tasks,AS,ASV,delta_AS,delta_ASV,latency_s,tokens,cost
std::string emit_csv(const Report& report);
nlohmann::json emit_json(const Report& report);
/// report.csv, report.json and records.jsonl under `dir`. Throws Error when
/// the directory is not writable.
void write_outputs(const SuiteResult& result, const std::string& dir);

// ---------------------------------------------------------------------------
// Published comparison values, shipped as a static fixture.

struct ReferenceRow {
  std::string model;
  std::string scene;
  double as = 0.0;
  double asv = 0.0;
};

/// CSV with header model,scene,AS,ASV.
std::vector<ReferenceRow> load_reference(const std::string& path);
/// Percent change of the scene-mean ASV from `from` to `to`.
double mean_asv_change(const std::vector<ReferenceRow>& rows, const std::string& from, const std::string& to);

}  // namespace safer::bench
