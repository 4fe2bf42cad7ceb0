// safer: run one task, a benchmark suite, the judges, the CBF sim, or a replay check.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "safer/agents.hpp"
#include "safer/bench.hpp"
#include "safer/control.hpp"
#include "safer/error.hpp"
#include "safer/judge.hpp"
#include "safer/orchestrator.hpp"
#include "safer/plan.hpp"
#include "safer/trace.hpp"
#include "safer/world.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace safer;

namespace {

constexpr int kOk = 0;
constexpr int kFail = 1;
constexpr int kConfig = 2;

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("cannot open '" + path + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create '" + dir + "': " + ec.message());
}

// "1,2,0.5" -> numbers
std::vector<double> numbers(const std::string& text, std::size_t n, const std::string& what) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw SchemaError(what + ": '" + text + "' is not a number list");
    }
  }
  if (out.size() != n) throw SchemaError(what + " takes " + std::to_string(n) + " comma-separated values");
  return out;
}

std::string task_text(const std::string& arg) {
  if (fs::is_regular_file(arg)) {
    auto t = read_text(arg);
    while (!t.empty() && (t.back() == '\n' || t.back() == '\r')) t.pop_back();
    return t;
  }
  return arg;
}

json judge_reports(const trace::Trace& tr, bench::JudgeMode mode, agents::AgentBackend* backend) {
  json out = json::object();
  if (mode != bench::JudgeMode::Model) out["rule"] = judge::to_json(judge::rule_judge(tr));
  if (mode != bench::JudgeMode::Rule) {
    if (!backend) throw SchemaError("model judge needs --backend");
    out["model"] = judge::to_json(judge::llm_judge(tr.effective_plan(), judge::summarize(tr), *backend, tr.task_id));
  }
  return out;
}

void print_report(const json& reports) {
  for (const auto& [kind, rep] : reports.items()) {
    const auto r = judge::report_from_json(rep);
    std::printf("%s judge: %d violation(s)\n", kind.c_str(), r.count());
    for (const auto& v : r.violations) {
      std::printf("  [%d %s] %s%s\n", v.criterion, judge::criterion(v.criterion).name.c_str(),
                  v.step ? ("step " + std::to_string(*v.step + 1) + ": ").c_str() : "", v.detail.c_str());
    }
  }
}

struct RunArgs {
  std::string scene, task, backend, out;
  std::optional<long> seed;
  int max_rounds = 3;
  std::string judge = "rule";
  bool no_safety = false;
  std::string task_id = "task";
};

int cmd_run(const RunArgs& a) {
  const auto w = world::load_scene_file(a.scene);
  const auto mode = bench::judge_mode_from_string(a.judge);
  const auto backend = agents::make_backend(a.backend, a.seed);
  orchestrator::OrchestratorConfig oc;
  oc.max_rounds = a.max_rounds;
  oc.safety_planner = !a.no_safety;
  const auto tr = orchestrator::run_task(a.task_id, task_text(a.task), w, orchestrator::Agents::all(*backend), oc);
  const auto reports = judge_reports(tr, mode, backend.get());

  std::printf("status: %s\n", trace::to_string(*tr.status).c_str());
  if (!tr.reason.empty()) std::printf("reason: %s\n", tr.reason.c_str());
  std::printf("steps: %d\ncalls: %zu\n", tr.steps_executed, tr.calls.size());
  print_report(reports);

  if (!a.out.empty()) {
    make_dir(a.out);
    const fs::path dir(a.out);
    trace::save(tr, (dir / "trace.jsonl").string());
    write_text(dir / "trace.judge.json", reports.dump(2) + "\n");
    bench::RunRecord rec;
    rec.config = a.no_safety ? "safety_off" : "safety_on";
    rec.task_id = tr.task_id;
    rec.scene = w.scene_id;
    rec.seed = a.seed.value_or(0);
    rec.status = trace::to_string(*tr.status);
    rec.reason = tr.reason;
    rec.steps = tr.steps_executed;
    if (reports.contains("rule")) rec.violations = static_cast<int>(reports["rule"]["violations"].size());
    if (reports.contains("model")) {
      rec.model_violations = static_cast<int>(reports["model"]["violations"].size());
      if (!reports.contains("rule")) rec.violations = *rec.model_violations;
    }
    for (const auto& c : tr.calls) rec.call_latencies.push_back(c.accounting.latency_s);
    rec.calls = static_cast<int>(tr.calls.size());
    rec.totals = tr.totals();
    rec.trace_file = "trace.jsonl";
    write_text(dir / "record.json", rec.to_json().dump(2) + "\n");
  }
  return *tr.status == trace::Status::Completed ? kOk : kFail;
}

struct BenchArgs {
  std::string suite, out, judge, backend;
  int jobs = 1;
  std::optional<long> seed;
  std::optional<int> max_rounds;
};

int cmd_bench(const BenchArgs& a) {
  const auto suite = bench::SuiteConfig::load(a.suite);
  suite.validate();
  bench::RunOptions opt;
  opt.jobs = a.jobs;
  opt.out_dir = a.out;
  opt.seed = a.seed;
  opt.max_rounds = a.max_rounds;
  opt.backend = a.backend;
  if (!a.judge.empty()) opt.judge = bench::judge_mode_from_string(a.judge);
  const auto result = bench::run_suite(suite, opt);
  std::cout << bench::emit_csv(result.report);
  int aborted = 0;
  for (const auto& r : result.records) {
    if (r.status == "Aborted") {
      ++aborted;
      std::fprintf(stderr, "aborted: %s/%s: %s\n", r.config.c_str(), r.task_id.c_str(), r.reason.c_str());
    }
  }
  return aborted ? kFail : kOk;
}

struct JudgeArgs {
  std::string trace, judge = "rule", backend, out;
};

int cmd_judge(const JudgeArgs& a) {
  const auto tr = trace::load(a.trace);
  const auto mode = bench::judge_mode_from_string(a.judge);
  std::unique_ptr<agents::AgentBackend> backend;
  if (!a.backend.empty()) backend = agents::make_backend(a.backend);
  const auto reports = judge_reports(tr, mode, backend.get());
  print_report(reports);
  if (!a.out.empty()) write_text(a.out, reports.dump(2) + "\n");
  if (reports.contains("rule") && reports.contains("model")) {
    const auto cm = judge::agreement(judge::report_from_json(reports["rule"]), judge::report_from_json(reports["model"]));
    int agree = 0;
    for (const auto& c : cm) agree += c.tp + c.tn;
    std::printf("agreement: %d/%d criteria\n", agree, judge::kCriteria);
  }
  return kOk;
}

struct SimArgs {
  std::string scene, robot, policy = "goal", goal, ee_goal, out;
  std::vector<std::string> constraints;
  double duration = 10.0;
  double dt = 0.01;
  bool no_intrinsic = false;
};

int cmd_sim(const SimArgs& a) {
  const auto w = world::load_scene_file(a.scene);
  if (!w.find_robot(a.robot)) throw SchemaError("scene has no robot '" + a.robot + "'");
  control::SimSpec spec;
  spec.robot = a.robot;
  spec.policy = control::policy_from_string(a.policy);
  spec.duration = a.duration;
  spec.dt = a.dt;
  spec.intrinsic = !a.no_intrinsic;
  if (!a.goal.empty()) {
    const auto g = numbers(a.goal, 3, "--goal");
    spec.base_goal = world::Pose2{g[0], g[1], g[2]};
  }
  if (!a.ee_goal.empty()) {
    const auto g = numbers(a.ee_goal, 3, "--ee-goal");
    spec.ee_goal = world::Vec3(g[0], g[1], g[2]);
  }
  std::vector<cbf::BarrierFunction> barriers;
  for (const auto& line : a.constraints) {
    const auto c = plan::parse_constraint(line);
    if (c.robot != a.robot) throw SchemaError("constraint '" + line + "' is not about " + a.robot);
    for (auto& b : plan::compile_constraint(c, w)) barriers.push_back(std::move(b));
  }
  const auto result = control::simulate(w, spec, barriers);
  std::printf("barriers: %zu\nticks: %zu\nmin h: %.6f\ninfeasible ticks: %d\n", result.names.size(), result.rows.size(),
              result.min_h, result.infeasible_ticks);
  if (!a.out.empty()) {
    make_dir(a.out);
    write_text(fs::path(a.out) / "sim.csv", control::to_csv(result));
  }
  return result.min_h < -1e-3 ? kFail : kOk;
}

struct ReplayArgs {
  std::string trace, report;
};

int cmd_replay(const ReplayArgs& a) {
  const auto tr = trace::load(a.trace);
  std::string path = a.report;
  if (path.empty()) path = (fs::path(a.trace).parent_path() / (fs::path(a.trace).stem().string() + ".judge.json")).string();
  json stored;
  try {
    stored = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw SchemaError("report '" + path + "': " + e.what());
  }
  if (!stored.contains("rule")) throw SchemaError("report '" + path + "' has no rule judgment");
  const auto want = judge::report_from_json(stored["rule"]);
  const auto got = judge::rule_judge(tr);
  if (got.violations == want.violations) {
    std::printf("replay matches: %d violation(s)\n", got.count());
    return kOk;
  }
  std::printf("replay differs: stored %d, recomputed %d\n", want.count(), got.count());
  for (const auto& v : got.violations) std::printf("  now  [%d] %s\n", v.criterion, v.detail.c_str());
  for (const auto& v : want.violations) std::printf("  was  [%d] %s\n", v.criterion, v.detail.c_str());
  return kFail;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-robot planning with a safety planner and CBF execution"};
  app.require_subcommand(1);

  RunArgs run;
  auto* run_cmd = app.add_subcommand("run", "plan, critique and execute one task");
  run_cmd->add_option("--scene", run.scene, "scene JSON")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--task", run.task, "task text, or a file holding it")->required();
  run_cmd->add_option("--backend", run.backend, "scripted:<file> or http:<url>[,<model>]")->required();
  run_cmd->add_option("--out", run.out, "directory for trace.jsonl, trace.judge.json, record.json");
  run_cmd->add_option("--seed", run.seed);
  run_cmd->add_option("--max-rounds", run.max_rounds)->check(CLI::PositiveNumber);
  run_cmd->add_option("--judge", run.judge)->check(CLI::IsMember({"rule", "model", "both"}));
  run_cmd->add_option("--task-id", run.task_id);
  run_cmd->add_flag("--no-safety", run.no_safety, "skip the safety planner");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "run a suite and print the per-scene table");
  bench_cmd->add_option("--suite", bench.suite)->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--out", bench.out);
  bench_cmd->add_option("--jobs", bench.jobs)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--seed", bench.seed);
  bench_cmd->add_option("--judge", bench.judge)->check(CLI::IsMember({"rule", "model", "both"}));
  bench_cmd->add_option("--max-rounds", bench.max_rounds)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--backend", bench.backend, "replaces every config's backend");

  JudgeArgs jdg;
  auto* judge_cmd = app.add_subcommand("judge", "judge a saved trace");
  judge_cmd->add_option("trace", jdg.trace)->required()->check(CLI::ExistingFile);
  judge_cmd->add_option("--judge", jdg.judge)->check(CLI::IsMember({"rule", "model", "both"}));
  judge_cmd->add_option("--backend", jdg.backend);
  judge_cmd->add_option("--out", jdg.out);

  SimArgs sim;
  auto* sim_cmd = app.add_subcommand("sim", "one robot under a set of constraints");
  sim_cmd->add_option("--scene", sim.scene)->required()->check(CLI::ExistingFile);
  sim_cmd->add_option("--robot", sim.robot)->required();
  sim_cmd->add_option("--constraint", sim.constraints, "constraint sentence, repeatable");
  sim_cmd->add_option("--policy", sim.policy)->check(CLI::IsMember({"goal", "adversarial"}));
  sim_cmd->add_option("--goal", sim.goal, "base goal x,y,theta");
  sim_cmd->add_option("--ee-goal", sim.ee_goal, "ee goal x,y,z");
  sim_cmd->add_option("--duration", sim.duration)->check(CLI::PositiveNumber);
  sim_cmd->add_option("--dt", sim.dt)->check(CLI::PositiveNumber);
  sim_cmd->add_flag("--no-intrinsic", sim.no_intrinsic, "leave out the robot's own ee limits");
  sim_cmd->add_option("--out", sim.out, "directory for sim.csv");

  ReplayArgs replay;
  auto* replay_cmd = app.add_subcommand("replay", "re-judge a trace and compare with its stored report");
  replay_cmd->add_option("trace", replay.trace)->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--report", replay.report, "default: <trace stem>.judge.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfig;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*bench_cmd) return cmd_bench(bench);
    if (*judge_cmd) return cmd_judge(jdg);
    if (*sim_cmd) return cmd_sim(sim);
    if (*replay_cmd) return cmd_replay(replay);
  } catch (const SchemaError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfig;
  } catch (const ParseError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfig;
  } catch (const ResolutionError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFail;
  }
  return kOk;
}
