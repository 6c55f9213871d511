#include "adp/commands.hpp"

#include "adp/aln.hpp"
#include "adp/env.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <memory>
#include <sstream>

namespace adp::cli {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

// --- config files ------------------------------------------------------------

// JSON option values grouped by command: {"train": {"steps": 100}, ...}. A
// run manifest is accepted as well; its "args" apply to its "command".
class JsonConfig final : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override {
    return "{}\n";
  }

  std::vector<CLI::ConfigItem> from_config(std::istream& is) const override {
    const auto j = nlohmann::json::parse(is, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
      throw CLI::ConversionError("config file is not a JSON object");
    }
    std::vector<CLI::ConfigItem> items;
    if (j.contains("command") && j.contains("args")) {
      if (!j.at("command").is_string() || !j.at("args").is_object()) {
        throw CLI::ConversionError("manifest needs a string command and object args");
      }
      section(j.at("command").get<std::string>(), j.at("args"), items);
      return items;
    }
    for (const auto& [key, value] : j.items()) {
      if (!value.is_object()) {
        throw CLI::ConversionError("config entry '" + key +
                                   "' must be an object of options");
      }
      section(key, value, items);
    }
    return items;
  }

 private:
  static void section(const std::string& command, const nlohmann::json& args,
                      std::vector<CLI::ConfigItem>& items) {
    for (const auto& [key, value] : args.items()) {
      if (value.is_null()) continue;
      CLI::ConfigItem item;
      item.parents = {command};
      item.name = key;
      if (value.is_array()) {
        for (const auto& v : value) item.inputs.push_back(scalar(key, v));
      } else {
        item.inputs.push_back(scalar(key, value));
      }
      items.push_back(std::move(item));
    }
  }

 private:
  static std::string scalar(const std::string& key, const nlohmann::json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("config value for '" + key + "' must be a scalar");
  }
};

// Options bound to variables; each registration also knows how to write the
// resolved value into the run manifest.
class Options {
 public:
  explicit Options(CLI::App* app) : app_(app) {}

  template <class T>
  CLI::Option* add(const std::string& flag, T& var, const std::string& desc) {
    auto* o = app_->add_option(flag, var, desc)->capture_default_str();
    fields_.emplace_back(o->get_single_name(), [&var] { return ojson(var); });
    return o;
  }

  ojson resolved() const {
    ojson j = ojson::object();
    for (const auto& [name, get] : fields_) j[name] = get();
    return j;
  }

  CLI::App* app() const { return app_; }

 private:
  CLI::App* app_;
  std::vector<std::pair<std::string, std::function<ojson()>>> fields_;
};

std::string absolute_path(const std::string& s) {
  if (s.empty()) return s;
  return fs::absolute(fs::path(s)).lexically_normal().string();
}

// Leaves keywords alone and makes file references absolute.
CLI::Validator path_or_keyword(std::vector<std::string> keywords) {
  return CLI::Validator(
      [keywords](std::string& s) {
        for (const auto& k : keywords) {
          if (s == k) return std::string();
        }
        if (s.rfind("table:", 0) == 0) {
          s = "table:" + absolute_path(s.substr(6));
        } else if (s.find(':') == std::string::npos) {
          s = absolute_path(s);
        }
        return std::string();
      },
      "PATH");
}

CLI::Validator absolute() {
  return CLI::Validator(
      [](std::string& s) {
        s = absolute_path(s);
        return std::string();
      },
      "PATH");
}

// --- output helpers ----------------------------------------------------------

std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  if (!is) throw CliError("cannot read " + p.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw CliError("cannot write " + p.string());
  os << text;
  if (!os) throw CliError("failed writing " + p.string());
}

void write_manifest(const fs::path& out, const std::string& command,
                    const Options& opts, const std::vector<std::string>& outputs) {
  ojson m;
  m["command"] = command;
  m["args"] = opts.resolved();
  m["outputs"] = outputs;
  write_text(out / "manifest.json", m.dump(2) + "\n");
}

void write_timing(const fs::path& out, const ojson& timing) {
  write_text(out / "timing.json", timing.dump(2) + "\n");
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

fs::path prepare_out(const std::string& out) {
  if (out.empty()) throw CliError("--out is required");
  fs::create_directories(out);
  return fs::path(out);
}

// --- shared pieces -----------------------------------------------------------

struct PolicyHandle {
  std::unique_ptr<ChunkPolicy> policy;
};

PolicyHandle load_policy(const std::string& spec, double ddim_eta) {
  if (spec == "expert") return {std::make_unique<ExpertPolicy>()};
  if (spec == "random") return {std::make_unique<RandomPolicy>()};
  if (spec.empty()) throw CliError("--policy is required");
  return {std::make_unique<DiffusionPolicy>(load_checkpoint(spec), ddim_eta)};
}

struct SchedulerOptions {
  double gap = 0.2;
  int period = 0;  // 0: classify every N_a
  std::string classifier = "oracle";
  std::string stages;  // template file for the remote classifier
  int top_k = 3;
  int frames = 4;
  std::string endpoint;
  std::string model = RemoteConfig{}.model;
  int timeout_ms = 30000;

  void add_to(Options& o) {
    o.add("--gap", gap, "Probability gap above which the top stage is taken");
    o.add("--period", period, "Control steps between classifications (0: N_a)");
    o.add("--classifier", classifier, "Stage classifier")
        ->check(CLI::IsMember({"oracle", "remote"}));
    o.add("--stages", stages, "Stage templates for the remote classifier")
        ->transform(absolute());
    o.add("--top-k", top_k, "Candidates requested from the remote classifier");
    o.add("--frames", frames, "Frames sent per remote classification");
    o.add("--endpoint", endpoint,
          std::string("Chat-completions URL (default: $") + kEndpointEnv + ")");
    o.add("--model", model, "Model name sent to the endpoint");
    o.add("--timeout-ms", timeout_ms, "Remote request timeout");
  }

  RemoteConfig remote() const {
    RemoteConfig rc;
    rc.endpoint = endpoint.empty() ? endpoint_from_env().value_or("") : endpoint;
    rc.model = model;
    rc.timeout = std::chrono::milliseconds(timeout_ms);
    return rc;
  }
};

class BudgetFactory {
 public:
  BudgetFactory(const SchedulerOptions& so, Transport& transport)
      : so_(so), transport_(transport) {}

  BudgetSource make(const BudgetSpec& spec) {
    if (spec.kind == BudgetSpec::Kind::kFixed) return spec.fixed;
    HvtsBudget hb;
    hb.table = spec.kind == BudgetSpec::Kind::kTable
                   ? align_to_push_stages(load_schedule_file(spec.table_path, {}))
                   : default_push_schedule();
    hb.scheduler.gap = so_.gap;
    if (so_.period > 0) hb.scheduler.period = so_.period;
    if (so_.classifier == "oracle") {
      hb.classifier = &oracle_;
    } else {
      if (!remote_) {
        const auto stages = so_.stages.empty() ? push_stage_templates()
                                               : load_stage_file(so_.stages);
        if (stages.size() != static_cast<std::size_t>(kNumStages)) {
          throw CliError("the push task needs " + std::to_string(kNumStages) +
                         " stage templates");
        }
        const RemoteConfig rc = so_.remote();
        if (rc.endpoint.empty()) {
          throw CliError(std::string("remote classifier needs --endpoint or $") +
                         kEndpointEnv);
        }
        remote_ = std::make_unique<RemoteClassifier>(transport_, rc, stages, so_.top_k);
      }
      hb.classifier = remote_.get();
      hb.frame_history = so_.frames;
    }
    return hb;
  }

 private:
  const SchedulerOptions& so_;
  Transport& transport_;
  OracleClassifier oracle_;
  std::unique_ptr<RemoteClassifier> remote_;
};

ojson metrics_timing(const Metrics& m) {
  return {{"policy", m.label},
          {"wall_time_s", m.wall_time},
          {"latency_ms_per_step",
           m.total_steps > 0 ? 1e3 * m.wall_time / m.total_steps : 0.0}};
}

// --- commands ----------------------------------------------------------------

struct GenDataArgs {
  int n = 50;
  std::uint64_t seed = 1;
  double noise = 0.2;
  int horizon = 16;
  std::string labels = "expert";
  int max_attempts = 0;
  std::string out;
};

DemoLabels parse_labels(const std::string& s) {
  return s == "executed" ? DemoLabels::kExecuted : DemoLabels::kExpert;
}

void add_out(Options& o, std::string& out) {
  o.add("--out", out, "Output directory")->required()->transform(absolute());
}

int cmd_gen_data(const GenDataArgs& a, const Options& opts, std::ostream& out) {
  const fs::path dir = prepare_out(a.out);
  const DemoDataset ds = generate_demos(a.n, a.seed, a.noise, a.horizon, {},
                                        a.max_attempts, parse_labels(a.labels));
  save_dataset(dir / "demos.bin", ds);
  write_manifest(dir, "gen-data", opts, {"demos.bin"});
  out << "wrote " << ds.size() << " demonstrations (" << ds.total_windows()
      << " windows) to " << (dir / "demos.bin").string() << '\n';
  return 0;
}

struct TrainArgs {
  std::string data;
  int demos = 50;
  std::uint64_t demo_seed = 1;
  double noise = 0.2;
  std::string mode = "uniform";
  std::int64_t steps = TrainConfig{}.total_steps;
  std::uint64_t seed = 0;
  int batch = 32;
  int warmup = 500;
  double entropy_coef = 10.0;
  std::string reward_sign = "positive";
  double beta_start = TrainConfig{}.beta_start;
  double beta_end = TrainConfig{}.beta_end;
  double lr = 1e-3;
  double sampler_lr = 1e-3;
  double alpha_max = 0.1;
  double alpha_min = 0.01;
  std::int64_t eval_every = 0;
  int eval_episodes = 50;
  std::uint64_t eval_seed = 1000;
  int eval_action_steps = 8;
  int eval_inference_steps = 100;
  std::int64_t snapshot_every = 1000;
  std::string out;
};

int cmd_train(const TrainArgs& a, const Options& opts, std::ostream& out) {
  const fs::path dir = prepare_out(a.out);
  std::vector<std::string> outputs;
  DemoDataset ds;
  if (a.data.empty()) {
    ds = generate_demos(a.demos, a.demo_seed, a.noise);
    save_dataset(dir / "demos.bin", ds);
    outputs.push_back("demos.bin");
  } else {
    ds = load_dataset(a.data);
  }

  TrainConfig cfg;
  cfg.total_steps = a.steps;
  cfg.batch_size = a.batch;
  cfg.warmup_steps = a.warmup;
  cfg.entropy_coef = a.entropy_coef;
  cfg.reward_sign =
      a.reward_sign == "negative" ? RewardSign::kNegative : RewardSign::kPositive;
  cfg.beta_start = a.beta_start;
  cfg.beta_end = a.beta_end;
  cfg.denoiser_lr = a.lr;
  cfg.sampler_lr = a.sampler_lr;
  cfg.alpha_max = a.alpha_max;
  cfg.alpha_min = a.alpha_min;
  cfg.seed = a.seed;
  cfg.eval_every = a.eval_every;
  cfg.snapshot_every = a.snapshot_every;
  cfg.dims.obs_dim = ds.obs_dim;
  cfg.dims.action_dim = ds.action_dim;
  cfg.dims.horizon = ds.horizon;

  PolicyCheckpoint ckpt;
  ckpt.beta_start = cfg.beta_start;
  ckpt.beta_end = cfg.beta_end;
  const NoiseSchedule schedule = ckpt.schedule();
  double eval_time = 0.0;
  EvalFn eval;
  if (a.eval_every > 0) {
    eval = [&](const DenoiserParams& p, std::int64_t step) {
      const DiffusionPolicy policy(p, schedule);
      const Metrics m =
          evaluate(policy, a.eval_episodes,
                   FixedBudget{a.eval_action_steps, a.eval_inference_steps},
                   RolloutOptions{}, {a.eval_seed});
      eval_time += m.wall_time;
      out << "step " << step << " success " << m.success_rate << '\n';
      return m.success_rate;
    };
  }
  const TrainMode mode = a.mode == "aln" ? TrainMode::kAln : TrainMode::kUniformBaseline;
  const auto t0 = std::chrono::steady_clock::now();
  TrainResult r = train(cfg, ds, mode, eval);
  const double total = seconds_since(t0);

  ckpt.params = std::move(r.params);
  save_checkpoint(dir / "checkpoint.bin", ckpt);
  write_report_csv(dir / "report.csv", r.report);
  write_snapshots_csv(dir / "sampler_snapshots.csv", r.report.sampler_snapshots, "p");
  write_snapshots_csv(dir / "weight_snapshots.csv", r.report.weight_snapshots, "w");
  outputs.insert(outputs.end(), {"checkpoint.bin", "report.csv",
                                 "sampler_snapshots.csv", "weight_snapshots.csv"});
  write_timing(dir, {{"wall_time_s", total},
                     {"eval_time_s", eval_time},
                     {"train_time_s", total - eval_time},
                     {"gradient_steps", r.report.gradient_steps}});
  write_manifest(dir, "train", opts, outputs);
  out << "trained " << r.report.gradient_steps << " steps (" << a.mode << ") in "
      << total << " s\n";
  return 0;
}

struct EvalArgs {
  std::string policy;
  int episodes = 50;
  std::string schedule = "fixed:8,100";
  std::string sampler = "ddpm";
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  double ddim_eta = 0.0;
  SchedulerOptions sched;
  std::string out;
};

void write_trace_csv(const fs::path& p, const std::vector<EpisodeResult>& eps) {
  std::ostringstream os;
  os << "env_seed,step,true_stage,scheduled_stage,n_action_steps,num_inference_steps\n";
  for (const auto& e : eps) {
    for (const auto& t : e.trace) {
      os << e.env_seed << ',' << t.step << ',' << t.true_stage << ','
         << t.scheduled_stage << ',' << t.n_action_steps << ','
         << t.num_inference_steps << '\n';
    }
  }
  write_text(p, os.str());
}

int cmd_eval(const EvalArgs& a, const Options& opts, Transport& transport,
             std::ostream& out) {
  const fs::path dir = prepare_out(a.out);
  const PolicyHandle ph = load_policy(a.policy, a.ddim_eta);
  BudgetFactory budgets(a.sched, transport);
  const BudgetSource budget = budgets.make(parse_budget_spec(a.schedule));
  RolloutOptions ro;
  ro.sampler = parse_sampler_kind(a.sampler);
  std::vector<EpisodeResult> episodes;
  Metrics m = evaluate(*ph.policy, a.episodes, budget, ro, a.seeds, &episodes);
  m.label = a.sampler + "/" + a.schedule.substr(0, a.schedule.find(':'));
  write_metrics_csv(dir / "report.csv", {m}, {});
  write_episodes_csv(dir / "episodes.csv", episodes);
  write_trace_csv(dir / "trace.csv", episodes);
  write_timing(dir, metrics_timing(m));
  write_manifest(dir, "eval", opts, {"report.csv", "episodes.csv", "trace.csv"});
  char line[160];
  std::snprintf(line, sizeof line,
                "success %.3f (std %.3f) early %.3f calls/step %.3f over %d episodes\n",
                m.success_rate, m.success_std, m.early_success_rate,
                m.calls_per_step, m.episodes);
  out << line;
  return 0;
}

struct DecomposeArgs {
  std::string task = "Push the block onto the goal marker with the round pusher.";
  int num_stages = kNumStages;
  int frames = 3;
  std::uint64_t seed = 1;
  ScheduleRanges ranges;
  std::string mock;
  std::string endpoint;
  std::string model = RemoteConfig{}.model;
  int timeout_ms = 60000;
  std::string out;
};

// Evenly spaced frames of one expert episode, first and last included.
std::vector<std::vector<std::uint8_t>> expert_keyframes(std::uint64_t seed, int n) {
  std::vector<PushEnv> states;
  PushEnv env = PushEnv::reset(seed);
  states.push_back(env);
  while (!env.done) {
    env_step(env, scripted_expert(env));
    states.push_back(env);
  }
  std::vector<std::vector<std::uint8_t>> frames;
  for (int i = 0; i < n; ++i) {
    const std::size_t idx =
        n == 1 ? states.size() - 1 : i * (states.size() - 1) / static_cast<std::size_t>(n - 1);
    frames.push_back(encode_ppm(letterbox(render_frame(states[idx]))));
  }
  return frames;
}

int cmd_decompose(const DecomposeArgs& a, const Options& opts, Transport& transport,
                  std::ostream& out) {
  const fs::path dir = prepare_out(a.out);
  const std::string p1 = build_decomposition_prompt(a.task, a.frames, a.num_stages);
  write_text(dir / "decomposition_prompt.txt", p1);

  RemoteConfig rc;
  rc.endpoint = a.endpoint.empty() ? endpoint_from_env().value_or("") : a.endpoint;
  rc.model = a.model;
  rc.timeout = std::chrono::milliseconds(a.timeout_ms);

  std::string reply1;
  if (!a.mock.empty()) {
    reply1 = read_text(fs::path(a.mock) / "decomposition.txt");
  } else {
    if (rc.endpoint.empty()) {
      throw CliError(std::string("decompose needs --mock, --endpoint or $") + kEndpointEnv);
    }
    const auto frames = expert_keyframes(a.seed, a.frames);
    reply1 = complete_remote(transport, rc, p1, frames);
  }
  write_text(dir / "decomposition_reply.txt", reply1);
  const auto stages = parse_stage_templates(reply1, a.num_stages);

  const std::string p2 = build_schedule_prompt(stages, a.ranges);
  write_text(dir / "schedule_prompt.txt", p2);
  const std::string reply2 =
      a.mock.empty() ? complete_remote(transport, rc, p2, {})
                     : read_text(fs::path(a.mock) / "schedule.txt");
  write_text(dir / "schedule_reply.txt", reply2);
  const ScheduleTable table = parse_schedule(reply2, stages, a.ranges);

  write_text(dir / "stages.json", stage_templates_to_json(stages));
  write_text(dir / "schedule.json", schedule_to_json(table));
  write_manifest(dir, "decompose", opts,
                 {"decomposition_prompt.txt", "decomposition_reply.txt",
                  "schedule_prompt.txt", "schedule_reply.txt", "stages.json",
                  "schedule.json"});
  out << "decomposed into " << stages.size() << " stages\n";
  for (const auto& e : table.entries) {
    out << "  " << e.name << ": N_a=" << e.n_action_steps
        << " N_d=" << e.num_inference_steps << '\n';
  }
  return 0;
}

struct BenchArgs {
  std::string policy;
  int episodes = 50;
  std::vector<std::uint64_t> seeds = {1, 2, 3};
  std::string ddpm = "fixed:8,100";
  std::string ddpm_hvts = "oracle-hvts";
  std::string ddim = "fixed:8,50";
  std::string ddim_hvts = "oracle-hvts";
  double ddim_eta = 0.0;
  SchedulerOptions sched;
  std::string out;
};

int cmd_bench(const BenchArgs& a, const Options& opts, Transport& transport,
              std::ostream& out) {
  const fs::path dir = prepare_out(a.out);
  const PolicyHandle ph = load_policy(a.policy, a.ddim_eta);
  BudgetFactory budgets(a.sched, transport);
  struct Row {
    const char* label;
    SamplerKind kind;
    const std::string& spec;
  };
  const Row rows[] = {{"DDPM", SamplerKind::kDdpm, a.ddpm},
                      {"DDPM+HVTS", SamplerKind::kDdpm, a.ddpm_hvts},
                      {"DDIM", SamplerKind::kDdim, a.ddim},
                      {"DDIM+HVTS", SamplerKind::kDdim, a.ddim_hvts}};
  std::vector<Metrics> metrics;
  ojson timing = ojson::array();
  for (const auto& row : rows) {
    RolloutOptions ro;
    ro.sampler = row.kind;
    Metrics m = evaluate(*ph.policy, a.episodes, budgets.make(parse_budget_spec(row.spec)),
                         ro, a.seeds);
    m.label = row.label;
    timing.push_back(metrics_timing(m));
    metrics.push_back(std::move(m));
  }
  std::vector<SpeedupReport> speedups;
  for (const auto& m : metrics) speedups.push_back(compare_speedup(metrics.front(), m));
  write_metrics_csv(dir / "report.csv", metrics, speedups);
  const std::string table = format_speedup_table(metrics, speedups);
  write_text(dir / "bench.txt", table);
  write_timing(dir, {{"rows", timing}});
  write_manifest(dir, "bench", opts, {"report.csv", "bench.txt"});
  out << table;
  return 0;
}

void add_seeds(Options& o, std::vector<std::uint64_t>& seeds) {
  o.add("--seeds", seeds, "Evaluation seeds (comma separated)")->delimiter(',');
}

}  // namespace

// --- public helpers ----------------------------------------------------------

BudgetSpec parse_budget_spec(std::string_view s) {
  BudgetSpec spec;
  if (s == "oracle-hvts") {
    spec.kind = BudgetSpec::Kind::kOracleHvts;
    return spec;
  }
  if (s.rfind("table:", 0) == 0) {
    spec.kind = BudgetSpec::Kind::kTable;
    spec.table_path = std::string(s.substr(6));
    if (spec.table_path.empty()) throw CliError("table: needs a path");
    return spec;
  }
  if (s.rfind("fixed:", 0) == 0) {
    const std::string body(s.substr(6));
    int na = 0, nd = 0;
    char tail = 0;
    if (std::sscanf(body.c_str(), "%d,%d%c", &na, &nd, &tail) != 2 || na < 1 ||
        nd < 1) {
      throw CliError("fixed budget must look like fixed:<N_a>,<N_d>");
    }
    spec.fixed = FixedBudget{na, nd};
    return spec;
  }
  throw CliError("unknown schedule '" + std::string(s) +
                 "' (fixed:<N_a>,<N_d> | table:<path> | oracle-hvts)");
}

std::vector<StageTemplate> push_stage_templates() {
  return {
      {"approach",
       "Action features: The pusher travels across open space toward the area "
       "behind the block."},
      {"align",
       "Action features: The pusher settles just behind the block, lined up with "
       "the goal marker."},
      {"push",
       "Action features: The pusher touches the block and both slide toward the "
       "goal marker."},
      {"reach",
       "Action features: The block is close to the goal marker and the pusher "
       "makes small corrective moves."},
      {"complete",
       "Action features: The block rests on the goal marker."},
  };
}

ScheduleTable default_push_schedule() {
  ScheduleTable t;
  for (int s = 0; s < kNumStages; ++s) {
    const bool hard = s == static_cast<int>(Stage::kApproach);
    t.entries.push_back({std::string(kStageNames[static_cast<std::size_t>(s)]),
                         hard ? 8 : 16, hard ? 40 : 20});
  }
  return t;
}

ScheduleTable align_to_push_stages(const ScheduleTable& table) {
  ScheduleTable out;
  out.ranges = table.ranges;
  for (const auto name : kStageNames) {
    const auto idx = table.find(name);
    if (!idx) throw CliError("schedule has no entry for stage '" + std::string(name) + "'");
    out.entries.push_back(table.entries[*idx]);
  }
  return out;
}

ScheduleTable load_schedule_file(const fs::path& path, const ScheduleRanges& ranges) {
  const std::string text = read_text(path);
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_array()) {
    throw CliError(path.string() + " is not a JSON array");
  }
  std::vector<StageTemplate> stages;
  for (const auto& e : j) {
    if (!e.is_object() || !e.contains("name") || !e.at("name").is_string()) {
      throw CliError(path.string() + ": every entry needs a name");
    }
    stages.push_back({e.at("name").get<std::string>(), ""});
  }
  // Tables on disk are trusted as written: widen the ranges to cover them.
  ScheduleRanges r = ranges;
  for (const auto& e : j) {
    const int na = e.value("n_action_steps", r.a_min);
    const int nd = e.value("num_inference_steps", r.i_min);
    r.a_min = std::min(r.a_min, na);
    r.a_max = std::max(r.a_max, na);
    r.i_min = std::min(r.i_min, nd);
    r.i_max = std::max(r.i_max, nd);
  }
  return parse_schedule(text, stages, r);
}

std::vector<StageTemplate> load_stage_file(const fs::path& path) {
  const std::string text = read_text(path);
  const auto j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_array()) {
    throw CliError(path.string() + " is not a JSON array");
  }
  return parse_stage_templates(text, static_cast<int>(j.size()));
}

int run(const std::vector<std::string>& args, const Context& ctx) {
  std::ostream& out = ctx.out ? *ctx.out : std::cout;
  std::ostream& err = ctx.err ? *ctx.err : std::cerr;
  HttpTransport http;
  Transport& transport = ctx.transport ? *ctx.transport : http;

  CLI::App app{"Diffusion policy training with adaptive timestep sampling and "
               "stage-conditioned inference budgets"};
  app.require_subcommand(1);
  app.fallthrough();
  app.config_formatter(std::make_shared<JsonConfig>());
  app.set_config("--config", "", "JSON options grouped by command, or a run manifest");
  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate scripted demonstrations");
  Options gen_opts(gen_cmd);
  gen_opts.add("--n", gen.n, "Number of successful demonstrations");
  gen_opts.add("--seed", gen.seed, "Episode seed stream");
  gen_opts.add("--noise", gen.noise, "Std of the action noise during collection");
  gen_opts.add("--horizon", gen.horizon, "Window length T_p");
  gen_opts.add("--labels", gen.labels, "Stored action per state")
      ->check(CLI::IsMember({"expert", "executed"}));
  gen_opts.add("--max-attempts", gen.max_attempts, "Episode budget (0: 10 n)");
  add_out(gen_opts, gen.out);

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a diffusion policy");
  Options train_opts(train_cmd);
  train_opts.add("--data", tr.data, "Demonstration file (default: generate)")
      ->transform(absolute());
  train_opts.add("--demos", tr.demos, "Demonstrations generated without --data");
  train_opts.add("--demo-seed", tr.demo_seed, "Seed for generated demonstrations");
  train_opts.add("--noise", tr.noise, "Action noise for generated demonstrations");
  train_opts.add("--mode", tr.mode, "Timestep and trajectory sampling")
      ->check(CLI::IsMember({"uniform", "aln"}));
  train_opts.add("--steps", tr.steps, "Gradient steps");
  train_opts.add("--seed", tr.seed, "Training seed");
  train_opts.add("--batch", tr.batch, "Batch size");
  train_opts.add("--warmup", tr.warmup, "Steps of uniform sampling before adapting");
  train_opts.add("--entropy-coef", tr.entropy_coef, "Sampler entropy weight");
  train_opts.add("--reward-sign", tr.reward_sign, "Sign of the normalised loss reward")
      ->check(CLI::IsMember({"positive", "negative"}));
  train_opts.add("--beta-start", tr.beta_start, "First beta of the linear schedule");
  train_opts.add("--beta-end", tr.beta_end, "Last beta of the linear schedule");
  train_opts.add("--lr", tr.lr, "Denoiser learning rate");
  train_opts.add("--sampler-lr", tr.sampler_lr, "Timestep sampler learning rate");
  train_opts.add("--alpha-max", tr.alpha_max, "Initial trajectory weight step");
  train_opts.add("--alpha-min", tr.alpha_min, "Final trajectory weight step");
  train_opts.add("--eval-every", tr.eval_every, "Steps between evaluations (0: off)");
  train_opts.add("--eval-episodes", tr.eval_episodes, "Episodes per evaluation");
  train_opts.add("--eval-seed", tr.eval_seed, "Evaluation seed");
  train_opts.add("--eval-action-steps", tr.eval_action_steps, "N_a during evaluation");
  train_opts.add("--eval-inference-steps", tr.eval_inference_steps,
                 "DDPM N_d during evaluation");
  train_opts.add("--snapshot-every", tr.snapshot_every, "Steps between sampler snapshots");
  add_out(train_opts, tr.out);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a policy on the push task");
  Options eval_opts(eval_cmd);
  eval_opts.add("--policy", ev.policy, "Checkpoint path, 'expert' or 'random'")
      ->required()
      ->transform(path_or_keyword({"expert", "random"}));
  eval_opts.add("--episodes", ev.episodes, "Episodes per seed");
  eval_opts.add("--schedule", ev.schedule,
                "fixed:<N_a>,<N_d> | table:<path> | oracle-hvts")
      ->transform(path_or_keyword({"oracle-hvts"}));
  eval_opts.add("--sampler", ev.sampler, "Reverse process")
      ->check(CLI::IsMember({"ddpm", "ddim"}));
  add_seeds(eval_opts, ev.seeds);
  eval_opts.add("--ddim-eta", ev.ddim_eta, "DDIM stochasticity");
  ev.sched.add_to(eval_opts);
  add_out(eval_opts, ev.out);

  DecomposeArgs dc;
  auto* dec_cmd = app.add_subcommand(
      "decompose", "Build stage templates and a schedule table with a VLM");
  Options dec_opts(dec_cmd);
  dec_opts.add("--task", dc.task, "Task description");
  dec_opts.add("--num-stages", dc.num_stages, "Stages to request");
  dec_opts.add("--frames", dc.frames, "Keyframes sent with the request");
  dec_opts.add("--seed", dc.seed, "Expert episode the keyframes come from");
  dec_opts.add("--a-min", dc.ranges.a_min, "Smallest N_a");
  dec_opts.add("--a-max", dc.ranges.a_max, "Largest N_a");
  dec_opts.add("--i-min", dc.ranges.i_min, "Smallest N_d");
  dec_opts.add("--i-max", dc.ranges.i_max, "Largest N_d");
  dec_opts.add("--mock", dc.mock,
               "Directory with decomposition.txt and schedule.txt replies")
      ->transform(absolute());
  dec_opts.add("--endpoint", dc.endpoint,
               std::string("Chat-completions URL (default: $") + kEndpointEnv + ")");
  dec_opts.add("--model", dc.model, "Model name sent to the endpoint");
  dec_opts.add("--timeout-ms", dc.timeout_ms, "Remote request timeout");
  add_out(dec_opts, dc.out);

  BenchArgs bn;
  auto* bench_cmd =
      app.add_subcommand("bench", "DDPM/DDIM with and without stage schedules");
  Options bench_opts(bench_cmd);
  bench_opts.add("--policy", bn.policy, "Checkpoint path, 'expert' or 'random'")
      ->required()
      ->transform(path_or_keyword({"expert", "random"}));
  bench_opts.add("--episodes", bn.episodes, "Episodes per seed");
  add_seeds(bench_opts, bn.seeds);
  bench_opts.add("--ddpm", bn.ddpm, "Budget of the DDPM baseline row")
      ->transform(path_or_keyword({"oracle-hvts"}));
  bench_opts.add("--ddpm-hvts", bn.ddpm_hvts, "Budget of the DDPM+HVTS row")
      ->transform(path_or_keyword({"oracle-hvts"}));
  bench_opts.add("--ddim", bn.ddim, "Budget of the DDIM row")
      ->transform(path_or_keyword({"oracle-hvts"}));
  bench_opts.add("--ddim-hvts", bn.ddim_hvts, "Budget of the DDIM+HVTS row")
      ->transform(path_or_keyword({"oracle-hvts"}));
  bench_opts.add("--ddim-eta", bn.ddim_eta, "DDIM stochasticity");
  bn.sched.add_to(bench_opts);
  add_out(bench_opts, bn.out);

  std::vector<std::string> argv_rev(args.rbegin(), args.rend());
  if (!argv_rev.empty()) argv_rev.pop_back();  // program name
  try {
    app.parse(argv_rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (gen_cmd->parsed()) return cmd_gen_data(gen, gen_opts, out);
    if (train_cmd->parsed()) return cmd_train(tr, train_opts, out);
    if (eval_cmd->parsed()) return cmd_eval(ev, eval_opts, transport, out);
    if (dec_cmd->parsed()) return cmd_decompose(dc, dec_opts, transport, out);
    if (bench_cmd->parsed()) return cmd_bench(bn, bench_opts, transport, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

int run(int argc, const char* const* argv, const Context& ctx) {
  return run(std::vector<std::string>(argv, argv + argc), ctx);
}

}  // namespace adp::cli
