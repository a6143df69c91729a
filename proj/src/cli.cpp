#include "rulesynth/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "rulesynth/agent.hpp"
#include "rulesynth/error.hpp"
#include "rulesynth/inference.hpp"
#include "rulesynth/profile.hpp"

namespace rulesynth {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string(), path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, std::string_view text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string(), path.string());
}

void check_keys(const json& doc, std::initializer_list<std::string_view> allowed, std::string_view what) {
  if (!doc.is_object()) throw Error(ErrorCode::ConfigError, std::string(what) + " must be an object");
  for (const auto& [key, _] : doc.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(ErrorCode::ConfigError, "unknown " + std::string(what) + " key '" + key + "'", key);
    }
  }
}

template <typename T>
void read_key(const json& doc, const char* key, T& into) {
  if (!doc.contains(key)) return;
  try {
    into = doc.at(key).get<T>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("config key '") + key + "': " + e.what(), key);
  }
}

fs::path resolve(const fs::path& base, const fs::path& p) {
  return p.empty() || p.is_absolute() ? p : base / p;
}

/// Options shared by all subcommands.
struct Common {
  std::string config;
  std::uint64_t seed = 0;
  std::string backend;
  std::string fixtures;
  std::string out;
  std::size_t parallelism = 0;
  std::size_t max_rewrites = 0;
  bool fail_on_empty = false;
  std::map<std::string, CLI::Option*> opts;

  void attach(CLI::App& app) {
    opts["config"] = app.add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
    opts["seed"] = app.add_option("--seed", seed, "RNG seed");
    opts["backend"] = app.add_option("--backend", backend, "Model backend")
                          ->check(CLI::IsMember({"live", "replay", "scripted"}));
    opts["fixtures"] = app.add_option("--fixtures", fixtures, "Replay or script fixture directory");
    opts["out"] = app.add_option("--out", out, "Output location");
    opts["parallelism"] = app.add_option("--parallelism", parallelism, "Sandbox workers")
                              ->check(CLI::PositiveNumber);
    opts["max-rewrites"] = app.add_option("--max-rewrites", max_rewrites, "Rewrite budget")
                               ->check(CLI::PositiveNumber);
    app.add_flag("--fail-on-empty", fail_on_empty, "Exit with 3 when nothing is produced");
  }

  bool given(const std::string& name) const { return opts.at(name)->count() > 0; }

  RunConfig resolve_config() const {
    RunConfig cfg = config.empty() ? RunConfig::from_json(json::object(), fs::current_path())
                                   : RunConfig::load(config);
    if (given("seed")) cfg.seed = seed;
    if (given("backend")) cfg.backend = parse_backend(backend);
    if (given("fixtures")) cfg.fixtures = fs::absolute(fixtures);
    if (given("parallelism")) cfg.parallelism = parallelism;
    if (given("max-rewrites")) cfg.limits.max_rewrites = max_rewrites;
    return cfg;
  }
};

std::uint64_t require_seed(const RunConfig& cfg) {
  if (!cfg.seed) throw Error(ErrorCode::ConfigError, "a seed is required (--seed or \"seed\" in the config)");
  return *cfg.seed;
}

std::unique_ptr<ChatClient> client_for(const RunConfig& cfg) {
  if (cfg.backend != Backend::Live && !fs::is_directory(cfg.fixtures)) {
    throw Error(ErrorCode::ConfigError, "fixture directory not found: " + cfg.fixtures.string());
  }
  return make_client(cfg.backend, cfg.fixtures, cfg.live);
}

void require_dir(const fs::path& p) {
  if (!fs::is_directory(p)) throw Error(ErrorCode::IoError, "not a directory: " + p.string(), p.string());
}

int cmd_distill(const Common& c, std::ostream& out, std::ostream& err) {
  auto cfg = c.resolve_config();
  if (!cfg.pair) throw Error(ErrorCode::ConfigError, "distill needs a library \"pair\" in the config");
  cfg.distill.seed = require_seed(cfg);
  const fs::path dir = c.out.empty() ? cfg.dataset_dir : fs::path(c.out);
  auto client = client_for(cfg);
  auto s = run_distill(*cfg.pair, *client, cfg.distill, cfg.sandbox, dir, cfg.parallelism);
  out << "use cases: " << s.use_cases << "\n"
      << "implementations: " << s.implementations << "\n"
      << "tests: " << s.tests << "\n"
      << "migrations: " << s.migrations << "\n"
      << "valid implementation/test pairs: " << s.impl_valid_pairs << "\n"
      << "valid triples: " << s.valid_triples << "\n"
      << "use cases implemented: " << s.use_cases_implemented << "\n"
      << "use cases migrated: " << s.use_cases_migrated << "\n"
      << "selected: " << s.selected << "\n";
  if (s.selected == 0) {
    err << "warning: no triple was selected\n";
    if (c.fail_on_empty) return kExitEmpty;
  }
  return kExitOk;
}

int cmd_infer(const Common& c, const std::string& triple, std::ostream& out, std::ostream& err) {
  require_dir(triple);
  auto rules = infer_ruleset(read_text(fs::path(triple) / "source.py"),
                             read_text(fs::path(triple) / "migration.py"));
  auto text = ruleset_to_graph(rules).to_json_text();
  if (c.out.empty()) {
    out << text;
  } else {
    write_text(c.out, text);
  }
  err << "inferred " << rules.size() << " rules\n";
  if (rules.empty()) {
    err << "warning: no rule could be inferred\n";
    if (c.fail_on_empty) return kExitEmpty;
  }
  return kExitOk;
}

int cmd_synthesize(const Common& c, const std::string& triple, const std::string& r0,
                   std::ostream& out, std::ostream& err) {
  auto cfg = c.resolve_config();
  require_dir(triple);
  auto task = load_task(triple);
  RuleGraph initial = r0.empty()
                          ? ruleset_to_graph(infer_ruleset(task.triple.source, task.triple.migration))
                          : load_graph(read_text(r0), false);

  AgentEnv env;
  env.sandbox = cfg.sandbox;
  env.limits = cfg.limits;
  env.model = cfg.agent_model;
  env.temperature = cfg.agent_temperature;
  env.seed = require_seed(cfg);
  env.cap = cfg.iteration_cap;

  const std::string stem = task.triple.use_case_id + "__" + task.triple.impl_id;
  fs::path script = c.out.empty() ? cfg.scripts_dir / (stem + ".json") : fs::path(c.out) / "script.json";
  fs::path transcript =
      c.out.empty() ? cfg.transcripts_dir / (stem + ".jsonl") : fs::path(c.out) / "transcript.jsonl";
  env.script_path = script;

  auto client = client_for(cfg);
  auto result = synthesize(task, std::move(initial), *client, env);
  write_text(script, result.graph.to_json_text());
  write_text(transcript, result.transcript.to_jsonl());

  const auto& t = result.transcript;
  out << "outcome: " << to_string(t.outcome) << "\n"
      << "iterations: " << t.iteration_count() << "\n"
      << "script: " << script.string() << "\n"
      << "transcript: " << transcript.string() << "\n";
  switch (t.outcome) {
    case Outcome::Success: return kExitOk;
    case Outcome::Exhausted: return kExitExhausted;
    case Outcome::Aborted:
      err << "error: " << t.reason << "\n";
      return kExitError;
  }
  return kExitError;
}

FileMap collect_sources(const fs::path& target) {
  FileMap files;
  if (fs::is_regular_file(target)) {
    files[target.filename().string()] = read_text(target);
    return files;
  }
  require_dir(target);
  for (const auto& e : fs::recursive_directory_iterator(target)) {
    if (e.is_regular_file() && e.path().extension() == ".py") {
      files[fs::relative(e.path(), target).generic_string()] = read_text(e.path());
    }
  }
  return files;
}

int cmd_apply(const Common& c, const std::string& script, const std::string& target, bool in_place,
              std::ostream& out) {
  auto cfg = c.resolve_config();
  auto graph = load_graph(read_text(script));
  const auto original = collect_sources(target);
  auto result = execute(graph, original, LanguageProfile::python(), cfg.limits);

  std::map<std::string, std::size_t> per_rule;
  for (const auto& e : result.log.entries) per_rule[e.rule]++;
  std::size_t changed = 0;
  for (const auto& [name, text] : result.files) changed += text != original.at(name) ? 1 : 0;

  out << "files: " << result.files.size() << "\n"
      << "changed: " << changed << "\n"
      << "rewrites: " << result.log.count() << "\n"
      << "passes: " << result.log.passes << "\n";
  for (const auto& [rule, n] : per_rule) out << "  " << rule << ": " << n << "\n";

  const fs::path base = fs::is_regular_file(target) ? fs::path(target).parent_path() : fs::path(target);
  for (const auto& [name, text] : result.files) {
    if (!c.out.empty()) {
      write_text(fs::path(c.out) / name, text);
    } else if (in_place && text != original.at(name)) {
      write_text(base / name, text);
    }
  }
  return kExitOk;
}

int cmd_eval_siblings(const Common& c, const std::string& script, const std::string& use_case,
                      const std::vector<std::string>& exclude, std::ostream& out) {
  auto cfg = c.resolve_config();
  auto graph = load_graph(read_text(script));
  require_dir(use_case);

  std::vector<fs::path> dirs;
  const fs::path selected = fs::path(use_case) / "selected";
  if (fs::is_directory(selected)) {
    for (const auto& e : fs::directory_iterator(selected)) {
      const auto name = e.path().filename().string();
      if (e.is_directory() && std::find(exclude.begin(), exclude.end(), name) == exclude.end()) {
        dirs.push_back(e.path());
      }
    }
  }
  std::sort(dirs.begin(), dirs.end());

  std::vector<SynthesisTask> tasks;
  std::vector<std::string> notes(dirs.size());
  std::vector<FileMap> migrated(dirs.size());
  std::vector<TestJob> jobs;
  std::vector<std::size_t> job_of(dirs.size(), SIZE_MAX);
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    tasks.push_back(load_task(dirs[i]));
    try {
      auto r = execute(graph, {{cfg.sandbox.implementation_file, tasks[i].triple.source}},
                       LanguageProfile::python(), cfg.limits);
      migrated[i] = std::move(r.files);
      job_of[i] = jobs.size();
      jobs.push_back({migrated[i].at(cfg.sandbox.implementation_file), tasks[i].triple.tests});
    } catch (const Error& e) {
      notes[i] = std::string(to_string(e.code())) + ": " + e.what();
    }
  }
  auto reports = run_tests_batch(jobs, cfg.sandbox, cfg.parallelism);

  std::size_t ok = 0;
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    bool pass = false;
    if (job_of[i] != SIZE_MAX) {
      const auto& rep = reports[job_of[i]];
      auto markers = remaining_markers(migrated[i], tasks[i].pair.source_markers, LanguageProfile::python());
      pass = check_success(migrated[i], tasks[i].pair.source_markers, rep);
      if (!rep.passed) notes[i] = rep.error ? *rep.error : "tests failed";
      if (!markers.empty()) {
        std::string m;
        for (const auto& s : markers) m += (m.empty() ? "" : ", ") + s;
        notes[i] += (notes[i].empty() ? "" : "; ") + std::string("markers remain: ") + m;
      }
    }
    ok += pass ? 1 : 0;
    out << dirs[i].filename().string() << ": " << (pass ? "pass" : "fail");
    if (!pass && !notes[i].empty()) out << " (" << notes[i] << ")";
    out << "\n";
  }
  out << ok << "/" << dirs.size() << "\n";
  return kExitOk;
}

}  // namespace

RunConfig RunConfig::from_json(const json& doc, const fs::path& base_dir) {
  check_keys(doc,
             {"pair", "distill", "sandbox", "backend", "fixtures", "live", "paths", "seed", "limits",
              "parallelism", "agent"},
             "config");
  RunConfig c;
  if (doc.contains("pair")) c.pair = LibraryPair::from_json(doc.at("pair"));
  if (doc.contains("distill")) c.distill = DistillConfig::from_json(doc.at("distill"));
  if (doc.contains("sandbox")) c.sandbox = SandboxConfig::from_json(doc.at("sandbox"));
  if (doc.contains("backend")) {
    std::string b;
    read_key(doc, "backend", b);
    c.backend = parse_backend(b);
  }
  std::string fixtures;
  read_key(doc, "fixtures", fixtures);
  c.fixtures = resolve(base_dir, fixtures);
  if (doc.contains("live")) {
    const auto& l = doc.at("live");
    check_keys(l, {"base_url", "path", "api_key_env", "timeout_seconds", "max_attempts"}, "live");
    read_key(l, "base_url", c.live.base_url);
    read_key(l, "path", c.live.path);
    read_key(l, "api_key_env", c.live.api_key_env);
    read_key(l, "timeout_seconds", c.live.timeout_seconds);
    read_key(l, "max_attempts", c.live.max_attempts);
  }
  if (doc.contains("paths")) {
    const auto& p = doc.at("paths");
    check_keys(p, {"dataset", "scripts", "transcripts"}, "paths");
    std::string s;
    if (p.contains("dataset")) { read_key(p, "dataset", s); c.dataset_dir = s; }
    if (p.contains("scripts")) { read_key(p, "scripts", s); c.scripts_dir = s; }
    if (p.contains("transcripts")) { read_key(p, "transcripts", s); c.transcripts_dir = s; }
  }
  c.dataset_dir = resolve(base_dir, c.dataset_dir);
  c.scripts_dir = resolve(base_dir, c.scripts_dir);
  c.transcripts_dir = resolve(base_dir, c.transcripts_dir);
  if (doc.contains("seed")) {
    std::uint64_t s = 0;
    read_key(doc, "seed", s);
    c.seed = s;
  }
  if (doc.contains("limits")) {
    const auto& l = doc.at("limits");
    check_keys(l, {"max_rewrites", "max_depth", "iteration_cap"}, "limits");
    read_key(l, "max_rewrites", c.limits.max_rewrites);
    read_key(l, "max_depth", c.limits.max_depth);
    read_key(l, "iteration_cap", c.iteration_cap);
  }
  read_key(doc, "parallelism", c.parallelism);
  if (doc.contains("agent")) {
    const auto& a = doc.at("agent");
    check_keys(a, {"model", "temperature"}, "agent");
    read_key(a, "model", c.agent_model);
    read_key(a, "temperature", c.agent_temperature);
  }
  if (c.parallelism == 0) throw Error(ErrorCode::ConfigError, "parallelism must be >= 1");
  if (c.iteration_cap == 0) throw Error(ErrorCode::ConfigError, "iteration_cap must be >= 1");
  if (c.limits.max_rewrites == 0) throw Error(ErrorCode::ConfigError, "max_rewrites must be >= 1");
  return c;
}

RunConfig RunConfig::load(const fs::path& file) {
  json doc;
  try {
    doc = json::parse(read_text(file));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, file.string() + ": " + e.what(), file.string());
  }
  return from_json(doc, fs::absolute(file).parent_path());
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Rule-graph based library migration toolkit", "rulesynth"};
  app.require_subcommand(1);

  Common c_distill, c_infer, c_synth, c_apply, c_siblings;
  std::string triple, r0, script, target, use_case;
  std::vector<std::string> exclude;
  bool in_place = false;

  auto* distill = app.add_subcommand("distill", "Generate and validate migration triples");
  c_distill.attach(*distill);

  auto* infer = app.add_subcommand("infer", "Infer initial rules from a triple's diff");
  c_infer.attach(*infer);
  infer->add_option("triple", triple, "Selected-triple directory")->required();

  auto* synth = app.add_subcommand("synthesize", "Run the agent on one triple");
  c_synth.attach(*synth);
  synth->add_option("triple", triple, "Selected-triple directory")->required();
  synth->add_option("--r0", r0, "Initial rule file (inferred when absent)")->check(CLI::ExistingFile);

  auto* apply = app.add_subcommand("apply", "Apply a rule file to a file or directory");
  c_apply.attach(*apply);
  apply->add_option("script", script, "Rule file")->required()->check(CLI::ExistingFile);
  apply->add_option("target", target, "Python file or directory")->required()->check(CLI::ExistingPath);
  apply->add_flag("--in-place", in_place, "Overwrite changed files");

  auto* siblings = app.add_subcommand("eval-siblings", "Test a rule file on a use case's implementations");
  c_siblings.attach(*siblings);
  siblings->add_option("script", script, "Rule file")->required()->check(CLI::ExistingFile);
  siblings->add_option("use_case", use_case, "Use-case directory")->required();
  siblings->add_option("--exclude", exclude, "Implementation ids to skip");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (*distill) return cmd_distill(c_distill, out, err);
    if (*infer) return cmd_infer(c_infer, triple, out, err);
    if (*synth) return cmd_synthesize(c_synth, triple, r0, out, err);
    if (*apply) return cmd_apply(c_apply, script, target, in_place, out);
    if (*siblings) return cmd_eval_siblings(c_siblings, script, use_case, exclude, out);
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}

}  // namespace rulesynth
