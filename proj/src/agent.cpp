#include "rulesynth/agent.hpp"

#include <unistd.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

#include "rulesynth/assets.hpp"
#include "rulesynth/pattern.hpp"
#include "rulesynth/tokentree.hpp"

namespace rulesynth {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::size_t kOutputTail = 4000;

constexpr std::string_view kReask =
    "Your reply did not contain exactly one fenced ```json block of the form "
    "{\"action\": ..., \"payload\": {...}}. Reply again with a single action.";

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot read " + path.string(), path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string replace_all(std::string text, std::string_view from, std::string_view to) {
  for (auto pos = text.find(from); pos != std::string::npos; pos = text.find(from, pos + to.size())) {
    text.replace(pos, from.size(), to);
  }
  return text;
}

std::string join(const std::set<std::string>& items, std::string_view sep) {
  std::string out;
  for (const auto& s : items) {
    if (!out.empty()) out += sep;
    out += s;
  }
  return out;
}

std::string with_final_newline(std::string text) {
  if (!text.empty() && text.back() != '\n') text += '\n';
  return text;
}

const json& hint_catalog() {
  static const json catalog = json::parse(assets::get("hints/v1.json"));
  return catalog;
}

void append_hints(std::vector<std::string>& out, std::string_view key, const HintContext& ctx) {
  const auto& catalog = hint_catalog();
  auto it = catalog.find(std::string(key));
  if (it == catalog.end()) return;
  for (const auto& h : *it) {
    auto text = h.get<std::string>();
    text = replace_all(text, "{detail}", ctx.detail);
    text = replace_all(text, "{message}", ctx.message);
    text = replace_all(text, "{position}", ctx.position ? std::to_string(*ctx.position) : "?");
    out.push_back(std::move(text));
  }
}

// Strips run-to-run noise (timings, work directory names) from test output
// so that transcripts and follow-up prompts are reproducible.
std::string normalize_output(std::string_view output) {
  static const std::regex workdir(R"([^\s'"]*rulesynth-[A-Za-z0-9]{6})");
  static const std::regex timing(R"(in [0-9]+(\.[0-9]+)?s\b)");
  std::string out = std::regex_replace(std::string(output), workdir, "<workdir>");
  out = std::regex_replace(out, timing, "in <t>s");
  if (out.size() > kOutputTail) out = "...\n" + out.substr(out.size() - kOutputTail);
  return out;
}

bool has_scoped_edges(const RuleGraph& g) {
  for (const auto& e : g.edges()) {
    if (e.scope == ScopeLabel::Function || e.scope == ScopeLabel::Class) return true;
  }
  return false;
}

FileMap task_files(const SynthesisTask& task, const AgentEnv& env) {
  return {{env.sandbox.implementation_file, task.triple.source}};
}

std::string run_graph(const RuleGraph& g, const SynthesisTask& task, const AgentEnv& env,
                      std::size_t* rewrites = nullptr) {
  auto result = execute(g, task_files(task, env), *env.profile, env.limits);
  if (rewrites) *rewrites = result.log.count();
  return result.files.at(env.sandbox.implementation_file);
}

Observation rewrite_observation(const RuleGraph& g, const SynthesisTask& task, const AgentEnv& env) {
  std::size_t rewrites = 0;
  auto migrated = run_graph(g, task, env, &rewrites);
  Observation obs;
  if (migrated == task.triple.source) {
    obs.kind = ObservationKind::NoChange;
    obs.payload = "The program ran with " + std::to_string(rewrites) +
                  " rewrites and the source is unchanged.";
    HintContext ctx;
    ctx.no_change = true;
    ctx.has_seed = g.has_seed();
    ctx.scoped_edges = has_scoped_edges(g);
    obs.hints = render_hints(ctx);
    return obs;
  }
  obs.kind = ObservationKind::RewriteResult;
  obs.payload = "rewrites: " + std::to_string(rewrites) + "\n" +
                unified_diff(task.triple.source, migrated);
  return obs;
}

// One left-to-right pass of a single rule; no fixpoint, no edges.
Observation isolated_observation(const Rule& rule, const SynthesisTask& task, const AgentEnv& env) {
  const auto& source = task.triple.source;
  Observation obs;
  if (!rule.replace) {
    auto matches = find_matches(rule.match, lex(source, *env.profile));
    if (matches.empty()) {
      obs.kind = ObservationKind::NoChange;
      obs.payload = "The anchor rule matches nothing.";
      HintContext ctx;
      ctx.no_change = true;
      obs.hints = render_hints(ctx);
      return obs;
    }
    obs.kind = ObservationKind::RewriteResult;
    obs.payload = "anchor matches: " + std::to_string(matches.size()) + "\n";
    for (const auto& m : matches) {
      obs.payload += "line " + std::to_string(1 + std::count(source.begin(), source.begin() + m.site.begin, '\n')) +
                     ": " + source.substr(m.site.begin, m.site.end - m.site.begin) + "\n";
    }
    return obs;
  }
  auto result = apply_rewrite(rule.match, *rule.replace, source, *env.profile);
  if (result.text == source) {
    obs.kind = ObservationKind::NoChange;
    obs.payload = "The rule made " + std::to_string(result.count) + " rewrites and the source is unchanged.";
    HintContext ctx;
    ctx.no_change = true;
    obs.hints = render_hints(ctx);
    return obs;
  }
  obs.kind = ObservationKind::RewriteResult;
  obs.payload = "rewrites: " + std::to_string(result.count) + "\n" + unified_diff(source, result.text);
  return obs;
}

Observation test_observation(const RuleGraph& g, const SynthesisTask& task, const AgentEnv& env) {
  auto migrated = run_graph(g, task, env);
  auto report = run_tests(migrated, task.triple.tests, env.sandbox);
  FileMap files{{env.sandbox.implementation_file, migrated}};
  auto markers = remaining_markers(files, task.pair.source_markers, *env.profile);

  Observation obs;
  obs.kind = ObservationKind::TestResult;
  obs.tests_passed = report.passed;
  obs.success = check_success(files, task.pair.source_markers, report, *env.profile);
  std::string text = "tests: ";
  text += report.passed ? "passed" : "failed";
  text += " (exit " + std::to_string(report.exit_code) + ")\n";
  text += "remaining source-library names: " + (markers.empty() ? "none" : join(markers, ", ")) + "\n";
  text += "\n" + with_final_newline(normalize_output(report.output));
  text += "\n" + unified_diff(task.triple.source, migrated);
  obs.payload = std::move(text);

  HintContext ctx;
  ctx.tests_failed = !report.passed;
  ctx.remaining_markers = markers;
  ctx.has_seed = g.has_seed();
  obs.hints = render_hints(ctx);
  return obs;
}

const json& require(const json& payload, const char* key, json::value_t type) {
  if (!payload.contains(key) || payload.at(key).type() != type) {
    throw Error(ErrorCode::ParseError,
                std::string("payload field '") + key + "' is missing or has the wrong type", key);
  }
  return payload.at(key);
}

void apply_edit(RuleGraph& g, const json& edit) {
  if (!edit.is_object() || !edit.contains("op") || !edit.at("op").is_string()) {
    throw Error(ErrorCode::ParseError, "each edit needs a string field 'op'");
  }
  const auto op = edit.at("op").get<std::string>();
  auto name = [&] { return require(edit, "name", json::value_t::string).get<std::string>(); };
  auto edge = [&] {
    json e = edit;
    e.erase("op");
    return edge_from_json(e);
  };
  if (op == "remove_rule") {
    auto n = name();
    if (!g.remove_rule(n)) throw Error(ErrorCode::DanglingEdge, "no rule named '" + n + "'", n);
  } else if (op == "remove_edge") {
    auto e = edge();
    if (!g.remove_edge(e)) {
      throw Error(ErrorCode::DanglingEdge, "no edge " + e.from + " -> " + e.to, e.from);
    }
  } else if (op == "add_edge") {
    g.add_edge(edge());
  } else if (op == "upsert_rule") {
    g.upsert_rule(rule_from_json(require(edit, "rule", json::value_t::object)));
  } else if (op == "set_seed") {
    auto n = name();
    Rule* r = g.find(n);
    if (!r) throw Error(ErrorCode::DanglingEdge, "no rule named '" + n + "'", n);
    r->is_seed = require(edit, "seed", json::value_t::boolean).get<bool>();
  } else {
    throw Error(ErrorCode::ParseError, "unknown edit op '" + op + "'", op);
  }
}

Observation dispatch(const AgentAction& action, RuleGraph& graph, const SynthesisTask& task,
                     const AgentEnv& env) {
  const json& p = action.payload;
  switch (action.kind) {
    case ActionKind::RefineRule: {
      Rule rule = rule_from_json(require(p, "rule", json::value_t::object));
      bool isolated = false;
      if (p.contains("isolated")) isolated = require(p, "isolated", json::value_t::boolean).get<bool>();
      if (isolated) return isolated_observation(rule, task, env);
      RuleGraph next = graph;
      next.upsert_rule(std::move(rule));
      next.validate(false);
      auto obs = rewrite_observation(next, task, env);
      graph = std::move(next);
      return obs;
    }
    case ActionKind::AddRules: {
      RuleGraph next = graph;
      if (p.contains("rules")) {
        for (const auto& r : require(p, "rules", json::value_t::array)) next.add_rule(rule_from_json(r));
      }
      if (p.contains("edges")) {
        for (const auto& e : require(p, "edges", json::value_t::array)) next.add_edge(edge_from_json(e));
      }
      next.validate(false);
      auto obs = rewrite_observation(next, task, env);
      graph = std::move(next);
      return obs;
    }
    case ActionKind::ReviseGraph: {
      RuleGraph next;
      if (p.contains("graph")) {
        next = graph_from_json(require(p, "graph", json::value_t::object), false);
      } else {
        next = graph;
        for (const auto& e : require(p, "edits", json::value_t::array)) apply_edit(next, e);
      }
      next.validate(false);
      auto obs = rewrite_observation(next, task, env);
      graph = std::move(next);
      return obs;
    }
    case ActionKind::TestMigration:
      return test_observation(graph, task, env);
  }
  throw Error(ErrorCode::ProtocolError, "unknown action");
}

std::string temp_script_path() {
  std::string templ = (fs::temp_directory_path() / "rulesynth-script-XXXXXX.json").string();
  int fd = mkstemps(templ.data(), 5);
  if (fd < 0) throw Error(ErrorCode::IoError, "cannot create temporary script file");
  ::close(fd);
  return templ;
}

}  // namespace

SynthesisTask load_task(const fs::path& dir) {
  SynthesisTask task;
  json meta;
  try {
    meta = json::parse(read_file(dir / "triple.json"));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, "triple.json: " + std::string(e.what()));
  }
  auto str = [&](const char* key) {
    if (!meta.contains(key) || !meta.at(key).is_string()) {
      throw Error(ErrorCode::ParseError, std::string("triple.json lacks '") + key + "'", key);
    }
    return meta.at(key).get<std::string>();
  };
  auto& t = task.triple;
  t.use_case_id = str("use_case");
  t.impl_id = str("implementation");
  t.test_id = str("test");
  t.migration_id = str("migration");
  if (meta.contains("source_coverage") && meta["source_coverage"].is_number()) {
    t.source_coverage = meta["source_coverage"].get<double>();
  }
  if (meta.contains("migration_coverage") && meta["migration_coverage"].is_number()) {
    t.migration_coverage = meta["migration_coverage"].get<double>();
  }
  t.source = read_file(dir / "source.py");
  t.tests = read_file(dir / "test.py");
  t.migration = read_file(dir / "migration.py");
  t.status = TripleStatus::Selected;
  task.id = t.use_case_id + "/" + t.impl_id;
  task.pair.source = str("source_library");
  task.pair.target = str("target_library");
  if (meta.contains("source_markers")) {
    task.pair.source_markers = meta["source_markers"].get<std::set<std::string>>();
  }
  if (task.pair.source_markers.empty()) task.pair.source_markers = {task.pair.source};
  return task;
}

std::string_view to_string(ActionKind kind) {
  switch (kind) {
    case ActionKind::RefineRule: return "refine_rule";
    case ActionKind::AddRules: return "add_rules";
    case ActionKind::ReviseGraph: return "revise_graph";
    case ActionKind::TestMigration: return "test_migration";
  }
  return "?";
}

std::optional<ActionKind> parse_action_kind(std::string_view name) {
  for (auto k : {ActionKind::RefineRule, ActionKind::AddRules, ActionKind::ReviseGraph,
                 ActionKind::TestMigration}) {
    if (to_string(k) == name) return k;
  }
  return std::nullopt;
}

json AgentAction::to_json() const { return {{"action", to_string(kind)}, {"payload", payload}}; }

std::optional<AgentAction> parse_action(std::string_view text) {
  std::vector<AgentAction> found;
  std::size_t pos = 0;
  while (true) {
    auto open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    auto body = text.find('\n', open);
    if (body == std::string_view::npos) break;
    auto close = text.find("```", body + 1);
    if (close == std::string_view::npos) break;
    pos = close + 3;
    auto doc = json::parse(text.substr(body + 1, close - body - 1), nullptr, false);
    if (!doc.is_object() || !doc.contains("action") || !doc["action"].is_string()) continue;
    auto kind = parse_action_kind(doc["action"].get<std::string>());
    if (!kind) continue;
    AgentAction a{*kind, doc.value("payload", json::object())};
    if (!a.payload.is_object()) continue;
    found.push_back(std::move(a));
  }
  if (found.size() != 1) return std::nullopt;
  return found.front();
}

std::string_view to_string(ObservationKind kind) {
  switch (kind) {
    case ObservationKind::RewriteResult: return "rewrite_result";
    case ObservationKind::EngineError: return "engine_error";
    case ObservationKind::NoChange: return "no_change";
    case ObservationKind::TestResult: return "test_result";
  }
  return "?";
}

json Observation::to_json() const {
  json j = {{"kind", to_string(kind)}, {"payload", payload}, {"hints", hints}};
  if (tests_passed) j["tests_passed"] = *tests_passed;
  if (success) j["success"] = *success;
  return j;
}

std::string Observation::render() const {
  std::string out = "Observation: " + std::string(to_string(kind)) + "\n\n" + with_final_newline(payload);
  if (!hints.empty()) {
    out += "\nLikely causes:\n";
    for (const auto& h : hints) out += "- " + h + "\n";
  }
  return out;
}

std::vector<std::string> render_hints(const HintContext& ctx) {
  std::vector<std::string> out;
  if (ctx.error) {
    auto before = out.size();
    append_hints(out, to_string(*ctx.error), ctx);
    if (out.size() == before) append_hints(out, "generic", ctx);
  }
  if (ctx.no_change) append_hints(out, ctx.has_seed ? "no_change" : "no_seed", ctx);
  if (!ctx.no_change && !ctx.has_seed && !ctx.error) append_hints(out, "no_seed", ctx);
  if (ctx.scoped_edges) append_hints(out, "scope_fallback", ctx);
  if (!ctx.remaining_markers.empty()) {
    HintContext m = ctx;
    m.detail = join(ctx.remaining_markers, ", ");
    append_hints(out, "markers_remaining", m);
  }
  if (ctx.tests_failed) append_hints(out, "tests_failed", ctx);
  return out;
}

std::string unified_diff(std::string_view before, std::string_view after) {
  std::string out;
  for (const auto& h : diff_hunks(before, after)) {
    out += "@@ -" + std::to_string(h.source_begin + 1) + "," + std::to_string(h.deleted.size()) +
           " +" + std::to_string(h.target_begin + 1) + "," + std::to_string(h.added.size()) + " @@\n";
    for (const auto& l : h.deleted) out += "-" + l + "\n";
    for (const auto& l : h.added) out += "+" + l + "\n";
  }
  return out;
}

Observation execute_action(const AgentAction& action, RuleGraph& graph, const SynthesisTask& task,
                           const AgentEnv& env) {
  try {
    return dispatch(action, graph, task, env);
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::RunnerNotFound:
      case ErrorCode::IoError:
      case ErrorCode::ClientError:
        throw;
      default: break;
    }
    HintContext ctx;
    ctx.error = e.code();
    ctx.message = e.what();
    ctx.detail = e.detail();
    ctx.position = e.position();
    Observation obs;
    obs.kind = ObservationKind::EngineError;
    obs.payload = std::string(to_string(e.code())) + ": " + e.what() + "\nThe graph is unchanged.";
    obs.hints = render_hints(ctx);
    return obs;
  } catch (const json::exception& e) {
    HintContext ctx;
    ctx.error = ErrorCode::ParseError;
    ctx.message = e.what();
    Observation obs;
    obs.kind = ObservationKind::EngineError;
    obs.payload = std::string("ParseError: ") + e.what() + "\nThe graph is unchanged.";
    obs.hints = render_hints(ctx);
    return obs;
  }
}

std::string_view to_string(Outcome outcome) {
  switch (outcome) {
    case Outcome::Success: return "success";
    case Outcome::Exhausted: return "exhausted";
    case Outcome::Aborted: return "aborted";
  }
  return "?";
}

std::string AgentTranscript::to_jsonl() const {
  std::string out;
  for (const auto& it : iterations) {
    json rec = {{"type", "iteration"},
                {"triple", triple_id},
                {"index", it.index},
                {"prompt_digest", it.prompt_digest},
                {"completion", it.completion},
                {"action", it.action.to_json()},
                {"observation", it.observation.to_json()},
                {"graph", it.graph}};
    out += rec.dump() + "\n";
  }
  json result = {{"type", "result"},
                 {"triple", triple_id},
                 {"outcome", to_string(outcome)},
                 {"reason", reason},
                 {"iterations", iteration_count()},
                 {"graph", final_graph}};
  out += result.dump() + "\n";
  return out;
}

std::string system_prompt() { return std::string(assets::get("prompts/v1/agent_system.md")); }

std::string task_prompt(const SynthesisTask& task, const RuleGraph& initial) {
  return render_template(assets::get("prompts/v1/agent_task.md"),
                         {{"source_library", task.pair.source},
                          {"target_library", task.pair.target},
                          {"markers", join(task.pair.source_markers, ", ")},
                          {"source", with_final_newline(task.triple.source)},
                          {"migration", with_final_newline(task.triple.migration)},
                          {"tests", with_final_newline(task.triple.tests)},
                          {"rules", initial.to_json_text()}});
}

Verification verify_script(const fs::path& script, const SynthesisTask& task, const AgentEnv& env) {
  Verification v;
  auto graph = load_graph(read_file(script), true);
  v.migrated = run_graph(graph, task, env);
  v.report = run_tests(v.migrated, task.triple.tests, env.sandbox);
  FileMap files{{env.sandbox.implementation_file, v.migrated}};
  v.remaining_markers = remaining_markers(files, task.pair.source_markers, *env.profile);
  v.success = check_success(files, task.pair.source_markers, v.report, *env.profile);
  return v;
}

SynthesisResult synthesize(const SynthesisTask& task, const std::vector<AtomicRule>& r0,
                           ChatClient& client, const AgentEnv& env) {
  return synthesize(task, ruleset_to_graph(r0), client, env);
}

SynthesisResult synthesize(const SynthesisTask& task, RuleGraph initial, ChatClient& client,
                           const AgentEnv& env) {
  if (task.triple.status != TripleStatus::Selected) {
    throw Error(ErrorCode::ConfigError, "synthesis needs a selected triple", task.id);
  }
  if (env.cap == 0) throw Error(ErrorCode::ConfigError, "iteration cap must be at least 1");

  SynthesisResult result{std::move(initial), {}};
  auto& graph = result.graph;
  auto& transcript = result.transcript;
  transcript.triple_id = task.id;

  ChatRequest request;
  request.model = env.model;
  request.temperature = env.temperature;
  request.seed = env.seed;
  request.messages = {{"system", system_prompt()}, {"user", task_prompt(task, graph)}};

  auto finish = [&](Outcome outcome, std::string reason) {
    transcript.outcome = outcome;
    transcript.reason = std::move(reason);
    transcript.final_graph = graph.to_json();
    return std::move(result);
  };

  for (std::size_t turn = 0; turn < env.cap; ++turn) {
    AgentIteration iter;
    iter.index = turn;
    std::optional<AgentAction> action;
    try {
      iter.prompt_digest = request.digest();
      iter.completion = client.complete(request);
      action = parse_action(iter.completion);
      if (!action) {
        request.messages.push_back({"assistant", iter.completion});
        request.messages.push_back({"user", std::string(kReask)});
        iter.prompt_digest = request.digest();
        iter.completion = client.complete(request);
        action = parse_action(iter.completion);
        if (!action) {
          throw Error(ErrorCode::ProtocolError, "no parseable action after a re-ask");
        }
      }
    } catch (const Error& e) {
      if (e.code() != ErrorCode::ClientError && e.code() != ErrorCode::ProtocolError) throw;
      return finish(Outcome::Aborted, std::string(to_string(e.code())) + ": " + e.what());
    }

    iter.action = *action;
    iter.observation = execute_action(*action, graph, task, env);

    bool done = false;
    if (iter.observation.kind == ObservationKind::TestResult && iter.observation.success.value_or(false)) {
      fs::path script = env.script_path ? *env.script_path : fs::path(temp_script_path());
      if (script.has_parent_path()) fs::create_directories(script.parent_path());
      {
        std::ofstream out(script, std::ios::binary | std::ios::trunc);
        out << graph.to_json_text();
      }
      try {
        done = verify_script(script, task, env).success;
      } catch (const Error&) {
        done = false;
      }
      if (!env.script_path) fs::remove(script);
      if (!done) {
        iter.observation.success = false;
        iter.observation.payload += "\nRe-running the saved program did not reproduce a passing result.\n";
      }
    }

    iter.graph = graph.to_json();
    request.messages.push_back({"assistant", iter.completion});
    request.messages.push_back({"user", iter.observation.render()});
    transcript.iterations.push_back(std::move(iter));
    if (done) return finish(Outcome::Success, "");
  }
  return finish(Outcome::Exhausted, "iteration cap reached");
}

}  // namespace rulesynth
