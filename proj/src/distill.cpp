#include "rulesynth/distill.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "rulesynth/assets.hpp"
#include "rulesynth/error.hpp"

namespace rulesynth {
namespace fs = std::filesystem;

namespace {

std::string numbered(std::string_view prefix, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu", i);
  return std::string(prefix) + "_" + buf;
}

std::string prompt_asset(std::string_view name) {
  return std::string(assets::get("prompts/v1/" + std::string(name) + ".md"));
}

template <typename T>
T json_get(const nlohmann::json& doc, const char* key, T fallback) {
  if (!doc.contains(key)) return fallback;
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, std::string("config key '") + key + "': " + e.what(), key);
  }
}

void check_keys(const nlohmann::json& doc, std::initializer_list<std::string_view> allowed,
                std::string_view what) {
  if (!doc.is_object()) throw Error(ErrorCode::ConfigError, std::string(what) + " must be an object");
  for (const auto& [key, _] : doc.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw Error(ErrorCode::ConfigError, "unknown " + std::string(what) + " key '" + key + "'", key);
    }
  }
}

}  // namespace

LibraryPair LibraryPair::from_json(const nlohmann::json& doc) {
  check_keys(doc, {"source", "target", "source_markers", "target_markers"}, "library pair");
  LibraryPair p;
  p.source = json_get<std::string>(doc, "source", "");
  p.target = json_get<std::string>(doc, "target", "");
  p.source_markers = json_get<std::set<std::string>>(doc, "source_markers", {});
  p.target_markers = json_get<std::set<std::string>>(doc, "target_markers", {});
  if (p.source.empty() || p.target.empty() || p.source == p.target) {
    throw Error(ErrorCode::ConfigError, "library pair needs two distinct, non-empty names");
  }
  if (p.source_markers.empty()) p.source_markers = {p.source};
  return p;
}

nlohmann::json LibraryPair::to_json() const {
  return {{"source", source},
          {"target", target},
          {"source_markers", source_markers},
          {"target_markers", target_markers}};
}

DistillConfig DistillConfig::from_json(const nlohmann::json& doc, DistillConfig c) {
  check_keys(doc,
             {"use_cases", "seed_use_cases", "few_shot", "implementations", "tests", "migrations",
              "coverage_threshold", "retry_budget", "model", "temperature"},
             "distill");
  c.use_cases = json_get(doc, "use_cases", c.use_cases);
  c.seed_use_cases = json_get(doc, "seed_use_cases", c.seed_use_cases);
  c.few_shot = json_get(doc, "few_shot", c.few_shot);
  c.implementations = json_get(doc, "implementations", c.implementations);
  c.tests = json_get(doc, "tests", c.tests);
  c.migrations = json_get(doc, "migrations", c.migrations);
  c.coverage_threshold = json_get(doc, "coverage_threshold", c.coverage_threshold);
  c.retry_budget = json_get(doc, "retry_budget", c.retry_budget);
  c.model = json_get(doc, "model", c.model);
  c.temperature = json_get(doc, "temperature", c.temperature);
  c.validate();
  return c;
}

DistillConfig DistillConfig::from_json(const nlohmann::json& doc) {
  return from_json(doc, DistillConfig{});
}

nlohmann::json DistillConfig::to_json() const {
  return {{"use_cases", use_cases},         {"seed_use_cases", seed_use_cases},
          {"few_shot", few_shot},           {"implementations", implementations},
          {"tests", tests},                 {"migrations", migrations},
          {"coverage_threshold", coverage_threshold},
          {"retry_budget", retry_budget},   {"model", model},
          {"temperature", temperature}};
}

void DistillConfig::validate() const {
  for (auto n : {use_cases, seed_use_cases, few_shot, implementations, tests, migrations}) {
    if (n < 1) throw Error(ErrorCode::ConfigError, "distill counts must be >= 1");
  }
  if (!(coverage_threshold > 0.0 && coverage_threshold <= 1.0)) {
    throw Error(ErrorCode::ConfigError, "coverage_threshold must lie in (0, 1]");
  }
}

std::string_view to_string(TripleStatus status) {
  switch (status) {
    case TripleStatus::Raw: return "raw";
    case TripleStatus::ImplValid: return "impl_valid";
    case TripleStatus::Valid: return "valid";
    case TripleStatus::Selected: return "selected";
  }
  return "raw";
}

std::string Sampler::ask(const std::string& prompt, const std::string& key) {
  ChatRequest req;
  req.model = cfg_.model;
  req.temperature = cfg_.temperature;
  req.messages = {{"user", prompt}};
  const auto h = sha256_hex(std::to_string(cfg_.seed) + "/" + key);
  req.seed = std::stoull(h.substr(0, 12), nullptr, 16);
  return client_.complete(req);
}

std::string render_template(std::string_view tpl, const std::map<std::string, std::string>& vars) {
  std::string out;
  std::size_t i = 0;
  while (i < tpl.size()) {
    auto open = tpl.find("{{", i);
    if (open == std::string_view::npos) {
      out.append(tpl.substr(i));
      break;
    }
    auto close = tpl.find("}}", open + 2);
    if (close == std::string_view::npos) {
      throw Error(ErrorCode::ConfigError, "unterminated placeholder in prompt template");
    }
    std::string name(tpl.substr(open + 2, close - open - 2));
    auto it = vars.find(name);
    if (it == vars.end()) {
      throw Error(ErrorCode::ConfigError, "prompt template uses unknown placeholder {{" + name + "}}",
                  name);
    }
    out.append(tpl.substr(i, open - i));
    out += it->second;
    i = close + 2;
  }
  return out;
}

std::optional<std::string> extract_code_block(std::string_view completion) {
  auto open = completion.find("```");
  if (open == std::string_view::npos) return std::nullopt;
  auto body = completion.find('\n', open);
  if (body == std::string_view::npos) return std::nullopt;
  ++body;
  auto close = completion.find("```", body);
  if (close == std::string_view::npos) return std::nullopt;
  std::string code(completion.substr(body, close - body));
  if (code.find_first_not_of(" \t\r\n") == std::string::npos) return std::nullopt;
  if (code.back() != '\n') code += '\n';
  return code;
}

std::optional<UseCase> parse_use_case(std::string_view completion) {
  auto open = completion.find('{');
  auto close = completion.rfind('}');
  if (open == std::string_view::npos || close == std::string_view::npos || close < open) {
    return std::nullopt;
  }
  auto doc = nlohmann::json::parse(completion.substr(open, close - open + 1), nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) return std::nullopt;
  if (!doc.contains("title") || !doc["title"].is_string() || !doc.contains("description") ||
      !doc["description"].is_string()) {
    return std::nullopt;
  }
  UseCase uc;
  uc.title = doc["title"].get<std::string>();
  uc.description = doc["description"].get<std::string>();
  if (uc.title.empty() || uc.description.find_first_not_of(" \t\n") == std::string::npos) {
    return std::nullopt;
  }
  return uc;
}

std::vector<std::size_t> sample_indices(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  // Fisher-Yates prefix with rejection sampling, so draws are identical on
  // every standard library.
  auto bounded = [&](std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x = 0;
    do {
      x = rng();
    } while (x >= limit);
    return x % bound;
  };
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  k = std::min(k, n);
  for (std::size_t i = 0; i < k; ++i) {
    std::swap(idx[i], idx[i + bounded(n - i)]);
  }
  idx.resize(k);
  return idx;
}

std::vector<UseCase> generate_use_cases(const LibraryPair& pair, ChatClient& client,
                                        const DistillConfig& cfg) {
  Sampler sampler(client, cfg);
  std::mt19937_64 rng(cfg.seed);
  std::vector<UseCase> out;
  std::size_t retries = 0;
  std::size_t attempt = 0;
  while (out.size() < cfg.use_cases) {
    const auto slot = out.size();
    std::string prompt;
    if (slot < cfg.seed_use_cases) {
      std::string prior;
      for (const auto& uc : out) prior += "- " + uc.title + "\n";
      if (prior.empty()) prior = "(none yet)\n";
      prompt = render_template(prompt_asset("use_case_seed"),
                               {{"source", pair.source},
                                {"target", pair.target},
                                {"index", std::to_string(slot + 1)},
                                {"prior_titles", prior}});
    } else {
      std::string examples;
      for (auto i : sample_indices(rng, out.size(), cfg.few_shot)) {
        examples += "Title: " + out[i].title + "\nDescription: " + out[i].description + "\n\n";
      }
      prompt = render_template(prompt_asset("use_case_fewshot"), {{"source", pair.source},
                                                                   {"target", pair.target},
                                                                   {"examples", examples}});
    }
    auto completion =
        sampler.ask(prompt, "use_case/" + std::to_string(slot) + "/" + std::to_string(attempt));
    auto uc = parse_use_case(completion);
    if (!uc) {
      if (retries >= cfg.retry_budget) {
        throw Error(ErrorCode::RetryBudgetExhausted,
                    "use-case generation exceeded the retry budget of " +
                        std::to_string(cfg.retry_budget));
      }
      ++retries;
      ++attempt;
      continue;
    }
    uc->id = numbered("uc", slot);
    out.push_back(std::move(*uc));
    attempt = 0;
  }
  return out;
}

namespace {

std::vector<Artifact> sample_code(Sampler& sampler, const std::string& prompt, std::size_t count,
                                  std::string_view id_prefix, const std::string& key_prefix) {
  std::vector<Artifact> out;
  for (std::size_t i = 0; i < count; ++i) {
    auto code = extract_code_block(sampler.ask(prompt, key_prefix + "/" + std::to_string(i)));
    if (code) out.push_back(Artifact{numbered(id_prefix, i), std::move(*code)});
  }
  return out;
}

}  // namespace

std::vector<Artifact> generate_implementations(const UseCase& uc, const LibraryPair& pair,
                                               ChatClient& client, const DistillConfig& cfg) {
  Sampler sampler(client, cfg);
  auto prompt = render_template(prompt_asset("implementation"), {{"title", uc.title},
                                                                 {"description", uc.description},
                                                                 {"source", pair.source}});
  return sample_code(sampler, prompt, cfg.implementations, "impl", "impl/" + uc.id);
}

std::vector<Artifact> generate_tests(const UseCase& uc, const Artifact& implementation,
                                     ChatClient& client, const DistillConfig& cfg) {
  Sampler sampler(client, cfg);
  auto prompt = render_template(prompt_asset("tests"), {{"title", uc.title},
                                                        {"description", uc.description},
                                                        {"implementation", implementation.text}});
  return sample_code(sampler, prompt, cfg.tests, "test", "test/" + uc.id + "/" + implementation.id);
}

std::vector<Artifact> generate_migrations(const UseCase& uc, const Artifact& implementation,
                                          const LibraryPair& pair, ChatClient& client,
                                          const DistillConfig& cfg) {
  Sampler sampler(client, cfg);
  auto prompt = render_template(prompt_asset("migration"), {{"title", uc.title},
                                                            {"description", uc.description},
                                                            {"implementation", implementation.text},
                                                            {"source", pair.source},
                                                            {"target", pair.target}});
  return sample_code(sampler, prompt, cfg.migrations, "mig",
                     "migration/" + uc.id + "/" + implementation.id);
}

std::vector<MigrationTriple> ValidationResult::selected() const {
  std::vector<MigrationTriple> out;
  for (const auto& t : triples) {
    if (t.status == TripleStatus::Selected) out.push_back(t);
  }
  return out;
}

ValidationResult validate_and_select(const std::vector<RawUseCase>& raw,
                                     const SandboxConfig& sandbox, const DistillConfig& cfg,
                                     std::size_t parallelism) {
  ValidationResult result;

  // Stage A: every implementation against each of its test files.
  struct PairRef {
    const RawUseCase* uc;
    const Artifact* impl;
    const Artifact* test;
  };
  std::vector<PairRef> pair_refs;
  std::vector<TestJob> jobs;
  for (const auto& r : raw) {
    for (const auto& impl : r.implementations) {
      auto it = r.tests.find(impl.id);
      if (it == r.tests.end()) continue;
      for (const auto& test : it->second) {
        pair_refs.push_back({&r, &impl, &test});
        jobs.push_back({impl.text, test.text});
      }
    }
  }
  auto stage_a = run_tests_batch(jobs, sandbox, parallelism);
  std::vector<std::pair<PairRef, std::optional<double>>> survivors;
  for (std::size_t i = 0; i < pair_refs.size(); ++i) {
    const auto& ref = pair_refs[i];
    result.pairs.push_back(PairResult{ref.uc->use_case.id, ref.impl->id, ref.test->id,
                                      stage_a[i].passed, stage_a[i].coverage});
    if (stage_a[i].passed) survivors.emplace_back(ref, stage_a[i].coverage);
  }

  // Stage B: every migration attempt against each surviving test file.
  jobs.clear();
  for (const auto& [ref, cov] : survivors) {
    auto it = ref.uc->migrations.find(ref.impl->id);
    if (it == ref.uc->migrations.end()) continue;
    for (const auto& mig : it->second) {
      MigrationTriple t;
      t.use_case_id = ref.uc->use_case.id;
      t.impl_id = ref.impl->id;
      t.test_id = ref.test->id;
      t.migration_id = mig.id;
      t.source = ref.impl->text;
      t.tests = ref.test->text;
      t.migration = mig.text;
      t.source_coverage = cov;
      t.status = TripleStatus::ImplValid;
      result.triples.push_back(std::move(t));
      jobs.push_back({mig.text, ref.test->text});
    }
  }
  auto stage_b = run_tests_batch(jobs, sandbox, parallelism);

  // Stage C: coverage filter on both sides.
  const auto meets = [&](const std::optional<double>& c) {
    return c.has_value() && *c >= cfg.coverage_threshold;
  };
  for (std::size_t i = 0; i < result.triples.size(); ++i) {
    auto& t = result.triples[i];
    t.migration_coverage = stage_b[i].coverage;
    if (stage_b[i].passed && meets(t.source_coverage) && meets(t.migration_coverage)) {
      t.status = TripleStatus::Valid;
    }
  }

  // Selection: one triple per implementation.
  std::map<std::pair<std::string, std::string>, std::size_t> best;
  auto better = [](const MigrationTriple& a, const MigrationTriple& b) {
    if (*a.migration_coverage != *b.migration_coverage) {
      return *a.migration_coverage > *b.migration_coverage;
    }
    if (*a.source_coverage != *b.source_coverage) return *a.source_coverage > *b.source_coverage;
    if (a.test_id != b.test_id) return a.test_id < b.test_id;
    return a.migration_id < b.migration_id;
  };
  for (std::size_t i = 0; i < result.triples.size(); ++i) {
    const auto& t = result.triples[i];
    if (t.status != TripleStatus::Valid) continue;
    auto key = std::make_pair(t.use_case_id, t.impl_id);
    auto it = best.find(key);
    if (it == best.end() || better(t, result.triples[it->second])) best[key] = i;
  }
  for (const auto& [_, i] : best) result.triples[i].status = TripleStatus::Selected;
  return result;
}

namespace {

void write_text(const fs::path& path, std::string_view text) {
  fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path.string());
}

nlohmann::json coverage_json(const std::optional<double>& c) {
  return c ? nlohmann::json(*c) : nlohmann::json(nullptr);
}

void prepare_out_dir(const fs::path& dir) {
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!fs::exists(dir / "manifest.jsonl")) {
      throw Error(ErrorCode::ConfigError,
                  "output directory " + dir.string() + " is not empty and holds no dataset");
    }
    fs::remove_all(dir);
  }
  fs::create_directories(dir);
}

}  // namespace

DistillSummary run_distill(const LibraryPair& pair, ChatClient& client, const DistillConfig& cfg,
                           const SandboxConfig& sandbox, const fs::path& out_dir,
                           std::size_t parallelism) {
  cfg.validate();
  prepare_out_dir(out_dir);

  std::vector<RawUseCase> raw;
  for (auto& uc : generate_use_cases(pair, client, cfg)) {
    RawUseCase r;
    r.use_case = std::move(uc);
    r.implementations = generate_implementations(r.use_case, pair, client, cfg);
    for (const auto& impl : r.implementations) {
      r.tests[impl.id] = generate_tests(r.use_case, impl, client, cfg);
      r.migrations[impl.id] = generate_migrations(r.use_case, impl, pair, client, cfg);
    }
    raw.push_back(std::move(r));
  }

  auto validation = validate_and_select(raw, sandbox, cfg, parallelism);

  DistillSummary summary;
  std::ofstream manifest(out_dir / "manifest.jsonl", std::ios::binary);
  auto record = [&](nlohmann::json ids, std::string_view role, TripleStatus status,
                    nlohmann::json coverage, const std::string& path) {
    nlohmann::json rec = {{"ids", std::move(ids)},
                          {"role", role},
                          {"status", to_string(status)},
                          {"coverage", std::move(coverage)},
                          {"path", path.empty() ? nlohmann::json(nullptr) : nlohmann::json(path)}};
    manifest << rec.dump() << '\n';
  };

  for (const auto& r : raw) {
    const auto& uc = r.use_case;
    const fs::path ucdir = out_dir / uc.id;
    write_text(ucdir / "use_case.json",
               nlohmann::json({{"id", uc.id}, {"title", uc.title}, {"description", uc.description}})
                       .dump(2) +
                   "\n");

    // Highest status reached by anything built on an artifact.
    std::map<std::string, TripleStatus> reached;
    auto bump = [&](const std::string& key, TripleStatus s) {
      auto& cur = reached.try_emplace(key, TripleStatus::Raw).first->second;
      cur = std::max(cur, s);
    };
    for (const auto& p : validation.pairs) {
      if (p.use_case_id != uc.id || !p.passed) continue;
      bump(p.impl_id, TripleStatus::ImplValid);
      bump(p.impl_id + "/" + p.test_id, TripleStatus::ImplValid);
    }
    for (const auto& t : validation.triples) {
      if (t.use_case_id != uc.id) continue;
      bump(t.impl_id, t.status);
      bump(t.impl_id + "/" + t.test_id, t.status);
      bump(t.impl_id + "/" + t.migration_id, t.status);
      bump("", t.status);
    }
    auto status_of = [&](const std::string& key) {
      auto it = reached.find(key);
      return it == reached.end() ? TripleStatus::Raw : it->second;
    };

    record({{"use_case", uc.id}}, "use_case", status_of(""), nullptr, uc.id + "/use_case.json");
    summary.use_cases++;
    bool implemented = false;
    bool migrated = false;
    for (const auto& impl : r.implementations) {
      const auto rel = uc.id + "/implementations/" + impl.id + ".py";
      write_text(out_dir / rel, impl.text);
      record({{"use_case", uc.id}, {"implementation", impl.id}}, "implementation",
             status_of(impl.id), nullptr, rel);
      summary.implementations++;
      implemented = implemented || status_of(impl.id) >= TripleStatus::ImplValid;
      migrated = migrated || status_of(impl.id) >= TripleStatus::Valid;
      for (const auto& test : r.tests.at(impl.id)) {
        const auto trel = uc.id + "/tests/" + impl.id + "__" + test.id + ".py";
        write_text(out_dir / trel, test.text);
        record({{"use_case", uc.id}, {"implementation", impl.id}, {"test", test.id}}, "test",
               status_of(impl.id + "/" + test.id), nullptr, trel);
        summary.tests++;
      }
      for (const auto& mig : r.migrations.at(impl.id)) {
        const auto mrel = uc.id + "/migrations/" + impl.id + "__" + mig.id + ".py";
        write_text(out_dir / mrel, mig.text);
        record({{"use_case", uc.id}, {"implementation", impl.id}, {"migration", mig.id}},
               "migration", status_of(impl.id + "/" + mig.id), nullptr, mrel);
        summary.migrations++;
      }
    }
    summary.use_cases_implemented += implemented ? 1 : 0;
    summary.use_cases_migrated += migrated ? 1 : 0;

    for (const auto& p : validation.pairs) {
      if (p.use_case_id != uc.id) continue;
      record({{"use_case", uc.id}, {"implementation", p.impl_id}, {"test", p.test_id}}, "pair",
             p.passed ? TripleStatus::ImplValid : TripleStatus::Raw, coverage_json(p.coverage), "");
      summary.impl_valid_pairs += p.passed ? 1 : 0;
    }
    for (const auto& t : validation.triples) {
      if (t.use_case_id != uc.id) continue;
      std::string rel;
      if (t.status == TripleStatus::Selected) {
        rel = uc.id + "/selected/" + t.impl_id;
        const fs::path dir = out_dir / rel;
        write_text(dir / "source.py", t.source);
        write_text(dir / "test.py", t.tests);
        write_text(dir / "migration.py", t.migration);
        nlohmann::json meta = {{"use_case", uc.id},
                               {"implementation", t.impl_id},
                               {"test", t.test_id},
                               {"migration", t.migration_id},
                               {"source_coverage", coverage_json(t.source_coverage)},
                               {"migration_coverage", coverage_json(t.migration_coverage)},
                               {"source_library", pair.source},
                               {"target_library", pair.target},
                               {"source_markers", pair.source_markers}};
        write_text(dir / "triple.json", meta.dump(2) + "\n");
        summary.selected++;
      }
      if (t.status >= TripleStatus::Valid) summary.valid_triples++;
      record({{"use_case", uc.id},
              {"implementation", t.impl_id},
              {"test", t.test_id},
              {"migration", t.migration_id}},
             "triple", t.status,
             {{"source", coverage_json(t.source_coverage)},
              {"migration", coverage_json(t.migration_coverage)}},
             rel);
    }
  }
  if (!manifest) throw Error(ErrorCode::IoError, "cannot write manifest");
  return summary;
}

}  // namespace rulesynth
