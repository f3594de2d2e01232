#pragma once

// Human-readable nested key-value rule files for benchmark construction:
// blocking settings at the top, then one `intent <name>` section per intent.
// Conjunctions reference other intents by name.

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "mier/benchmark.hpp"
#include "mier/common.hpp"
#include "mier/io.hpp"

namespace mier {

struct RulesConfig {
  BlockingConfig blocking;
  std::vector<std::pair<std::string, IntentRule>> intents;  // ordered; index = intent_id
};

namespace rules_detail {

struct RawRule {
  std::map<std::string, std::string> kv;
  std::vector<std::string> children;
};

inline std::pair<std::string, std::string> split_key_value(const std::string& line) {
  std::size_t sp = line.find_first_of(" \t");
  if (sp == std::string::npos) return {line, ""};
  std::size_t vs = line.find_first_not_of(" \t", sp);
  return {line.substr(0, sp), vs == std::string::npos ? "" : line.substr(vs)};
}

inline bool parse_bool(const std::string& v, const std::string& key) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("rule file: '" + key + "' expects a boolean, got '" + v + "'");
}

inline std::set<std::pair<std::string, std::string>> load_duplicates(const std::filesystem::path& path) {
  std::istringstream in(read_text_file(path));
  std::set<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    for (auto& c : line)
      if (c == ',' || c == '\t') c = ' ';
    std::istringstream ls(line);
    std::string a, b, extra;
    if (!(ls >> a)) continue;  // blank line
    if (a.rfind("#", 0) == 0) continue;
    if (!(ls >> b) || (ls >> extra))
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": expected exactly two record ids");
    out.emplace(std::min(a, b), std::max(a, b));
  }
  return out;
}

inline IntentRule resolve(const std::string& name, const std::map<std::string, RawRule>& raw,
                          const std::filesystem::path& base_dir, std::vector<std::string>& stack) {
  auto it = raw.find(name);
  if (it == raw.end()) throw ConfigError("rule file references unknown intent '" + name + "'");
  for (const auto& s : stack)
    if (s == name) throw ConfigError("rule file has a conjunction cycle through '" + name + "'");
  const RawRule& r = it->second;
  auto kv = [&](const std::string& key) -> const std::string* {
    auto k = r.kv.find(key);
    return k == r.kv.end() ? nullptr : &k->second;
  };
  const std::string* kind = kv("kind");
  if (kind == nullptr) throw ConfigError("intent '" + name + "' lacks 'kind'");
  IntentRule rule;
  if (*kind == "equivalence_list") {
    rule.kind = RuleKind::EquivalenceList;
    const std::string* file = kv("file");
    if (file == nullptr) throw ConfigError("intent '" + name + "' (equivalence_list) lacks 'file'");
    rule.duplicates = load_duplicates(base_dir / *file);
  } else if (*kind == "field_equality") {
    rule.kind = RuleKind::FieldEquality;
    const std::string* field = kv("field");
    if (field == nullptr) throw ConfigError("intent '" + name + "' (field_equality) lacks 'field'");
    rule.field = *field;
  } else if (*kind == "jaccard_sets") {
    rule.kind = RuleKind::JaccardSets;
    const std::string* field = kv("field");
    if (field == nullptr) throw ConfigError("intent '" + name + "' (jaccard_sets) lacks 'field'");
    rule.field = *field;
    if (const std::string* th = kv("threshold")) rule.threshold = std::stod(*th);
    if (const std::string* d = kv("delimiter")) {
      if (d->size() != 1) throw ConfigError("intent '" + name + "': delimiter must be one character");
      rule.set_delimiter = (*d)[0];
    }
  } else if (*kind == "conjunction") {
    rule.kind = RuleKind::Conjunction;
    stack.push_back(name);
    for (const auto& child : r.children) rule.children.push_back(resolve(child, raw, base_dir, stack));
    stack.pop_back();
  } else {
    throw ConfigError("intent '" + name + "' has unknown kind '" + *kind + "'");
  }
  rule.validate();
  return rule;
}

}  // namespace rules_detail

inline RulesConfig parse_rules_config(const std::filesystem::path& path) {
  using namespace rules_detail;
  std::istringstream in(read_text_file(path));
  RulesConfig cfg;
  std::map<std::string, RawRule> raw;
  std::vector<std::string> order;
  std::string current;  // empty = blocking section
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t begin = line.find_first_not_of(" \t");
    if (begin == std::string::npos) continue;
    std::size_t end = line.find_last_not_of(" \t\r");
    std::string trimmed = line.substr(begin, end - begin + 1);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    auto [key, value] = split_key_value(trimmed);
    if (key == "intent") {
      if (value.empty()) throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": intent needs a name");
      if (raw.count(value)) throw ConfigError("duplicate intent '" + value + "'");
      raw[value] = RawRule{};
      order.push_back(value);
      current = value;
      continue;
    }
    if (current.empty()) {
      if (key == "field") cfg.blocking.field = value;
      else if (key == "q") cfg.blocking.q = std::stoi(value);
      else if (key == "min_shared") cfg.blocking.min_shared = std::stoi(value);
      else if (key == "clean_clean") cfg.blocking.clean_clean = parse_bool(value, key);
      else if (key == "normalize") cfg.blocking.normalize = parse_bool(value, key);
      else throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": unknown blocking key '" + key + "'");
    } else {
      if (key == "children") {
        std::istringstream cs(value);
        std::string child;
        while (cs >> child) raw[current].children.push_back(child);
      } else {
        raw[current].kv[key] = value;
      }
    }
  }
  cfg.blocking.validate();
  if (order.empty()) throw ConfigError("rule file '" + path.string() + "' defines no intents");
  std::filesystem::path base_dir = path.parent_path();
  for (const auto& name : order) {
    std::vector<std::string> stack;
    cfg.intents.emplace_back(name, resolve(name, raw, base_dir, stack));
  }
  return cfg;
}

}  // namespace mier
