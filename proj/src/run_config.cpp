#include "sim2real/run_config.hpp"

#include <cctype>
#include <charconv>
#include <set>

#include "sim2real/errors.hpp"
#include "sim2real/io.hpp"

namespace sim2real {

namespace fs = std::filesystem;

namespace {

class LineParser {
 public:
  LineParser(std::string_view line, int line_no, std::string_view source)
      : s_(line), line_no_(line_no), source_(source) {}

  [[noreturn]] void fail(const std::string& message) const {
    throw ParseError(std::string(source_) + ":" + std::to_string(line_no_) + ":" +
                     std::to_string(pos_ + 1) + ": " + message);
  }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }
  bool at_end_or_comment() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#' || s_[pos_] == '\r';
  }
  void expect_end() {
    if (!at_end_or_comment()) fail("unexpected trailing characters");
  }
  bool consume(char c) {
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  bool consume(std::string_view text) {
    if (s_.substr(pos_, text.size()) == text) {
      pos_ += text.size();
      return true;
    }
    return false;
  }

  std::string key() {
    skip_ws();
    const std::size_t begin = pos_;
    while (pos_ < s_.size() &&
           (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_' ||
            s_[pos_] == '-')) {
      ++pos_;
    }
    if (begin == pos_) fail("expected a key");
    return std::string(s_.substr(begin, pos_ - begin));
  }

  ConfigValue value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') {
      if (s_.substr(pos_, 3) == "\"\"\"") fail("multi-line strings are not supported");
      return basic_string();
    }
    if (c == '\'') {
      ++pos_;
      const auto end = s_.find('\'', pos_);
      if (end == std::string_view::npos) fail("unterminated literal string");
      std::string out(s_.substr(pos_, end - pos_));
      pos_ = end + 1;
      return out;
    }
    if (consume("true")) return true;
    if (consume("false")) return false;
    if (c == '[' || c == '{') fail("arrays and inline tables are not supported");
    return number();
  }

 private:
  std::string basic_string() {
    ++pos_;  // opening quote
    std::string out;
    while (true) {
      if (pos_ >= s_.size()) fail("unterminated string");
      const char c = s_[pos_++];
      if (c == '"') return out;
      if (c != '\\') {
        out.push_back(c);
        continue;
      }
      if (pos_ >= s_.size()) fail("unterminated escape");
      const char e = s_[pos_++];
      switch (e) {
        case '"': out.push_back('"'); break;
        case '\\': out.push_back('\\'); break;
        case 'n': out.push_back('\n'); break;
        case 't': out.push_back('\t'); break;
        case 'r': out.push_back('\r'); break;
        case 'u': {
          if (pos_ + 4 > s_.size()) fail("short \\u escape");
          unsigned cp = 0;
          auto [p, ec] = std::from_chars(s_.data() + pos_, s_.data() + pos_ + 4, cp, 16);
          if (ec != std::errc() || p != s_.data() + pos_ + 4) fail("bad \\u escape");
          pos_ += 4;
          append_utf8(out, cp);
          break;
        }
        default: --pos_; fail(std::string("unknown escape \\") + e);
      }
    }
  }

  static void append_utf8(std::string& out, unsigned cp) {
    if (cp < 0x80) {
      out.push_back(static_cast<char>(cp));
    } else if (cp < 0x800) {
      out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    } else {
      out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
      out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
      out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
    }
  }

  ConfigValue number() {
    const std::size_t begin = pos_;
    while (pos_ < s_.size() && s_[pos_] != ' ' && s_[pos_] != '\t' && s_[pos_] != '#' &&
           s_[pos_] != '\r') {
      ++pos_;
    }
    std::string text;
    for (char ch : s_.substr(begin, pos_ - begin)) {
      if (ch != '_') text.push_back(ch);
    }
    if (!text.empty() && text[0] == '+') text.erase(0, 1);
    if (text.empty()) {
      pos_ = begin;
      fail("expected a value");
    }
    std::int64_t i = 0;
    auto [pi, ei] = std::from_chars(text.data(), text.data() + text.size(), i);
    if (ei == std::errc() && pi == text.data() + text.size()) return i;
    double d = 0;
    auto [pd, ed] = std::from_chars(text.data(), text.data() + text.size(), d);
    if (ed == std::errc() && pd == text.data() + text.size()) return d;
    pos_ = begin;
    fail("invalid value '" + std::string(s_.substr(begin, text.size())) +
         "' (strings must be quoted)");
  }

  std::string_view s_;
  std::size_t pos_ = 0;
  int line_no_;
  std::string_view source_;
};

}  // namespace

ConfigDocument parse_config(std::string_view text, std::string_view source) {
  ConfigDocument doc;
  ConfigTable* current = &doc.root;
  int line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    const std::string_view line =
        text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    ++line_no;
    LineParser p(line, line_no, source);
    if (!p.at_end_or_comment()) {
      if (p.consume("[[")) {
        const std::string name = p.key();
        p.skip_ws();
        if (!p.consume("]]")) p.fail("expected ']]'");
        p.expect_end();
        if (doc.tables.count(name)) p.fail("'" + name + "' is already a table");
        auto& arr = doc.arrays[name];
        arr.push_back(ConfigTable{{}, line_no});
        current = &arr.back();
      } else if (p.consume('[')) {
        const std::string name = p.key();
        p.skip_ws();
        if (!p.consume(']')) p.fail("expected ']'");
        p.expect_end();
        if (doc.tables.count(name) || doc.arrays.count(name)) {
          p.fail("table '" + name + "' defined twice");
        }
        current = &doc.tables[name];
        current->line = line_no;
      } else {
        const std::string key = p.key();
        p.skip_ws();
        if (!p.consume('=')) p.fail("expected '=' after key '" + key + "'");
        ConfigValue v = p.value();
        p.expect_end();
        if (current->items.count(key)) p.fail("duplicate key '" + key + "'");
        current->items.emplace(key, ConfigTable::Item{std::move(v), line_no});
      }
    }
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return doc;
}

namespace {

class TableReader {
 public:
  TableReader(const ConfigTable& table, std::string_view source, std::string context)
      : table_(table), source_(source), context_(std::move(context)) {}

  [[noreturn]] void fail(int line, const std::string& message) const {
    throw ParseError(std::string(source_) + ":" + std::to_string(line) + ": " + context_ +
                     message);
  }

  template <typename T>
  std::optional<T> get(const std::string& key) {
    used_.insert(key);
    auto it = table_.items.find(key);
    if (it == table_.items.end()) return std::nullopt;
    if constexpr (std::is_same_v<T, double>) {
      if (auto* i = std::get_if<std::int64_t>(&it->second.value)) return static_cast<double>(*i);
    }
    if (auto* v = std::get_if<T>(&it->second.value)) return *v;
    fail(it->second.line, "key '" + key + "' has the wrong type");
  }

  int line_of(const std::string& key) const {
    auto it = table_.items.find(key);
    return it == table_.items.end() ? table_.line : it->second.line;
  }

  void reject_unknown() const {
    for (const auto& [key, item] : table_.items) {
      if (!used_.count(key)) fail(item.line, "unknown key '" + key + "'");
    }
  }

 private:
  const ConfigTable& table_;
  std::string_view source_;
  std::string context_;
  std::set<std::string> used_;
};

fs::path resolve_path(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

RunSettings run_settings_from_config(const ConfigDocument& doc, const fs::path& base_dir,
                                     std::string_view source) {
  RunSettings s;
  TableReader root(doc.root, source, "");
  if (auto v = root.get<std::string>("dataset")) s.dataset = resolve_path(base_dir, *v);
  if (auto v = root.get<std::string>("cache_dir")) {
    s.pipeline.cache_dir = resolve_path(base_dir, *v);
  }
  if (auto v = root.get<std::string>("out_dir")) s.export_dir = resolve_path(base_dir, *v);
  if (auto v = root.get<std::int64_t>("concurrency")) {
    if (*v < 1) root.fail(root.line_of("concurrency"), "concurrency must be >= 1");
    s.pipeline.concurrency = static_cast<std::size_t>(*v);
  }
  if (auto v = root.get<std::int64_t>("retries")) {
    if (*v < 1) root.fail(root.line_of("retries"), "retries must be >= 1");
    s.pipeline.retries = static_cast<int>(*v);
  }
  if (auto v = root.get<std::int64_t>("backoff_base_ms")) {
    if (*v < 0) root.fail(root.line_of("backoff_base_ms"), "backoff_base_ms must be >= 0");
    s.pipeline.backoff_base = std::chrono::milliseconds(*v);
  }
  if (auto v = root.get<std::int64_t>("read_timeout_s")) {
    s.pipeline.timeouts.read = std::chrono::seconds(*v);
  }
  if (auto v = root.get<std::string>("resize_policy")) s.pipeline.resize_policy = *v;
  root.reject_unknown();

  for (const auto& [name, table] : doc.tables) {
    throw ParseError(std::string(source) + ":" + std::to_string(table.line) +
                     ": unknown table [" + name + "]");
  }
  for (const auto& [name, tables] : doc.arrays) {
    if (name != "phase") {
      throw ParseError(std::string(source) + ":" + std::to_string(tables.front().line) +
                       ": unknown table array [[" + name + "]]");
    }
  }
  auto phases = doc.arrays.find("phase");
  if (phases == doc.arrays.end()) {
    throw ParseError(std::string(source) + ": no [[phase]] tables");
  }
  for (const auto& table : phases->second) {
    TableReader r(table, source, "[[phase]] ");
    const auto kind_text = r.get<std::string>("kind");
    if (!kind_text) r.fail(table.line, "missing 'kind'");
    PhaseSpec phase;
    try {
      phase.kind = parse_phase_kind(*kind_text);
    } catch (const ConfigError& e) {
      r.fail(r.line_of("kind"), e.what());
    }
    const auto endpoint = r.get<std::string>("endpoint");
    if (!endpoint) r.fail(table.line, "missing 'endpoint'");
    phase.endpoint = *endpoint;
    if (phase.kind == PhaseKind::diffusion_enhance) {
      const auto prompt = r.get<std::string>("prompt");
      const auto prompt_file = r.get<std::string>("prompt_file");
      if (prompt && prompt_file) r.fail(table.line, "give 'prompt' or 'prompt_file', not both");
      if (prompt) {
        phase.prompt = *prompt;
      } else if (prompt_file) {
        phase.prompt = read_prompt_file(resolve_path(base_dir, *prompt_file));
      } else {
        phase.prompt = std::string(default_enhance_prompt());
      }
      if (auto seed = r.get<std::int64_t>("seed")) phase.seed = *seed;
    } else {
      const auto domain = r.get<std::string>("target_domain");
      if (!domain) r.fail(table.line, "missing 'target_domain'");
      try {
        phase.target_domain = parse_target_domain(*domain);
      } catch (const UnknownDomain& e) {
        e.rethrow_with_context(std::string(source) + ":" +
                               std::to_string(r.line_of("target_domain")) + ": [[phase]] ");
      }
    }
    r.reject_unknown();
    s.pipeline.phases.push_back(std::move(phase));
  }
  return s;
}

std::string read_prompt_file(const fs::path& path) {
  std::string prompt = read_text_file(path);
  if (prompt.ends_with('\n')) prompt.pop_back();
  if (prompt.ends_with('\r')) prompt.pop_back();
  return prompt;
}

RunSettings load_run_settings(const fs::path& path) {
  const std::string text = read_text_file(path);
  return run_settings_from_config(parse_config(text, path.string()), path.parent_path(),
                                  path.string());
}

}  // namespace sim2real
