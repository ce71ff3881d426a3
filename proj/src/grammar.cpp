#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_set>

#include "hexbandit/synthlang.hpp"

#ifndef HEXBANDIT_DATA_DIR
#define HEXBANDIT_DATA_DIR "data"
#endif

namespace hexbandit::synthlang {

// ---- vocabulary -------------------------------------------------------------------

Vocabulary::Vocabulary(const std::vector<std::string>& words) {
  for (const char* s : {"<bos>", "<eos>", "<unk>"}) {
    index_.emplace(s, static_cast<int>(tokens_.size()));
    tokens_.emplace_back(s);
  }
  for (const auto& w : words) {
    if (index_.count(w)) continue;
    index_.emplace(w, static_cast<int>(tokens_.size()));
    tokens_.push_back(w);
  }
}

int Vocabulary::id(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return index_.count(std::string(token)) > 0; }

std::string to_text(const Vocabulary& vocab, const Instruction& x) {
  std::string out;
  for (std::size_t i = 0; i < x.tokens.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(x.tokens[i]);
  }
  return out;
}

Instruction tokenize(const Vocabulary& vocab, std::string_view text) {
  Instruction x;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) x.tokens.push_back(vocab.id(cur));
    cur.clear();
  };
  for (char ch : text) {
    if (std::isspace(static_cast<unsigned char>(ch))) {
      flush();
    } else if (ch == ',') {
      flush();
      x.tokens.push_back(vocab.id(","));
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
  }
  flush();
  return x;
}

// ---- grammar file reader -----------------------------------------------------------

namespace {

struct Lexeme {
  enum Kind { Ident, String, Punct, Directive, Number, End } kind;
  std::string text;
  int line;
};

std::vector<Lexeme> lex(std::string_view src) {
  std::vector<Lexeme> out;
  int line = 1;
  std::size_t i = 0;
  auto fail = [&](const std::string& msg) {
    throw GrammarError("grammar line " + std::to_string(line) + ": " + msg);
  };
  while (i < src.size()) {
    char c = src[i];
    if (c == '\n') {
      ++line;
      ++i;
    } else if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
    } else if (c == '#') {
      while (i < src.size() && src[i] != '\n') ++i;
    } else if (c == '"') {
      std::size_t j = i + 1;
      while (j < src.size() && src[j] != '"' && src[j] != '\n') ++j;
      if (j >= src.size() || src[j] != '"') fail("unterminated string");
      out.push_back({Lexeme::String, std::string(src.substr(i + 1, j - i - 1)), line});
      i = j + 1;
    } else if (std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '@') {
      std::size_t j = i + 1;
      while (j < src.size() && (std::isalnum(static_cast<unsigned char>(src[j])) || src[j] == '_')) ++j;
      out.push_back({c == '@' ? Lexeme::Directive : Lexeme::Ident, std::string(src.substr(i, j - i)), line});
      i = j;
    } else if (std::isdigit(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < src.size() && std::isdigit(static_cast<unsigned char>(src[j]))) ++j;
      out.push_back({Lexeme::Number, std::string(src.substr(i, j - i)), line});
      i = j;
    } else if (std::string_view("=|;[]()").find(c) != std::string_view::npos) {
      out.push_back({Lexeme::Punct, std::string(1, c), line});
      ++i;
    } else {
      fail(std::string("unexpected character '") + c + "'");
    }
  }
  out.push_back({Lexeme::End, "", line});
  return out;
}

// Recursive-descent reader producing rules over named nonterminals and raw
// terminal words; symbols are resolved to ids afterwards.
struct RawSymbol {
  bool terminal;
  std::string text;
};
struct RawRule {
  std::string lhs;
  std::vector<RawSymbol> rhs;
};

class Reader {
 public:
  explicit Reader(std::vector<Lexeme> lx) : lx_(std::move(lx)) {}

  void read() {
    while (peek().kind != Lexeme::End) {
      if (peek().kind == Lexeme::Directive) {
        auto d = next();
        if (d.text != "@version") fail(d, "unknown directive " + d.text);
        auto n = next();
        if (n.kind != Lexeme::Number) fail(n, "expected version number");
        version = std::stoi(n.text);
        continue;
      }
      auto name = next();
      if (name.kind != Lexeme::Ident) fail(name, "expected rule name");
      expect("=");
      note_nonterminal(name.text);
      defined.push_back(name.text);
      alternatives(name.text);
      expect(";");
    }
  }

  int version = 0;
  std::vector<RawRule> rules;
  std::vector<std::string> nonterminals;  // first-appearance order
  std::vector<std::string> defined;
  std::vector<std::string> terminals;  // first-appearance order

 private:
  const Lexeme& peek() const { return lx_[pos_]; }
  Lexeme next() { return lx_[pos_++]; }
  [[noreturn]] void fail(const Lexeme& l, const std::string& msg) const {
    throw GrammarError("grammar line " + std::to_string(l.line) + ": " + msg);
  }
  void expect(const char* p) {
    auto l = next();
    if (l.kind != Lexeme::Punct || l.text != p) fail(l, std::string("expected '") + p + "'");
  }
  bool at_punct(const char* p) const { return peek().kind == Lexeme::Punct && peek().text == p; }

  void note_nonterminal(const std::string& n) {
    if (std::find(nonterminals.begin(), nonterminals.end(), n) == nonterminals.end())
      nonterminals.push_back(n);
  }

  void alternatives(const std::string& lhs) {
    for (;;) {
      rules.push_back({lhs, sequence(lhs)});
      if (!at_punct("|")) break;
      next();
    }
  }

  std::vector<RawSymbol> sequence(const std::string& lhs) {
    std::vector<RawSymbol> seq;
    for (;;) {
      const auto& l = peek();
      if (l.kind == Lexeme::String) {
        if (l.text.empty()) fail(l, "empty terminal");
        if (std::find(terminals.begin(), terminals.end(), l.text) == terminals.end())
          terminals.push_back(l.text);
        seq.push_back({true, next().text});
      } else if (l.kind == Lexeme::Ident) {
        note_nonterminal(l.text);
        seq.push_back({false, next().text});
      } else if (at_punct("[") || at_punct("(")) {
        const bool optional = next().text == "[";
        const std::string fresh = lhs + (optional ? "$opt" : "$grp") + std::to_string(++fresh_);
        note_nonterminal(fresh);
        defined.push_back(fresh);
        alternatives(fresh);
        if (optional) rules.push_back({fresh, {}});
        expect(optional ? "]" : ")");
        seq.push_back({false, fresh});
      } else {
        break;
      }
    }
    return seq;
  }

  std::vector<Lexeme> lx_;
  std::size_t pos_ = 0;
  int fresh_ = 0;
};

}  // namespace

Grammar Grammar::from_text(std::string_view text) {
  Reader reader(lex(text));
  reader.read();
  if (reader.rules.empty()) throw GrammarError("grammar has no rules");
  for (const auto& n : reader.nonterminals)
    if (std::find(reader.defined.begin(), reader.defined.end(), n) == reader.defined.end())
      throw GrammarError("nonterminal '" + n + "' is used but never defined");

  Grammar g;
  g.version_ = reader.version;
  g.vocab_ = Vocabulary(reader.terminals);
  // The start symbol (first rule) must get index 0.
  std::vector<std::string> names = reader.nonterminals;
  auto start_it = std::find(names.begin(), names.end(), reader.defined.front());
  std::rotate(names.begin(), start_it, start_it + 1);
  g.names_ = names;
  std::map<std::string, int> ids;
  for (std::size_t i = 0; i < names.size(); ++i) ids[names[i]] = static_cast<int>(i);
  for (const auto& rr : reader.rules) {
    Rule r;
    r.lhs = ids.at(rr.lhs);
    for (const auto& s : rr.rhs)
      r.rhs.push_back(s.terminal ? Symbol{true, g.vocab_.id(s.text)} : Symbol{false, ids.at(s.text)});
    g.rules_.push_back(std::move(r));
  }
  g.finalize();
  return g;
}

Grammar Grammar::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw GrammarError("cannot open grammar file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str());
}

std::filesystem::path Grammar::default_path() {
  if (const char* env = std::getenv("HEXBANDIT_GRAMMAR")) return env;
  return std::filesystem::path(HEXBANDIT_DATA_DIR) / "grammar.ebnf";
}

const Grammar& Grammar::builtin() {
  static const Grammar g = load(default_path());
  return g;
}

std::optional<int> Grammar::nonterminal_id(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return static_cast<int>(i);
  return std::nullopt;
}

void Grammar::finalize() {
  rules_of_.assign(names_.size(), {});
  for (std::size_t i = 0; i < rules_.size(); ++i) rules_of_[rules_[i].lhs].push_back(static_cast<int>(i));
  nullable_.assign(names_.size(), 0);
  for (bool changed = true; changed;) {
    changed = false;
    for (const auto& r : rules_) {
      if (nullable_[r.lhs]) continue;
      bool all = std::all_of(r.rhs.begin(), r.rhs.end(),
                             [&](const Symbol& s) { return !s.terminal && nullable_[s.id]; });
      if (all) {
        nullable_[r.lhs] = 1;
        changed = true;
      }
    }
  }
}

// ---- Earley ---------------------------------------------------------------------------

namespace {

struct Item {
  int rule;
  int dot;
  int origin;
};

struct Chart {
  std::vector<std::vector<Item>> columns;
  std::vector<std::unordered_set<std::uint64_t>> seen;

  explicit Chart(std::size_t n) : columns(n + 1), seen(n + 1) {}
  void add(std::size_t col, Item it) {
    const std::uint64_t key = (static_cast<std::uint64_t>(it.rule) << 40) ^
                              (static_cast<std::uint64_t>(it.dot) << 20) ^
                              static_cast<std::uint64_t>(it.origin);
    if (seen[col].insert(key).second) columns[col].push_back(it);
  }
};

Chart earley(const Grammar& g, std::span<const int> tokens) {
  const auto& rules = g.rules();
  std::vector<std::vector<int>> rules_of(static_cast<std::size_t>(g.nonterminal_count()));
  for (std::size_t i = 0; i < rules.size(); ++i) rules_of[rules[i].lhs].push_back(static_cast<int>(i));

  const std::size_t n = tokens.size();
  Chart chart(n);
  for (int r : rules_of[g.start()]) chart.add(0, {r, 0, 0});
  for (std::size_t j = 0; j <= n; ++j) {
    auto& col = chart.columns[j];
    for (std::size_t k = 0; k < col.size(); ++k) {
      const Item it = col[k];
      const Rule& rule = rules[it.rule];
      if (it.dot < static_cast<int>(rule.rhs.size())) {
        const Symbol sym = rule.rhs[it.dot];
        if (sym.terminal) {
          if (j < n && tokens[j] == sym.id) chart.add(j + 1, {it.rule, it.dot + 1, it.origin});
        } else {
          for (int r : rules_of[sym.id]) chart.add(j, {r, 0, static_cast<int>(j)});
          if (g.nullable(sym.id)) chart.add(j, {it.rule, it.dot + 1, it.origin});
        }
      } else {
        const int lhs = rule.lhs;
        auto& origin_col = chart.columns[it.origin];
        for (std::size_t m = 0; m < origin_col.size(); ++m) {
          const Item p = origin_col[m];
          const Rule& pr = rules[p.rule];
          if (p.dot < static_cast<int>(pr.rhs.size()) && !pr.rhs[p.dot].terminal &&
              pr.rhs[p.dot].id == lhs)
            chart.add(j, {p.rule, p.dot + 1, p.origin});
        }
      }
    }
  }
  return chart;
}

bool chart_accepts(const Grammar& g, const Chart& chart, std::size_t n) {
  for (const auto& it : chart.columns[n]) {
    const Rule& r = g.rules()[it.rule];
    if (r.lhs == g.start() && it.origin == 0 && it.dot == static_cast<int>(r.rhs.size())) return true;
  }
  return false;
}

class TreeBuilder {
 public:
  TreeBuilder(const Grammar& g, const Chart& chart, std::span<const int> tokens)
      : g_(g), tokens_(tokens) {
    const auto& rules = g.rules();
    for (std::size_t j = 0; j < chart.columns.size(); ++j)
      for (const auto& it : chart.columns[j])
        if (it.dot == static_cast<int>(rules[it.rule].rhs.size())) {
          complete_rule_.insert(key(it.rule, it.origin, static_cast<int>(j)));
          complete_nt_.insert(key(rules[it.rule].lhs, it.origin, static_cast<int>(j)));
        }
  }

  std::optional<ParseNode> build(int nt, int i, int j) {
    const auto k = key(nt, i, j);
    if (auto it = memo_.find(k); it != memo_.end()) return it->second;
    if (!in_progress_.insert(k).second) return std::nullopt;  // cyclic derivation
    std::optional<ParseNode> result;
    for (std::size_t r = 0; r < g_.rules().size() && !result; ++r) {
      const Rule& rule = g_.rules()[r];
      if (rule.lhs != nt || !complete_rule_.count(key(static_cast<int>(r), i, j))) continue;
      std::vector<ParseNode> children;
      if (match(rule.rhs, 0, i, j, children)) {
        ParseNode node{{false, nt}, i, j, std::move(children)};
        result = std::move(node);
      }
    }
    in_progress_.erase(k);
    memo_[k] = result;
    return result;
  }

 private:
  static std::uint64_t key(int a, int b, int c) {
    return (static_cast<std::uint64_t>(a) << 40) ^ (static_cast<std::uint64_t>(b) << 20) ^
           static_cast<std::uint64_t>(c);
  }

  bool match(const std::vector<Symbol>& rhs, std::size_t k, int pos, int end,
             std::vector<ParseNode>& out) {
    if (k == rhs.size()) return pos == end;
    const Symbol s = rhs[k];
    if (s.terminal) {
      if (pos >= end || tokens_[pos] != s.id) return false;
      out.push_back({s, pos, pos + 1, {}});
      if (match(rhs, k + 1, pos + 1, end, out)) return true;
      out.pop_back();
      return false;
    }
    for (int e = pos; e <= end; ++e) {
      if (!complete_nt_.count(key(s.id, pos, e))) continue;
      auto sub = build(s.id, pos, e);
      if (!sub) continue;
      out.push_back(std::move(*sub));
      if (match(rhs, k + 1, e, end, out)) return true;
      out.pop_back();
    }
    return false;
  }

  const Grammar& g_;
  std::span<const int> tokens_;
  std::unordered_set<std::uint64_t> complete_rule_;
  std::unordered_set<std::uint64_t> complete_nt_;
  std::unordered_set<std::uint64_t> in_progress_;
  std::map<std::uint64_t, std::optional<ParseNode>> memo_;
};

}  // namespace

bool Grammar::accepts(std::span<const int> tokens) const {
  if (tokens.empty() && !nullable(start())) return false;
  auto chart = earley(*this, tokens);
  return chart_accepts(*this, chart, tokens.size());
}

std::optional<ParseNode> Grammar::parse_tree(std::span<const int> tokens) const {
  auto chart = earley(*this, tokens);
  if (!chart_accepts(*this, chart, tokens.size())) return std::nullopt;
  TreeBuilder builder(*this, chart, tokens);
  return builder.build(start(), 0, static_cast<int>(tokens.size()));
}

bool grammar_check(const Grammar& g, const Instruction& x) { return g.accepts(x); }

}  // namespace hexbandit::synthlang
