#pragma once

// Pulse-sequence notation.
//
//   sequence   := element ( "-" element )* ;
//   element    := pulse | delay | refocus | decouple ;
//   pulse      := "[" angle "]" axis "^" "{" label ( "," label )* "}" ;
//   axis       := "x" | "y" ;
//   angle      := PIEXPR | NUMBER "deg" | NUMBER | SYMBOL ;
//   delay      := "1/(4J" label label ")" | NUMBER "ms" | SYMBOL ;
//   refocus    := "refocus" "(" delay ")" ;
//   decouple   := "decouple" "(" label ("on"|"off") ")" ;
//
// PIEXPR is [-][N][*]pi[/D]; "π" and "θ" are accepted as aliases of pi and
// theta. Durations take ms, s or us. Coupling subscripts are either compact
// ("12", "C1C2", "C2H") or explicit ("{C1,C2}"). '#' starts a line comment.

#include <charconv>
#include <cmath>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

#include "nmrdeco/nmr_model.hpp"
#include "nmrdeco/propagator.hpp"

namespace nmrdeco::seq {

// ---------------------------------------------------------------------------
// AST

struct PiMultiple {
  long numerator = 1;
  long denominator = 1;
  bool operator==(const PiMultiple&) const = default;
};
struct Degrees {
  double value = 0.0;
  bool operator==(const Degrees&) const = default;
};
struct Radians {
  double value = 0.0;
  bool operator==(const Radians&) const = default;
};
struct Symbol {
  std::string name;
  bool operator==(const Symbol&) const = default;
};
using Angle = std::variant<PiMultiple, Degrees, Radians, Symbol>;

enum class TimeUnit { s, ms, us };

struct CouplingQuarter {
  std::string a;
  std::string b;
  bool operator==(const CouplingQuarter&) const = default;
};
struct FixedDelay {
  double value = 0.0;
  TimeUnit unit = TimeUnit::ms;
  double seconds() const {
    switch (unit) {
      case TimeUnit::s: return value;
      case TimeUnit::ms: return value * 1e-3;
      case TimeUnit::us: return value * 1e-6;
    }
    return value;
  }
  bool operator==(const FixedDelay&) const = default;
};
using DelaySpec = std::variant<CouplingQuarter, FixedDelay, Symbol>;

struct Pulse {
  Angle angle;
  Axis axis = Axis::x;
  std::vector<std::string> targets;
  bool operator==(const Pulse&) const = default;
};
struct Delay {
  DelaySpec spec;
  bool operator==(const Delay&) const = default;
};
struct Refocus {
  Delay inner;
  bool operator==(const Refocus&) const = default;
};
struct Decouple {
  std::string spin;
  bool on = true;
  bool operator==(const Decouple&) const = default;
};
using Element = std::variant<Pulse, Delay, Refocus, Decouple>;

struct PulseSequence {
  std::vector<Element> elements;
  std::set<std::string> parameters;
  bool operator==(const PulseSequence&) const = default;
};

using Binding = std::map<std::string, double>;

// ---------------------------------------------------------------------------
// Tokens

enum class TokenKind {
  LBracket,
  RBracket,
  Angle,
  Axis,
  Caret,
  LBrace,
  RBrace,
  Comma,
  Label,
  CouplingDelay,
  Duration,
  Symbol,
  Dash,
  LParen,
  RParen,
  Refocus,
  Decouple,
  On,
  Off,
  End,
};

struct Token {
  TokenKind kind;
  std::size_t line = 1;
  std::size_t column = 1;
  std::string text;                  // raw lexeme
  std::optional<seq::Angle> angle;   // Angle
  std::optional<FixedDelay> duration;  // Duration
  std::string a, b;                  // CouplingDelay labels
};

namespace detail {

inline bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
inline bool is_digit(char c) { return c >= '0' && c <= '9'; }
inline bool is_lower(char c) { return c >= 'a' && c <= 'z'; }
inline bool is_word(char c) { return is_alpha(c) || is_digit(c) || c == '_'; }

// Splits a compact coupling subscript into labels: a single digit, or a letter
// followed by lowercase letters, digits or underscores.
inline std::optional<std::vector<std::string>> split_compact(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    if (is_digit(s[i])) {
      out.emplace_back(1, s[i++]);
    } else if (is_alpha(s[i])) {
      std::size_t j = i + 1;
      while (j < s.size() && (is_lower(s[j]) || s[j] == '_')) ++j;
      while (j < s.size() && is_digit(s[j])) ++j;
      out.emplace_back(s.substr(i, j - i));
      i = j;
    } else {
      return std::nullopt;
    }
  }
  return out;
}

class Lexer {
 public:
  explicit Lexer(std::string_view text) : src_(text) {}

  std::vector<Token> run() {
    std::vector<Token> out;
    enum class Mode { Top, AfterBracket, AfterCaret, Targets, DecoupleArgs };
    Mode mode = Mode::Top;
    int decouple_depth = 0;
    while (true) {
      skip_space();
      if (at_end()) break;
      const std::size_t line = line_, col = col_;
      const char c = peek();
      auto simple = [&](TokenKind k) {
        Token t{k, line, col, std::string(1, c)};
        advance();
        out.push_back(std::move(t));
      };
      if (c == '[') {
        simple(TokenKind::LBracket);
        out.push_back(lex_angle());
        skip_space();
        if (at_end() || peek() != ']') fail(line_, col_, "expected ']' after pulse angle");
        simple_at(out, TokenKind::RBracket);
        mode = Mode::AfterBracket;
      } else if (c == ']') {
        fail(line, col, "unexpected ']'");
      } else if (c == '^') {
        simple(TokenKind::Caret);
        mode = Mode::AfterCaret;
      } else if (c == '{') {
        simple(TokenKind::LBrace);
        mode = Mode::Targets;
      } else if (c == '}') {
        simple(TokenKind::RBrace);
        mode = Mode::Top;
      } else if (c == ',') {
        simple(TokenKind::Comma);
      } else if (c == '-') {
        simple(TokenKind::Dash);
      } else if (c == '(') {
        simple(TokenKind::LParen);
      } else if (c == ')') {
        simple(TokenKind::RParen);
        if (decouple_depth > 0) {
          --decouple_depth;
          mode = Mode::Top;
        }
      } else if (mode == Mode::AfterBracket && is_alpha(c)) {
        Token t{TokenKind::Axis, line, col, read_word()};
        out.push_back(std::move(t));
        mode = Mode::Top;
      } else if (mode == Mode::AfterCaret && is_word(c)) {
        out.push_back(Token{TokenKind::Label, line, col, read_word()});  // bare single target: x^2
        mode = Mode::Top;
      } else if (mode == Mode::Targets && is_word(c)) {
        out.push_back(Token{TokenKind::Label, line, col, read_word()});
      } else if (mode == Mode::DecoupleArgs && is_word(c)) {
        std::string w = read_word();
        TokenKind k = TokenKind::Label;
        if (!out.empty() && out.back().kind == TokenKind::Label) {
          if (w == "on") k = TokenKind::On;
          else if (w == "off") k = TokenKind::Off;
        }
        out.push_back(Token{k, line, col, std::move(w)});
      } else if (starts_with("1/(4J")) {
        out.push_back(lex_coupling_delay());
      } else if (is_digit(c) || c == '.') {
        out.push_back(lex_duration());
      } else if (is_alpha(c) || starts_with("\xCE\xB8")) {
        const bool theta = starts_with("\xCE\xB8");
        std::string w = theta ? (advance(2), std::string("theta")) : read_word();
        if (w == "refocus") {
          out.push_back(Token{TokenKind::Refocus, line, col, w});
        } else if (w == "decouple") {
          out.push_back(Token{TokenKind::Decouple, line, col, w});
          mode = Mode::DecoupleArgs;
          ++decouple_depth;
        } else {
          out.push_back(Token{TokenKind::Symbol, line, col, w});
        }
      } else {
        fail(line, col, std::string("illegal character '") + printable(c) + "'");
      }
    }
    out.push_back(Token{TokenKind::End, line_, col_, ""});
    return out;
  }

 private:
  [[noreturn]] static void fail(std::size_t line, std::size_t col, const std::string& msg) {
    throw SyntaxError(line, col, msg);
  }

  static std::string printable(char c) {
    const auto u = static_cast<unsigned char>(c);
    if (u >= 0x20 && u < 0x7f) return std::string(1, c);
    char buf[8];
    std::snprintf(buf, sizeof buf, "\\x%02X", u);
    return buf;
  }

  bool at_end() const { return pos_ >= src_.size(); }
  char peek(std::size_t off = 0) const { return pos_ + off < src_.size() ? src_[pos_ + off] : '\0'; }
  bool starts_with(std::string_view s) const { return src_.substr(pos_).starts_with(s); }

  void advance(std::size_t count = 1) {
    for (std::size_t i = 0; i < count && !at_end(); ++i) {
      const auto u = static_cast<unsigned char>(src_[pos_]);
      if (src_[pos_] == '\n') {
        ++line_;
        col_ = 1;
      } else if ((u & 0xC0) != 0x80) {
        ++col_;  // count code points, not continuation bytes
      }
      ++pos_;
    }
  }

  void skip_space() {
    while (!at_end()) {
      const char c = peek();
      if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        advance();
      } else if (c == '#') {
        while (!at_end() && peek() != '\n') advance();
      } else {
        break;
      }
    }
  }

  void simple_at(std::vector<Token>& out, TokenKind k) {
    out.push_back(Token{k, line_, col_, std::string(1, peek())});
    advance();
  }

  std::string read_word() {
    std::string w;
    while (!at_end() && is_word(peek())) {
      w += peek();
      advance();
    }
    return w;
  }

  // Longest numeric prefix; returns nullopt when none.
  std::optional<double> read_number(std::string& raw) {
    std::size_t j = pos_;
    while (j < src_.size() && is_digit(src_[j])) ++j;
    if (j < src_.size() && src_[j] == '.') {
      ++j;
      while (j < src_.size() && is_digit(src_[j])) ++j;
    }
    if (j < src_.size() && (src_[j] == 'e' || src_[j] == 'E')) {
      std::size_t k = j + 1;
      if (k < src_.size() && (src_[k] == '+' || src_[k] == '-')) ++k;
      if (k < src_.size() && is_digit(src_[k])) {
        while (k < src_.size() && is_digit(src_[k])) ++k;
        j = k;
      }
    }
    if (j == pos_) return std::nullopt;
    raw = std::string(src_.substr(pos_, j - pos_));
    double v = 0;
    auto [p, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), v);
    if (ec != std::errc() || p != raw.data() + raw.size()) return std::nullopt;
    advance(j - pos_);
    return v;
  }

  static bool is_whole(double v) { return std::isfinite(v) && v == std::floor(v) && std::abs(v) < 1e9; }

  Token lex_angle() {
    skip_space();
    const std::size_t line = line_, col = col_;
    const std::size_t start = pos_;
    Token t{TokenKind::Angle, line, col, ""};
    bool negative = false;
    if (peek() == '-') {
      negative = true;
      advance();
    }
    auto finish = [&](seq::Angle a) {
      t.text = std::string(src_.substr(start, pos_ - start));
      t.angle = std::move(a);
      return t;
    };
    auto read_pi = [&]() {
      if (starts_with("pi")) {
        advance(2);
        return true;
      }
      if (starts_with("\xCF\x80")) {
        advance(2);
        return true;
      }
      return false;
    };
    auto read_denominator = [&]() -> long {
      if (peek() != '/') return 1;
      advance();
      std::string raw;
      auto d = read_number(raw);
      if (!d || !is_whole(*d) || *d <= 0) fail(line_, col_, "expected a positive integer denominator after '/'");
      return static_cast<long>(*d);
    };
    if (is_alpha(peek()) || starts_with("\xCF\x80") || starts_with("\xCE\xB8")) {
      if (read_pi()) {
        if (is_word(peek())) fail(line_, col_, "unexpected text after 'pi'");
        const long den = read_denominator();
        return finish(PiMultiple{negative ? -1 : 1, den});
      }
      if (negative) fail(line, col, "a symbolic angle cannot be negated");
      if (starts_with("\xCE\xB8")) {
        advance(2);
        return finish(Symbol{"theta"});
      }
      return finish(Symbol{read_word()});
    }
    std::string raw;
    auto v = read_number(raw);
    if (!v) fail(line_, col_, peek() == ']' ? "empty pulse angle" : "malformed pulse angle");
    if (peek() == '*' && (src_.substr(pos_ + 1).starts_with("pi") || src_.substr(pos_ + 1).starts_with("\xCF\x80")))
      advance();
    if (read_pi()) {
      if (!is_whole(*v)) fail(line, col, "pi multiples must have an integer coefficient");
      if (is_word(peek())) fail(line_, col_, "unexpected text after 'pi'");
      const long num = static_cast<long>(*v) * (negative ? -1 : 1);
      return finish(PiMultiple{num, read_denominator()});
    }
    if (starts_with("deg")) {
      advance(3);
      return finish(Degrees{negative ? -*v : *v});
    }
    if (starts_with("\xC2\xB0")) {
      advance(2);
      return finish(Degrees{negative ? -*v : *v});
    }
    if (is_word(peek())) fail(line_, col_, "unknown angle unit");
    return finish(Radians{negative ? -*v : *v});
  }

  Token lex_duration() {
    const std::size_t line = line_, col = col_;
    std::string raw;
    auto v = read_number(raw);
    if (!v) fail(line, col, "malformed number");
    TimeUnit unit;
    if (starts_with("ms")) {
      unit = TimeUnit::ms;
      advance(2);
    } else if (starts_with("us")) {
      unit = TimeUnit::us;
      advance(2);
    } else if (peek() == 's') {
      unit = TimeUnit::s;
      advance();
    } else {
      fail(line_, col_, "delay '" + raw + "' needs a time unit (ms, s, us)");
    }
    if (is_word(peek())) fail(line_, col_, "unknown time unit");
    Token t{TokenKind::Duration, line, col, raw};
    t.duration = FixedDelay{*v, unit};
    return t;
  }

  Token lex_coupling_delay() {
    const std::size_t line = line_, col = col_;
    const std::size_t start = pos_;
    advance(5);  // 1/(4J
    std::vector<std::string> labels;
    if (peek() == '{') {
      advance();
      while (true) {
        skip_space();
        if (!is_word(peek())) fail(line_, col_, "expected a spin label in coupling subscript");
        labels.push_back(read_word());
        skip_space();
        if (peek() == ',') {
          advance();
          continue;
        }
        if (peek() == '}') {
          advance();
          break;
        }
        fail(line_, col_, "expected ',' or '}' in coupling subscript");
      }
    } else {
      std::string sub;
      while (!at_end() && is_word(peek())) {
        sub += peek();
        advance();
      }
      auto parts = split_compact(sub);
      if (!parts) fail(line, col, "malformed coupling subscript '" + sub + "'");
      labels = std::move(*parts);
    }
    if (labels.size() != 2) fail(line, col, "a coupling delay names exactly two spins");
    if (peek() != ')') fail(line_, col_, "expected ')' to close the coupling delay");
    advance();
    Token t{TokenKind::CouplingDelay, line, col, std::string(src_.substr(start, pos_ - start))};
    t.a = labels[0];
    t.b = labels[1];
    return t;
  }

  std::string_view src_;
  std::size_t pos_ = 0;
  std::size_t line_ = 1;
  std::size_t col_ = 1;
};

}  // namespace detail

inline std::vector<Token> tokenize(std::string_view text) { return detail::Lexer(text).run(); }

// ---------------------------------------------------------------------------
// Parser

namespace detail {

class Parser {
 public:
  explicit Parser(const std::vector<Token>& tokens) : toks_(tokens) {
    if (toks_.empty() || toks_.back().kind != TokenKind::End)
      throw InputError("token list must end with an End token");
  }

  PulseSequence run() {
    PulseSequence seq;
    if (peek().kind == TokenKind::End) return seq;
    std::map<std::string, bool> decoupled;
    while (true) {
      const Token& first = peek();
      Element e = element();
      if (const auto* d = std::get_if<Decouple>(&e)) {
        bool& state = decoupled[d->spin];
        if (d->on && state) fail(first, "spin '" + d->spin + "' is already decoupled");
        if (!d->on && !state) fail(first, "decouple(" + d->spin + " off) without a matching 'on'");
        state = d->on;
      }
      collect_symbols(e, seq.parameters);
      seq.elements.push_back(std::move(e));
      if (peek().kind == TokenKind::End) break;
      expect(TokenKind::Dash, "expected '-' between sequence elements");
      if (peek().kind == TokenKind::End) fail(peek(), "sequence ends with a dangling '-'");
    }
    for (const auto& [spin, on] : decoupled)
      if (on) fail(peek(), "decouple(" + spin + " on) is never switched off");
    return seq;
  }

 private:
  [[noreturn]] static void fail(const Token& t, const std::string& msg) { throw SyntaxError(t.line, t.column, msg); }

  const Token& peek() const { return toks_[pos_]; }
  const Token& take() { return toks_[pos_ < toks_.size() - 1 ? pos_++ : pos_]; }

  const Token& expect(TokenKind k, const std::string& msg) {
    if (peek().kind != k) fail(peek(), msg + describe(peek()));
    return take();
  }

  static std::string describe(const Token& t) {
    if (t.kind == TokenKind::End) return " (found end of input)";
    return " (found '" + t.text + "')";
  }

  static void collect_symbols(const Element& e, std::set<std::string>& out) {
    auto delay_sym = [&](const Delay& d) {
      if (const auto* s = std::get_if<Symbol>(&d.spec)) out.insert(s->name);
    };
    if (const auto* p = std::get_if<Pulse>(&e)) {
      if (const auto* s = std::get_if<Symbol>(&p->angle)) out.insert(s->name);
    } else if (const auto* d = std::get_if<Delay>(&e)) {
      delay_sym(*d);
    } else if (const auto* r = std::get_if<Refocus>(&e)) {
      delay_sym(r->inner);
    }
  }

  Element element() {
    switch (peek().kind) {
      case TokenKind::LBracket: return pulse();
      case TokenKind::Refocus: {
        take();
        expect(TokenKind::LParen, "expected '(' after 'refocus'");
        Delay inner = delay();
        expect(TokenKind::RParen, "expected ')' to close refocus");
        return Refocus{std::move(inner)};
      }
      case TokenKind::Decouple: {
        take();
        expect(TokenKind::LParen, "expected '(' after 'decouple'");
        std::string spin = expect(TokenKind::Label, "expected a spin label in decouple").text;
        bool on;
        if (peek().kind == TokenKind::On) on = true;
        else if (peek().kind == TokenKind::Off) on = false;
        else fail(peek(), "expected 'on' or 'off'" + describe(peek()));
        take();
        expect(TokenKind::RParen, "expected ')' to close decouple");
        return Decouple{std::move(spin), on};
      }
      case TokenKind::CouplingDelay:
      case TokenKind::Duration:
      case TokenKind::Symbol: return delay();
      default: fail(peek(), "expected a pulse, delay, refocus or decouple element" + describe(peek()));
    }
  }

  Pulse pulse() {
    take();  // [
    const Token& a = expect(TokenKind::Angle, "expected a pulse angle");
    Pulse p;
    p.angle = *a.angle;
    expect(TokenKind::RBracket, "expected ']'");
    const Token& ax = expect(TokenKind::Axis, "expected a pulse axis after ']'");
    if (ax.text == "x") p.axis = Axis::x;
    else if (ax.text == "y") p.axis = Axis::y;
    else fail(ax, "unknown axis '" + ax.text + "' (pulses are along x or y)");
    expect(TokenKind::Caret, "expected '^' before the target spins");
    if (peek().kind == TokenKind::Label) {
      p.targets.push_back(take().text);
      return p;
    }
    const Token& lb = expect(TokenKind::LBrace, "expected '{' to open the target spins");
    if (peek().kind == TokenKind::RBrace) fail(lb, "empty target set");
    while (true) {
      const Token& l = expect(TokenKind::Label, "expected a spin label");
      if (std::find(p.targets.begin(), p.targets.end(), l.text) != p.targets.end())
        fail(l, "spin '" + l.text + "' listed twice");
      p.targets.push_back(l.text);
      if (peek().kind == TokenKind::Comma) {
        take();
        continue;
      }
      expect(TokenKind::RBrace, "expected ',' or '}' in target list");
      break;
    }
    return p;
  }

  Delay delay() {
    const Token& t = peek();
    switch (t.kind) {
      case TokenKind::CouplingDelay: take(); return Delay{CouplingQuarter{t.a, t.b}};
      case TokenKind::Duration: take(); return Delay{*t.duration};
      case TokenKind::Symbol: take(); return Delay{Symbol{t.text}};
      default: fail(t, "expected a delay" + describe(t));
    }
  }

  const std::vector<Token>& toks_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline PulseSequence parse(const std::vector<Token>& tokens) { return detail::Parser(tokens).run(); }
inline PulseSequence parse(std::string_view text) { return parse(tokenize(text)); }

inline PulseSequence load_sequence(const std::string& path) {
  const std::string text = read_text_file(path);
  try {
    return parse(text);
  } catch (const SyntaxError& e) {
    throw SyntaxError(e.line(), e.column(), path + ": " + e.message());
  }
}

// ---------------------------------------------------------------------------
// Formatter

namespace detail {

inline std::string shortest(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

inline std::string format_angle(const seq::Angle& a) {
  struct V {
    std::string operator()(const PiMultiple& p) const {
      std::string s;
      if (p.numerator == -1) s = "-";
      else if (p.numerator != 1) s = std::to_string(p.numerator);
      s += "pi";
      if (p.denominator != 1) s += "/" + std::to_string(p.denominator);
      return s;
    }
    std::string operator()(const Degrees& d) const { return shortest(d.value) + "deg"; }
    std::string operator()(const Radians& r) const { return shortest(r.value); }
    std::string operator()(const Symbol& s) const { return s.name; }
  };
  return std::visit(V{}, a);
}

inline std::string format_delay(const Delay& d) {
  struct V {
    std::string operator()(const CouplingQuarter& c) const {
      const std::string compact = c.a + c.b;
      auto parts = split_compact(compact);
      if (parts && parts->size() == 2 && (*parts)[0] == c.a && (*parts)[1] == c.b) return "1/(4J" + compact + ")";
      return "1/(4J{" + c.a + "," + c.b + "})";
    }
    std::string operator()(const FixedDelay& f) const {
      switch (f.unit) {
        case TimeUnit::s: return shortest(f.value) + "s";
        case TimeUnit::ms: return shortest(f.value) + "ms";
        case TimeUnit::us: return shortest(f.value) + "us";
      }
      return {};
    }
    std::string operator()(const Symbol& s) const { return s.name; }
  };
  return std::visit(V{}, d.spec);
}

}  // namespace detail

inline std::string format(const Element& e) {
  if (const auto* p = std::get_if<Pulse>(&e)) {
    std::string s = "[" + detail::format_angle(p->angle) + "]" + axis_name(p->axis) + "^{";
    for (std::size_t i = 0; i < p->targets.size(); ++i) s += (i ? "," : "") + p->targets[i];
    return s + "}";
  }
  if (const auto* d = std::get_if<Delay>(&e)) return detail::format_delay(*d);
  if (const auto* r = std::get_if<Refocus>(&e)) return "refocus(" + detail::format_delay(r->inner) + ")";
  const auto& dc = std::get<Decouple>(e);
  return "decouple(" + dc.spin + (dc.on ? " on)" : " off)");
}

inline std::string format(const PulseSequence& seq) {
  std::string s;
  for (std::size_t i = 0; i < seq.elements.size(); ++i) s += (i ? " - " : "") + format(seq.elements[i]);
  return s;
}

// ---------------------------------------------------------------------------
// Compiler

// Sense convention of the compiled dynamics: a pulse of flip angle b about
// phase a is exp(+i b I_a) and free precession under H is exp(+i H t). This is
// the one global sense for which the prepared states come out as printed
// (entangled state at angle theta, Bell state, read-out pattern).
inline constexpr double kPulseSense = -1.0;
inline constexpr double kPrecessionSense = -1.0;

namespace detail {

inline double lookup(const Binding& bind, const std::string& name, const char* what) {
  auto it = bind.find(name);
  if (it == bind.end()) throw InputError(std::string("unbound ") + what + " symbol '" + name + "'");
  if (!std::isfinite(it->second)) throw InputError("symbol '" + name + "' is not finite");
  return it->second;
}

inline double angle_value(const seq::Angle& a, const Binding& bind) {
  struct V {
    const Binding& bind;
    double operator()(const PiMultiple& p) const {
      return std::numbers::pi * static_cast<double>(p.numerator) / static_cast<double>(p.denominator);
    }
    double operator()(const Degrees& d) const { return d.value * std::numbers::pi / 180.0; }
    double operator()(const Radians& r) const { return r.value; }
    double operator()(const Symbol& s) const { return lookup(bind, s.name, "angle"); }
  };
  return std::visit(V{bind}, a);
}

inline double delay_seconds(const Delay& d, const SpinSystem& sys, const Binding& bind) {
  double t = 0;
  if (const auto* c = std::get_if<CouplingQuarter>(&d.spec)) {
    const std::size_t a = sys.index_of(c->a), b = sys.index_of(c->b);
    if (a == b) throw InputError("coupling delay names the same spin twice");
    if (!sys.has_coupling(a, b) || sys.coupling_hz(a, b) == 0.0)
      throw InputError("coupling " + c->a + "-" + c->b + " is not declared in the spin system");
    t = 1.0 / (4.0 * std::abs(sys.coupling_hz(a, b)));
  } else if (const auto* f = std::get_if<FixedDelay>(&d.spec)) {
    t = f->seconds();
  } else {
    t = lookup(bind, std::get<Symbol>(d.spec).name, "delay");
  }
  if (!(t >= 0)) throw InputError("delays must be non-negative");
  return t;
}

}  // namespace detail

inline PropagatorList compile(const PulseSequence& seq, const SpinSystem& sys, const Binding& bind = {}) {
  for (const auto& p : seq.parameters)
    if (!bind.contains(p)) throw InputError("unbound symbol '" + p + "'");
  const std::size_t n = sys.size();
  std::set<std::size_t> decoupled;

  auto precession = [&](double t) {
    std::vector<std::string> excluded;
    for (std::size_t k : decoupled) excluded.push_back(sys.label(k));
    auto e = zeeman_coupling_energies(sys, excluded);
    for (double& v : e) v *= kPrecessionSense;
    return Propagator{make_phase(e, t)};
  };

  PropagatorList out;
  for (const auto& el : seq.elements) {
    if (const auto* p = std::get_if<Pulse>(&el)) {
      std::vector<std::size_t> targets;
      for (const auto& l : p->targets) {
        const std::size_t k = sys.index_of(l);
        if (decoupled.contains(k)) throw InputError("pulse on decoupled spin '" + l + "'");
        targets.push_back(k);
      }
      out.push_back(make_rotation(kPulseSense * detail::angle_value(p->angle, bind), p->axis, targets, n));
    } else if (const auto* d = std::get_if<Delay>(&el)) {
      out.push_back(precession(detail::delay_seconds(*d, sys, bind)));
    } else if (const auto* r = std::get_if<Refocus>(&el)) {
      const double half = detail::delay_seconds(r->inner, sys, bind) / 2;
      std::vector<std::size_t> hard;
      for (std::size_t k = 1; k <= n; ++k)
        if (!decoupled.contains(k)) hard.push_back(k);
      if (hard.empty()) throw InputError("refocus with every spin decoupled");
      out.push_back(precession(half));
      out.push_back(make_rotation(kPulseSense * std::numbers::pi, Axis::x, hard, n));
      out.push_back(precession(half));
    } else {
      const auto& dc = std::get<Decouple>(el);
      const std::size_t k = sys.index_of(dc.spin);
      if (dc.on) {
        if (!decoupled.insert(k).second) throw InputError("spin '" + dc.spin + "' is already decoupled");
      } else if (decoupled.erase(k) == 0) {
        throw InputError("decouple(" + dc.spin + " off) without a matching 'on'");
      }
    }
  }
  if (!decoupled.empty()) throw InputError("sequence leaves a spin decoupled");
  return out;
}

// Spins decoupled before the first pulse or delay of the sequence.
inline std::vector<std::string> initially_decoupled(const PulseSequence& seq) {
  std::vector<std::string> out;
  for (const auto& el : seq.elements) {
    const auto* d = std::get_if<Decouple>(&el);
    if (!d) break;
    if (d->on) out.push_back(d->spin);
  }
  return out;
}

}  // namespace nmrdeco::seq
