#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace riskvi {

struct ExprError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Small arithmetic expressions over the variables x1, x2 and u with the
/// operators + - * / ^ and the functions exp, log, min, max, abs.  Parsed
/// once into a postfix program and evaluated with a fixed-size stack, so
/// evaluation is cheap enough for per-step use in simulations.
///
///   expr   := term (('+' | '-') term)*
///   term   := unary (('*' | '/') unary)*
///   unary  := '-' unary | power
///   power  := atom ('^' unary)?
///   atom   := number | 'x1' | 'x2' | 'u' | func '(' expr (',' expr)? ')'
///           | '(' expr ')'
class Expr {
 public:
  Expr() = default;

  static Expr parse(std::string_view source);

  double operator()(double x1, double x2 = 0.0, double u = 0.0) const {
    double stack[64];
    int top = -1;
    for (const Op& op : program_) {
      switch (op.code) {
        case Code::Const: stack[++top] = op.value; break;
        case Code::X1: stack[++top] = x1; break;
        case Code::X2: stack[++top] = x2; break;
        case Code::U: stack[++top] = u; break;
        case Code::Neg: stack[top] = -stack[top]; break;
        case Code::Exp: stack[top] = std::exp(stack[top]); break;
        case Code::Log: stack[top] = std::log(stack[top]); break;
        case Code::Abs: stack[top] = std::abs(stack[top]); break;
        case Code::Add: --top; stack[top] += stack[top + 1]; break;
        case Code::Sub: --top; stack[top] -= stack[top + 1]; break;
        case Code::Mul: --top; stack[top] *= stack[top + 1]; break;
        case Code::Div: --top; stack[top] /= stack[top + 1]; break;
        case Code::Pow: --top; stack[top] = std::pow(stack[top], stack[top + 1]); break;
        case Code::Min: --top; stack[top] = std::min(stack[top], stack[top + 1]); break;
        case Code::Max: --top; stack[top] = std::max(stack[top], stack[top + 1]); break;
      }
    }
    return stack[0];
  }

  /// Fully parenthesized text form; parsing it back yields an equivalent
  /// program (round-trip property).
  std::string to_string() const;

  bool empty() const { return program_.empty(); }

  /// True when the program reads the given variable.
  bool uses_x2() const { return uses(Code::X2); }
  bool uses_u() const { return uses(Code::U); }

 private:
  enum class Code {
    Const, X1, X2, U, Neg, Exp, Log, Abs, Add, Sub, Mul, Div, Pow, Min, Max
  };
  struct Op {
    Code code;
    double value = 0.0;
  };

  bool uses(Code c) const {
    for (const Op& op : program_) {
      if (op.code == c) return true;
    }
    return false;
  }

  std::vector<Op> program_;

  friend class ExprParser;
};

namespace detail {

class ExprTokens {
 public:
  explicit ExprTokens(std::string_view src) : src_(src) {}

  void skip_space() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
  }
  bool done() {
    skip_space();
    return pos_ >= src_.size();
  }
  char peek() {
    skip_space();
    return pos_ < src_.size() ? src_[pos_] : '\0';
  }
  char take() {
    skip_space();
    if (pos_ >= src_.size()) throw ExprError("unexpected end of expression");
    return src_[pos_++];
  }
  void expect(char c) {
    const char got = take();
    if (got != c) {
      throw ExprError(std::string("expected '") + c + "', got '" + got + "'");
    }
  }
  std::string identifier() {
    skip_space();
    std::string id;
    while (pos_ < src_.size() &&
           (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) {
      id += src_[pos_++];
    }
    return id;
  }
  double number() {
    skip_space();
    const char* begin = src_.data() + pos_;
    const char* end = src_.data() + src_.size();
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc()) throw ExprError("malformed number");
    pos_ += static_cast<std::size_t>(ptr - begin);
    return value;
  }
  std::size_t position() const { return pos_; }

 private:
  std::string_view src_;
  std::size_t pos_ = 0;
};

}  // namespace detail

class ExprParser {
 public:
  static Expr run(std::string_view src) {
    detail::ExprTokens tokens(src);
    Expr expr;
    ExprParser parser(tokens, expr);
    parser.expression();
    if (!tokens.done()) {
      throw ExprError("trailing input at position " +
                      std::to_string(tokens.position()));
    }
    if (expr.program_.empty()) throw ExprError("empty expression");
    // evaluation uses a fixed 64-slot stack; bound the depth up front
    int depth = 0, peak = 0;
    for (const auto& op : expr.program_) {
      switch (op.code) {
        case Code::Const: case Code::X1: case Code::X2: case Code::U:
          peak = std::max(peak, ++depth);
          break;
        case Code::Add: case Code::Sub: case Code::Mul: case Code::Div:
        case Code::Pow: case Code::Min: case Code::Max:
          --depth;
          break;
        default:
          break;
      }
    }
    if (peak > 64) throw ExprError("expression nests too deeply");
    return expr;
  }

 private:
  using Code = Expr::Code;

  ExprParser(detail::ExprTokens& tokens, Expr& out) : tokens_(tokens), out_(out) {}

  detail::ExprTokens& tokens_;
  Expr& out_;
  int depth_ = 0;

  void emit(Code code, double value = 0.0) {
    out_.program_.push_back(Expr::Op{code, value});
  }

  void expression() {
    if (++depth_ > 256) throw ExprError("expression nests too deeply");
    term();
    while (true) {
      const char c = tokens_.peek();
      if (c == '+' || c == '-') {
        tokens_.take();
        term();
        emit(c == '+' ? Code::Add : Code::Sub);
      } else {
        --depth_;
        return;
      }
    }
  }

  void term() {
    unary();
    while (true) {
      const char c = tokens_.peek();
      if (c == '*' || c == '/') {
        tokens_.take();
        unary();
        emit(c == '*' ? Code::Mul : Code::Div);
      } else {
        return;
      }
    }
  }

  void unary() {
    if (tokens_.peek() == '-') {
      tokens_.take();
      unary();
      emit(Code::Neg);
      return;
    }
    power();
  }

  void power() {
    atom();
    if (tokens_.peek() == '^') {
      tokens_.take();
      unary();  // right-associative, allows 2^-3
      emit(Code::Pow);
    }
  }

  void atom() {
    const char c = tokens_.peek();
    if (c == '(') {
      tokens_.take();
      expression();
      tokens_.expect(')');
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      emit(Code::Const, tokens_.number());
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::string id = tokens_.identifier();
      if (id == "x1") { emit(Code::X1); return; }
      if (id == "x2") { emit(Code::X2); return; }
      if (id == "u") { emit(Code::U); return; }
      if (id == "exp" || id == "log" || id == "abs") {
        tokens_.expect('(');
        expression();
        tokens_.expect(')');
        emit(id == "exp" ? Code::Exp : id == "log" ? Code::Log : Code::Abs);
        return;
      }
      if (id == "min" || id == "max") {
        tokens_.expect('(');
        expression();
        tokens_.expect(',');
        expression();
        tokens_.expect(')');
        emit(id == "min" ? Code::Min : Code::Max);
        return;
      }
      throw ExprError("unknown identifier '" + id + "'");
    }
    throw ExprError(std::string("unexpected character '") + c + "'");
  }
};

inline Expr Expr::parse(std::string_view source) { return ExprParser::run(source); }

inline std::string Expr::to_string() const {
  std::vector<std::string> stack;
  const auto pop = [&stack]() {
    std::string s = std::move(stack.back());
    stack.pop_back();
    return s;
  };
  const auto binary = [&](const char* op) {
    const std::string rhs = pop();
    const std::string lhs = pop();
    stack.push_back("(" + lhs + op + rhs + ")");
  };
  const auto call = [&](const char* name, int arity) {
    if (arity == 1) {
      const std::string a = pop();
      stack.push_back(std::string(name) + "(" + a + ")");
    } else {
      const std::string b = pop();
      const std::string a = pop();
      stack.push_back(std::string(name) + "(" + a + "," + b + ")");
    }
  };
  for (const Op& op : program_) {
    switch (op.code) {
      case Code::Const: {
        char buf[32];
        const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), op.value);
        stack.emplace_back(buf, ptr);
        break;
      }
      case Code::X1: stack.emplace_back("x1"); break;
      case Code::X2: stack.emplace_back("x2"); break;
      case Code::U: stack.emplace_back("u"); break;
      case Code::Neg: stack.back() = "(-" + stack.back() + ")"; break;
      case Code::Exp: call("exp", 1); break;
      case Code::Log: call("log", 1); break;
      case Code::Abs: call("abs", 1); break;
      case Code::Add: binary("+"); break;
      case Code::Sub: binary("-"); break;
      case Code::Mul: binary("*"); break;
      case Code::Div: binary("/"); break;
      case Code::Pow: binary("^"); break;
      case Code::Min: call("min", 2); break;
      case Code::Max: call("max", 2); break;
    }
  }
  return stack.empty() ? std::string() : stack.back();
}

}  // namespace riskvi
