#include "otf/expr.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "otf/errors.hpp"

namespace otf {

namespace {

struct Parser {
  const std::string& text;
  std::size_t pos = 0;

  explicit Parser(const std::string& s) : text(s) {}

  void skip_ws() {
    while (pos < text.size() && std::isspace(static_cast<unsigned char>(text[pos]))) ++pos;
  }

  bool eof() {
    skip_ws();
    return pos >= text.size();
  }

  char peek() {
    skip_ws();
    return pos < text.size() ? text[pos] : '\0';
  }

  bool consume(char c) {
    skip_ws();
    if (pos < text.size() && text[pos] == c) {
      ++pos;
      return true;
    }
    return false;
  }

  [[noreturn]] void fail(const std::string& msg) { throw ParseError(msg, pos); }

  // expression := term (('+'|'-') term)*
  std::shared_ptr<Expr> expression() {
    auto lhs = term();
    while (true) {
      if (consume('+')) {
        lhs = binary(Expr::Kind::add, lhs, term());
      } else if (consume('-')) {
        lhs = binary(Expr::Kind::sub, lhs, term());
      } else {
        return lhs;
      }
    }
  }

  // term := unary (('*'|'/') unary)*
  std::shared_ptr<Expr> term() {
    auto lhs = unary();
    while (true) {
      if (consume('*')) {
        lhs = binary(Expr::Kind::mul, lhs, unary());
      } else if (consume('/')) {
        lhs = binary(Expr::Kind::div, lhs, unary());
      } else {
        return lhs;
      }
    }
  }

  // unary := '-' unary | power
  std::shared_ptr<Expr> unary() {
    if (consume('-')) {
      auto e = std::make_shared<Expr>();
      e->kind_ = Expr::Kind::negate;
      e->lhs_ = unary();
      return e;
    }
    return power();
  }

  // power := atom ('^' unary)?   -- right-associative, binds above unary minus
  std::shared_ptr<Expr> power() {
    auto base = atom();
    if (consume('^')) {
      // exponent may itself carry a unary minus or another power
      auto expo = unary_for_exponent();
      return binary(Expr::Kind::pow, base, expo);
    }
    return base;
  }

  std::shared_ptr<Expr> unary_for_exponent() {
    if (consume('-')) {
      auto e = std::make_shared<Expr>();
      e->kind_ = Expr::Kind::negate;
      e->lhs_ = unary_for_exponent();
      return e;
    }
    return power();
  }

  std::shared_ptr<Expr> atom() {
    skip_ws();
    if (pos >= text.size()) fail("unexpected end of expression");
    char c = text[pos];
    if (c == '(') {
      ++pos;
      auto e = expression();
      if (!consume(')')) fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return name_or_call();
    fail(std::string("unexpected character '") + c + "'");
  }

  std::shared_ptr<Expr> number() {
    std::size_t start = pos;
    while (pos < text.size() &&
           (std::isdigit(static_cast<unsigned char>(text[pos])) || text[pos] == '.'))
      ++pos;
    // exponent part
    if (pos < text.size() && (text[pos] == 'e' || text[pos] == 'E')) {
      std::size_t mark = pos;
      ++pos;
      if (pos < text.size() && (text[pos] == '+' || text[pos] == '-')) ++pos;
      if (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
        while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) ++pos;
      } else {
        pos = mark;  // 'e' belongs to a following name, not this literal
      }
    }
    try {
      auto e = std::make_shared<Expr>();
      e->kind_ = Expr::Kind::literal;
      e->value_ = std::stod(text.substr(start, pos - start));
      return e;
    } catch (const std::exception&) {
      pos = start;
      fail("malformed number");
    }
  }

  std::shared_ptr<Expr> name_or_call() {
    std::size_t start = pos;
    while (pos < text.size() &&
           (std::isalnum(static_cast<unsigned char>(text[pos])) || text[pos] == '_'))
      ++pos;
    std::string name = text.substr(start, pos - start);
    if (peek() == '(') {
      static const char* kFunctions[] = {"exp", "log", "sqrt", "abs"};
      bool known = std::any_of(std::begin(kFunctions), std::end(kFunctions),
                               [&](const char* f) { return name == f; });
      if (!known) {
        pos = start;
        fail("unknown function '" + name + "'");
      }
      consume('(');
      auto arg = expression();
      if (!consume(')')) fail("expected ')' after function argument");
      auto e = std::make_shared<Expr>();
      e->kind_ = Expr::Kind::call;
      e->name_ = name;
      e->lhs_ = arg;
      return e;
    }
    auto e = std::make_shared<Expr>();
    e->kind_ = Expr::Kind::parameter;
    e->name_ = name;
    return e;
  }

  static std::shared_ptr<Expr> binary(Expr::Kind kind,
                                      std::shared_ptr<const Expr> lhs,
                                      std::shared_ptr<const Expr> rhs) {
    auto e = std::make_shared<Expr>();
    e->kind_ = kind;
    e->lhs_ = std::move(lhs);
    e->rhs_ = std::move(rhs);
    return e;
  }
};

}  // namespace

ExprPtr parse_expr(const std::string& text) {
  Parser p(text);
  if (p.eof()) throw ParseError("empty expression", 0);
  auto e = p.expression();
  if (!p.eof()) throw ParseError("trailing input", p.pos);
  return e;
}

std::shared_ptr<const Expr> Expr::literal(double v) {
  auto e = std::make_shared<Expr>();
  e->kind_ = Kind::literal;
  e->value_ = v;
  return e;
}

std::shared_ptr<const Expr> Expr::parameter(std::string name) {
  auto e = std::make_shared<Expr>();
  e->kind_ = Kind::parameter;
  e->name_ = std::move(name);
  return e;
}

double Expr::eval(const std::map<std::string, double>& params) const {
  switch (kind_) {
    case Kind::literal:
      return value_;
    case Kind::parameter: {
      auto it = params.find(name_);
      if (it == params.end()) throw UnboundParameter(name_);
      return it->second;
    }
    case Kind::negate:
      return -lhs_->eval(params);
    case Kind::add:
      return lhs_->eval(params) + rhs_->eval(params);
    case Kind::sub:
      return lhs_->eval(params) - rhs_->eval(params);
    case Kind::mul:
      return lhs_->eval(params) * rhs_->eval(params);
    case Kind::div: {
      double denom = rhs_->eval(params);
      if (denom == 0.0) throw EvalError("division by zero");
      return lhs_->eval(params) / denom;
    }
    case Kind::pow: {
      double b = lhs_->eval(params);
      double e = rhs_->eval(params);
      double r = std::pow(b, e);
      if (!std::isfinite(r)) throw EvalError("power out of domain");
      return r;
    }
    case Kind::call: {
      double a = lhs_->eval(params);
      if (name_ == "exp") {
        double r = std::exp(a);
        if (!std::isfinite(r)) throw EvalError("exp overflow");
        return r;
      }
      if (name_ == "log") {
        if (a <= 0.0) throw EvalError("log of non-positive value");
        return std::log(a);
      }
      if (name_ == "sqrt") {
        if (a < 0.0) throw EvalError("sqrt of negative value");
        return std::sqrt(a);
      }
      if (name_ == "abs") return std::fabs(a);
      throw EvalError("unknown function " + name_);
    }
  }
  throw EvalError("corrupt expression node");
}

void Expr::collect_names(std::vector<std::string>& out) const {
  if (kind_ == Kind::parameter) out.push_back(name_);
  if (lhs_) lhs_->collect_names(out);
  if (rhs_) rhs_->collect_names(out);
}

std::vector<std::string> Expr::parameter_names() const {
  std::vector<std::string> out;
  collect_names(out);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::string Expr::print() const {
  switch (kind_) {
    case Kind::literal: {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.17g", value_);
      return buf;
    }
    case Kind::parameter:
      return name_;
    case Kind::negate:
      return "(-" + lhs_->print() + ")";
    case Kind::add:
      return "(" + lhs_->print() + "+" + rhs_->print() + ")";
    case Kind::sub:
      return "(" + lhs_->print() + "-" + rhs_->print() + ")";
    case Kind::mul:
      return "(" + lhs_->print() + "*" + rhs_->print() + ")";
    case Kind::div:
      return "(" + lhs_->print() + "/" + rhs_->print() + ")";
    case Kind::pow:
      return "(" + lhs_->print() + "^" + rhs_->print() + ")";
    case Kind::call:
      return name_ + "(" + lhs_->print() + ")";
  }
  return "";
}

double eval_expr(const Expr& e, const std::map<std::string, double>& params) {
  return e.eval(params);
}

}  // namespace otf
