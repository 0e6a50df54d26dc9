#ifndef OTF_EXPR_HPP
#define OTF_EXPR_HPP

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace otf {

// Arithmetic expressions over named parameters:
//   literals, names, unary minus, + - * / ^ (right-assoc ^), and
//   exp, log, sqrt, abs. Parsed by recursive descent.
class Expr {
 public:
  enum class Kind { literal, parameter, negate, add, sub, mul, div, pow, call };

  Kind kind() const { return kind_; }
  double value() const { return value_; }
  const std::string& name() const { return name_; }

  double eval(const std::map<std::string, double>& params) const;

  // Names referenced anywhere in the tree (sorted, unique).
  std::vector<std::string> parameter_names() const;

  // Canonical fully-parenthesized form; parse(print(e)) reproduces e.
  std::string print() const;

  static std::shared_ptr<const Expr> literal(double v);
  static std::shared_ptr<const Expr> parameter(std::string name);

  friend std::shared_ptr<const Expr> parse_expr(const std::string& text);

 private:
  Kind kind_ = Kind::literal;
  double value_ = 0.0;
  std::string name_;  // parameter or function name
  std::shared_ptr<const Expr> lhs_, rhs_;

  void collect_names(std::vector<std::string>& out) const;
};

using ExprPtr = std::shared_ptr<const Expr>;

ExprPtr parse_expr(const std::string& text);

double eval_expr(const Expr& e, const std::map<std::string, double>& params);

}  // namespace otf

#endif  // OTF_EXPR_HPP
