#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace sheetspace {

// Parse error with the byte offset of the failure and the tokens that would
// have been accepted there.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string msg, std::size_t offset, std::string expected)
      : std::runtime_error(std::move(msg)), offset_(offset),
        expected_(std::move(expected)) {}
  std::size_t offset() const { return offset_; }
  const std::string& expected() const { return expected_; }

 private:
  std::size_t offset_;
  std::string expected_;
};

// Evaluation error (unbound variable or numeric domain violation); carries
// the offending subexpression rendered back to text.
class EvalError : public std::runtime_error {
 public:
  EvalError(std::string msg, std::string subexpr)
      : std::runtime_error(std::move(msg)), subexpr_(std::move(subexpr)) {}
  const std::string& subexpr() const { return subexpr_; }

 private:
  std::string subexpr_;
};

// Arithmetic expression over real literals, named variables, + - * / unary -,
// ^ with integer exponents, and the functions sin cos tan exp log sqrt cosh
// sinh atan2 abs.
//
// Grammar (precedence climbing):
//   sum    := prod (('+'|'-') prod)*
//   prod   := unary (('*'|'/') unary)*
//   unary  := '-' unary | power
//   power  := atom ('^' ['-'] integer)?        ^ binds tighter than unary -
//   atom   := number | ident | ident '(' sum (',' sum)* ')' | '(' sum ')'
//
// Trees are immutable after parse; eval is reentrant.
class Expression {
 public:
  enum class Kind : std::uint8_t { number, variable, unary_minus, binary, call };
  // binary ops: '+','-','*','/'; '^' is stored as kind==binary, op=='^',
  // with the integer exponent in ipow.
  struct Node {
    Kind kind;
    char op = 0;             // binary op tag
    double value = 0.0;      // number
    long ipow = 0;           // '^' exponent
    int a = -1, b = -1;      // child indices
    std::string name;        // variable or function name
  };

  static Expression parse(std::string_view src);

  double eval(const std::map<std::string, double>& bindings) const;

  // Compiled form: variable names resolved to slots once, evaluated against a
  // flat argument array. Used in per-vertex loops.
  class Compiled {
   public:
    double eval(const double* args) const;

   private:
    friend class Expression;
    struct Instr {
      Kind kind;
      char op;
      double value;
      long ipow;
      int slot;        // variable slot
      int node;        // originating AST node, for diagnostics
      int fn = -1;     // function table index
    };
    std::vector<Instr> program_;  // postfix order
    std::string source_text_;     // rendered source, for error messages
  };

  // Unknown names resolve lazily: an identifier absent from `names` is an
  // eval-time error, not a compile-time one.
  Compiled compile(const std::vector<std::string>& names) const;

  std::string to_string() const;
  const std::string& source() const { return source_; }

  // Structural tree equality (names, literals, shape).
  bool same_structure(const Expression& other) const;

  const std::vector<Node>& nodes() const { return nodes_; }
  int root() const { return root_; }

 private:
  std::string print_node(int idx, int parent_prec) const;

  std::vector<Node> nodes_;
  int root_ = -1;
  std::string source_;
};

}  // namespace sheetspace
