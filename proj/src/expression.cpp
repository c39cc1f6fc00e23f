#include "sheetspace/expression.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstring>

namespace sheetspace {

namespace {

struct FnEntry {
  const char* name;
  int arity;
  double (*f1)(double);
  double (*f2)(double, double);
};

double fn_abs(double x) { return std::fabs(x); }

constexpr int kNumFns = 10;
const std::array<FnEntry, kNumFns>& fn_table() {
  static const std::array<FnEntry, kNumFns> t = {{
      {"sin", 1, std::sin, nullptr},
      {"cos", 1, std::cos, nullptr},
      {"tan", 1, std::tan, nullptr},
      {"exp", 1, std::exp, nullptr},
      {"log", 1, std::log, nullptr},
      {"sqrt", 1, std::sqrt, nullptr},
      {"cosh", 1, std::cosh, nullptr},
      {"sinh", 1, std::sinh, nullptr},
      {"atan2", 2, nullptr, std::atan2},
      {"abs", 1, fn_abs, nullptr},
  }};
  return t;
}

int fn_index(const std::string& name) {
  const auto& t = fn_table();
  for (int i = 0; i < kNumFns; ++i)
    if (name == t[i].name) return i;
  return -1;
}

// Integer power by repeated squaring; negative exponents via reciprocal.
// Shared by both interpreter paths so they agree bit for bit.
double ipow_checked(double base, long e, const std::string& where) {
  bool neg = e < 0;
  unsigned long k = neg ? static_cast<unsigned long>(-e)
                        : static_cast<unsigned long>(e);
  if (neg && base == 0.0)
    throw EvalError("zero raised to a negative power", where);
  double acc = 1.0, b = base;
  while (k) {
    if (k & 1ul) acc *= b;
    b *= b;
    k >>= 1;
  }
  return neg ? 1.0 / acc : acc;
}

struct Parser {
  std::string_view src;
  std::size_t pos = 0;
  std::vector<Expression::Node>* nodes;

  void skip_ws() {
    while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos])))
      ++pos;
  }

  bool at_end() {
    skip_ws();
    return pos >= src.size();
  }

  char peek() {
    skip_ws();
    return pos < src.size() ? src[pos] : '\0';
  }

  [[noreturn]] void fail(const std::string& expected) {
    skip_ws();
    std::string msg = "parse error at offset " + std::to_string(pos) +
                      ": expected " + expected;
    if (pos < src.size()) msg += std::string(", found '") + src[pos] + "'";
    else msg += ", found end of input";
    throw ParseError(msg, pos, expected);
  }

  void expect(char c, const char* what) {
    if (peek() != c) fail(what);
    ++pos;
  }

  int add(Expression::Node n) {
    nodes->push_back(std::move(n));
    return static_cast<int>(nodes->size() - 1);
  }

  int parse_sum() {
    int lhs = parse_prod();
    while (true) {
      char c = peek();
      if (c != '+' && c != '-') return lhs;
      ++pos;
      int rhs = parse_prod();
      Expression::Node n;
      n.kind = Expression::Kind::binary;
      n.op = c;
      n.a = lhs;
      n.b = rhs;
      lhs = add(std::move(n));
    }
  }

  int parse_prod() {
    int lhs = parse_unary();
    while (true) {
      char c = peek();
      if (c != '*' && c != '/') return lhs;
      ++pos;
      int rhs = parse_unary();
      Expression::Node n;
      n.kind = Expression::Kind::binary;
      n.op = c;
      n.a = lhs;
      n.b = rhs;
      lhs = add(std::move(n));
    }
  }

  int parse_unary() {
    if (peek() == '-') {
      ++pos;
      int child = parse_unary();
      Expression::Node n;
      n.kind = Expression::Kind::unary_minus;
      n.a = child;
      return add(std::move(n));
    }
    return parse_power();
  }

  int parse_power() {
    int base = parse_atom();
    if (peek() != '^') return base;
    ++pos;
    bool neg = false;
    if (peek() == '-') {
      neg = true;
      ++pos;
    }
    skip_ws();
    std::size_t start = pos;
    while (pos < src.size() && std::isdigit(static_cast<unsigned char>(src[pos])))
      ++pos;
    if (pos == start) {
      pos = start;
      fail("integer exponent");
    }
    long e = 0;
    auto res = std::from_chars(src.data() + start, src.data() + pos, e);
    if (res.ec != std::errc{}) {
      pos = start;
      fail("integer exponent in range");
    }
    Expression::Node n;
    n.kind = Expression::Kind::binary;
    n.op = '^';
    n.a = base;
    n.ipow = neg ? -e : e;
    return add(std::move(n));
  }

  int parse_atom() {
    skip_ws();
    if (pos >= src.size()) fail("number, name or '('");
    char c = src[pos];
    if (c == '(') {
      ++pos;
      int inner = parse_sum();
      expect(')', "')'");
      return inner;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      double v = 0.0;
      const char* begin = src.data() + pos;
      const char* end = src.data() + src.size();
      auto res = std::from_chars(begin, end, v);
      if (res.ec != std::errc{}) fail("number");
      pos += static_cast<std::size_t>(res.ptr - begin);
      Expression::Node n;
      n.kind = Expression::Kind::number;
      n.value = v;
      return add(std::move(n));
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      std::size_t start = pos;
      while (pos < src.size() &&
             (std::isalnum(static_cast<unsigned char>(src[pos])) || src[pos] == '_'))
        ++pos;
      std::string name(src.substr(start, pos - start));
      if (peek() == '(') {
        int fi = fn_index(name);
        if (fi < 0) {
          pos = start;
          fail("known function name");
        }
        ++pos;
        Expression::Node n;
        n.kind = Expression::Kind::call;
        n.name = name;
        n.a = parse_sum();
        if (fn_table()[static_cast<std::size_t>(fi)].arity == 2) {
          expect(',', "','");
          n.b = parse_sum();
        }
        expect(')', "')'");
        return add(std::move(n));
      }
      Expression::Node n;
      n.kind = Expression::Kind::variable;
      n.name = name;
      return add(std::move(n));
    }
    fail("number, name or '('");
  }
};

}  // namespace

Expression Expression::parse(std::string_view src) {
  if (src.find_first_not_of(" \t\n\r") == std::string_view::npos)
    throw ParseError("parse error: empty input", 0, "expression");
  Expression e;
  e.source_ = std::string(src);
  Parser p{src, 0, &e.nodes_};
  e.root_ = p.parse_sum();
  if (!p.at_end()) p.fail("end of input or operator");
  return e;
}

namespace {

double eval_node(const std::vector<Expression::Node>& nodes, int idx,
                 const std::map<std::string, double>& bindings,
                 const Expression& self) {
  const auto& n = nodes[static_cast<std::size_t>(idx)];
  switch (n.kind) {
    case Expression::Kind::number:
      return n.value;
    case Expression::Kind::variable: {
      auto it = bindings.find(n.name);
      if (it == bindings.end())
        throw EvalError("unbound variable '" + n.name + "'", n.name);
      return it->second;
    }
    case Expression::Kind::unary_minus:
      return -eval_node(nodes, n.a, bindings, self);
    case Expression::Kind::binary: {
      double a = eval_node(nodes, n.a, bindings, self);
      switch (n.op) {
        case '+': return a + eval_node(nodes, n.b, bindings, self);
        case '-': return a - eval_node(nodes, n.b, bindings, self);
        case '*': return a * eval_node(nodes, n.b, bindings, self);
        case '/': {
          double b = eval_node(nodes, n.b, bindings, self);
          if (b == 0.0)
            throw EvalError("division by zero", self.to_string());
          return a / b;
        }
        case '^': return ipow_checked(a, n.ipow, self.to_string());
      }
      break;
    }
    case Expression::Kind::call: {
      int fi = fn_index(n.name);
      const auto& fe = fn_table()[static_cast<std::size_t>(fi)];
      double a = eval_node(nodes, n.a, bindings, self);
      if (fe.arity == 2)
        return fe.f2(a, eval_node(nodes, n.b, bindings, self));
      if (fe.f1 == static_cast<double (*)(double)>(std::log) && a <= 0.0)
        throw EvalError("log of non-positive value", self.to_string());
      if (fe.f1 == static_cast<double (*)(double)>(std::sqrt) && a < 0.0)
        throw EvalError("sqrt of negative value", self.to_string());
      return fe.f1(a);
    }
  }
  throw EvalError("malformed expression tree", self.to_string());
}

}  // namespace

double Expression::eval(const std::map<std::string, double>& bindings) const {
  return eval_node(nodes_, root_, bindings, *this);
}

Expression::Compiled Expression::compile(
    const std::vector<std::string>& names) const {
  Compiled c;
  c.source_text_ = to_string();
  // Emit postfix by explicit stack walk.
  std::vector<std::pair<int, bool>> stack;  // (node, children emitted)
  stack.push_back({root_, false});
  while (!stack.empty()) {
    auto [idx, done] = stack.back();
    stack.pop_back();
    const Node& n = nodes_[static_cast<std::size_t>(idx)];
    if (!done) {
      stack.push_back({idx, true});
      if (n.b >= 0) stack.push_back({n.b, false});
      if (n.a >= 0 && n.kind != Kind::number && n.kind != Kind::variable)
        stack.push_back({n.a, false});
      if (n.kind == Kind::number || n.kind == Kind::variable) {
        stack.pop_back();  // leaves emit immediately
        Compiled::Instr in{n.kind, 0, n.value, 0, -1, idx, -1};
        if (n.kind == Kind::variable) {
          auto it = std::find(names.begin(), names.end(), n.name);
          if (it == names.end())
            throw EvalError("unbound variable '" + n.name + "'", n.name);
          in.slot = static_cast<int>(it - names.begin());
        }
        c.program_.push_back(in);
      }
      continue;
    }
    Compiled::Instr in{n.kind, n.op, 0.0, n.ipow, -1, idx, -1};
    if (n.kind == Kind::call) in.fn = fn_index(n.name);
    c.program_.push_back(in);
  }
  // The evaluator uses a fixed stack; reject programs that would overflow it.
  int depth = 0, maxdepth = 0;
  for (const auto& in : c.program_) {
    if (in.kind == Kind::number || in.kind == Kind::variable)
      ++depth;
    else if ((in.kind == Kind::binary && in.op != '^') ||
             (in.kind == Kind::call && in.fn >= 0 &&
              fn_table()[static_cast<std::size_t>(in.fn)].arity == 2))
      --depth;
    maxdepth = std::max(maxdepth, depth);
  }
  if (maxdepth > 63)
    throw EvalError("expression nests too deeply to evaluate", to_string());
  return c;
}

double Expression::Compiled::eval(const double* args) const {
  double stack[64];
  int top = -1;
  for (const auto& in : program_) {
    switch (in.kind) {
      case Kind::number:
        stack[++top] = in.value;
        break;
      case Kind::variable:
        stack[++top] = args[in.slot];
        break;
      case Kind::unary_minus:
        stack[top] = -stack[top];
        break;
      case Kind::binary: {
        switch (in.op) {
          case '^':
            stack[top] = ipow_checked(stack[top], in.ipow, source_text_);
            break;
          case '+':
            --top;
            stack[top] += stack[top + 1];
            break;
          case '-':
            --top;
            stack[top] -= stack[top + 1];
            break;
          case '*':
            --top;
            stack[top] *= stack[top + 1];
            break;
          case '/':
            --top;
            if (stack[top + 1] == 0.0)
              throw EvalError("division by zero", source_text_);
            stack[top] /= stack[top + 1];
            break;
        }
        break;
      }
      case Kind::call: {
        const auto& fe = fn_table()[static_cast<std::size_t>(in.fn)];
        if (fe.arity == 2) {
          --top;
          stack[top] = fe.f2(stack[top], stack[top + 1]);
        } else {
          double a = stack[top];
          if (fe.f1 == static_cast<double (*)(double)>(std::log) && a <= 0.0)
            throw EvalError("log of non-positive value", source_text_);
          if (fe.f1 == static_cast<double (*)(double)>(std::sqrt) && a < 0.0)
            throw EvalError("sqrt of negative value", source_text_);
          stack[top] = fe.f1(a);
        }
        break;
      }
    }
  }
  return stack[0];
}

namespace {
// Precedence levels used by the printer; parenthesize a child whenever its
// level is below the context's.
constexpr int kPrecSum = 1, kPrecProd = 2, kPrecUnary = 3, kPrecPow = 4,
              kPrecAtom = 5;
}  // namespace

std::string Expression::print_node(int idx, int parent_prec) const {
  const Node& n = nodes_[static_cast<std::size_t>(idx)];
  std::string out;
  int prec = kPrecAtom;
  switch (n.kind) {
    case Kind::number: {
      char buf[32];
      auto res = std::to_chars(buf, buf + sizeof buf, n.value,
                               std::chars_format::general, 17);
      out.assign(buf, res.ptr);
      if (n.value < 0) prec = kPrecUnary;  // shouldn't occur from parse
      break;
    }
    case Kind::variable:
      out = n.name;
      break;
    case Kind::unary_minus:
      prec = kPrecUnary;
      out = "-" + print_node(n.a, kPrecUnary);
      break;
    case Kind::binary: {
      if (n.op == '^') {
        prec = kPrecPow;
        out = print_node(n.a, kPrecAtom) + "^" +
              (n.ipow < 0 ? "-" + std::to_string(-n.ipow)
                          : std::to_string(n.ipow));
      } else if (n.op == '+' || n.op == '-') {
        prec = kPrecSum;
        // right child one level up to preserve left association of '-'
        out = print_node(n.a, kPrecSum) + n.op + print_node(n.b, kPrecSum + 1);
      } else {
        prec = kPrecProd;
        out = print_node(n.a, kPrecProd) + n.op + print_node(n.b, kPrecProd + 1);
      }
      break;
    }
    case Kind::call:
      out = n.name + "(" + print_node(n.a, 0) +
            (n.b >= 0 ? "," + print_node(n.b, 0) : "") + ")";
      break;
  }
  if (prec < parent_prec) return "(" + out + ")";
  return out;
}

std::string Expression::to_string() const { return print_node(root_, 0); }

namespace {
bool same_node(const std::vector<Expression::Node>& an, int ai,
               const std::vector<Expression::Node>& bn, int bi) {
  if ((ai < 0) != (bi < 0)) return false;
  if (ai < 0) return true;
  const auto& a = an[static_cast<std::size_t>(ai)];
  const auto& b = bn[static_cast<std::size_t>(bi)];
  if (a.kind != b.kind || a.op != b.op || a.name != b.name ||
      a.ipow != b.ipow)
    return false;
  if (a.kind == Expression::Kind::number && a.value != b.value) return false;
  return same_node(an, a.a, bn, b.a) && same_node(an, a.b, bn, b.b);
}
}  // namespace

bool Expression::same_structure(const Expression& other) const {
  return same_node(nodes_, root_, other.nodes_, other.root_);
}

}  // namespace sheetspace
