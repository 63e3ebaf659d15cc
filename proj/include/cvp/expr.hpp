#pragma once

// Coefficient expressions over x1..xd: parsing, evaluation, printing and
// exact symbolic differentiation.
//
// Grammar (precedence high to low):
//   primary  := number | x<i> | func '(' args ')' | '(' expr ')'
//   power    := primary [ '^' unary ]          right-associative
//   unary    := '-' unary | power
//   term     := unary { ('*' | '/') unary }
//   expr     := term { ('+' | '-') term }
// so -x1^2 parses as -(x1^2). There is no implicit multiplication.

#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cvp/error.hpp"

namespace cvp {

enum class Op {
    Const, Var, Neg, Add, Sub, Mul, Div, Pow,
    Sin, Cos, Exp, Log, Sqrt, Abs, Tanh, Step, Sgn, Min, Max
};

struct ExprNode;
using NodePtr = std::shared_ptr<const ExprNode>;

struct ExprNode {
    Op op;
    double value = 0.0;  // Const
    int var = -1;        // Var, zero-based
    NodePtr lhs;
    NodePtr rhs;
};

namespace detail {

struct FunctionInfo {
    std::string_view name;
    Op op;
    int arity;
};

inline constexpr FunctionInfo kFunctions[] = {
    {"sin", Op::Sin, 1},   {"cos", Op::Cos, 1},   {"exp", Op::Exp, 1},
    {"log", Op::Log, 1},   {"sqrt", Op::Sqrt, 1}, {"abs", Op::Abs, 1},
    {"tanh", Op::Tanh, 1}, {"step", Op::Step, 1}, {"sgn", Op::Sgn, 1},
    {"min", Op::Min, 2},   {"max", Op::Max, 2},
};

inline const FunctionInfo* find_function(std::string_view name) {
    for (const auto& f : kFunctions)
        if (f.name == name) return &f;
    return nullptr;
}

inline std::string_view function_name(Op op) {
    for (const auto& f : kFunctions)
        if (f.op == op) return f.name;
    return "?";
}

inline NodePtr make_const(double v) { return std::make_shared<ExprNode>(ExprNode{Op::Const, v, -1, nullptr, nullptr}); }
inline NodePtr make_var(int i) { return std::make_shared<ExprNode>(ExprNode{Op::Var, 0.0, i, nullptr, nullptr}); }
inline NodePtr make_node(Op op, NodePtr a, NodePtr b = nullptr) {
    return std::make_shared<ExprNode>(ExprNode{op, 0.0, -1, std::move(a), std::move(b)});
}

inline bool is_const(const NodePtr& n, double v) { return n->op == Op::Const && n->value == v; }

// Builders used by the differentiator. They fold the trivial identities with
// 0 and 1 so derivative trees stay readable; nothing else is simplified.
inline NodePtr add(NodePtr a, NodePtr b) {
    if (is_const(a, 0.0)) return b;
    if (is_const(b, 0.0)) return a;
    return make_node(Op::Add, std::move(a), std::move(b));
}
inline NodePtr sub(NodePtr a, NodePtr b) {
    if (is_const(b, 0.0)) return a;
    if (is_const(a, 0.0)) return make_node(Op::Neg, std::move(b));
    return make_node(Op::Sub, std::move(a), std::move(b));
}
inline NodePtr mul(NodePtr a, NodePtr b) {
    if (is_const(a, 0.0) || is_const(b, 0.0)) return make_const(0.0);
    if (is_const(a, 1.0)) return b;
    if (is_const(b, 1.0)) return a;
    return make_node(Op::Mul, std::move(a), std::move(b));
}
inline NodePtr div(NodePtr a, NodePtr b) {
    if (is_const(a, 0.0)) return make_const(0.0);
    if (is_const(b, 1.0)) return a;
    return make_node(Op::Div, std::move(a), std::move(b));
}
inline NodePtr neg(NodePtr a) {
    if (a->op == Op::Const) return make_const(-a->value);
    return make_node(Op::Neg, std::move(a));
}

inline void print_node(const ExprNode& n, std::string& out) {
    switch (n.op) {
        case Op::Const: {
            char buf[32];
            std::snprintf(buf, sizeof buf, "%.17g", n.value);
            if (n.value < 0) {
                out += '(';
                out += buf;
                out += ')';
            } else {
                out += buf;
            }
            return;
        }
        case Op::Var:
            out += 'x';
            out += std::to_string(n.var + 1);
            return;
        case Op::Neg:
            out += "(-";
            print_node(*n.lhs, out);
            out += ')';
            return;
        case Op::Add: case Op::Sub: case Op::Mul: case Op::Div: case Op::Pow: {
            static constexpr char sym[] = {'+', '-', '*', '/', '^'};
            out += '(';
            print_node(*n.lhs, out);
            out += ' ';
            out += sym[static_cast<int>(n.op) - static_cast<int>(Op::Add)];
            out += ' ';
            print_node(*n.rhs, out);
            out += ')';
            return;
        }
        default:
            out += function_name(n.op);
            out += '(';
            print_node(*n.lhs, out);
            if (n.rhs) {
                out += ", ";
                print_node(*n.rhs, out);
            }
            out += ')';
            return;
    }
}

inline std::string print_node(const ExprNode& n) {
    std::string s;
    print_node(n, s);
    return s;
}

inline double checked(double v, const ExprNode& n, const char* what) {
    if (!std::isfinite(v)) throw EvalError(what, print_node(n));
    return v;
}

inline double eval_node(const ExprNode& n, std::span<const double> x) {
    switch (n.op) {
        case Op::Const: return n.value;
        case Op::Var: return x[static_cast<std::size_t>(n.var)];
        case Op::Neg: return -eval_node(*n.lhs, x);
        case Op::Add: return checked(eval_node(*n.lhs, x) + eval_node(*n.rhs, x), n, "overflow");
        case Op::Sub: return checked(eval_node(*n.lhs, x) - eval_node(*n.rhs, x), n, "overflow");
        case Op::Mul: return checked(eval_node(*n.lhs, x) * eval_node(*n.rhs, x), n, "overflow");
        case Op::Div: {
            const double den = eval_node(*n.rhs, x);
            if (den == 0.0) throw EvalError("division by zero", print_node(n));
            return checked(eval_node(*n.lhs, x) / den, n, "overflow");
        }
        case Op::Pow: {
            const double base = eval_node(*n.lhs, x);
            const double ex = eval_node(*n.rhs, x);
            if (base == 0.0 && ex < 0.0) throw EvalError("division by zero", print_node(n));
            if (base < 0.0 && ex != std::floor(ex))
                throw EvalError("negative base with non-integer exponent", print_node(n));
            return checked(std::pow(base, ex), n, "overflow");
        }
        case Op::Sin: return std::sin(eval_node(*n.lhs, x));
        case Op::Cos: return std::cos(eval_node(*n.lhs, x));
        case Op::Exp: return checked(std::exp(eval_node(*n.lhs, x)), n, "overflow");
        case Op::Log: {
            const double v = eval_node(*n.lhs, x);
            if (v <= 0.0) throw EvalError("log of non-positive value", print_node(n));
            return std::log(v);
        }
        case Op::Sqrt: {
            const double v = eval_node(*n.lhs, x);
            if (v < 0.0) throw EvalError("sqrt of negative value", print_node(n));
            return std::sqrt(v);
        }
        case Op::Abs: return std::abs(eval_node(*n.lhs, x));
        case Op::Tanh: return std::tanh(eval_node(*n.lhs, x));
        case Op::Step: return eval_node(*n.lhs, x) > 0.0 ? 1.0 : 0.0;
        case Op::Sgn: {
            const double v = eval_node(*n.lhs, x);
            return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
        }
        case Op::Min: return std::min(eval_node(*n.lhs, x), eval_node(*n.rhs, x));
        case Op::Max: return std::max(eval_node(*n.lhs, x), eval_node(*n.rhs, x));
    }
    return 0.0;
}

inline bool depends_on(const ExprNode& n, int var) {
    if (n.op == Op::Var) return var < 0 || n.var == var;
    if (n.op == Op::Const) return false;
    return (n.lhs && depends_on(*n.lhs, var)) || (n.rhs && depends_on(*n.rhs, var));
}

inline NodePtr derive(const NodePtr& np, int i) {
    const ExprNode& n = *np;
    if (!depends_on(n, i)) return make_const(0.0);
    const NodePtr& a = n.lhs;
    const NodePtr& b = n.rhs;
    switch (n.op) {
        case Op::Const: return make_const(0.0);
        case Op::Var: return make_const(1.0);
        case Op::Neg: return neg(derive(a, i));
        case Op::Add: return add(derive(a, i), derive(b, i));
        case Op::Sub: return sub(derive(a, i), derive(b, i));
        case Op::Mul: return add(mul(derive(a, i), b), mul(a, derive(b, i)));
        case Op::Div:
            return div(sub(mul(derive(a, i), b), mul(a, derive(b, i))),
                       make_node(Op::Pow, b, make_const(2.0)));
        case Op::Pow:
            if (!depends_on(*b, i)) {
                // d(a^c) = c a^(c-1) a'
                return mul(mul(b, make_node(Op::Pow, a, sub(b, make_const(1.0)))), derive(a, i));
            }
            // d(a^b) = a^b (b' log a + b a'/a)
            return mul(np, add(mul(derive(b, i), make_node(Op::Log, a)),
                               div(mul(b, derive(a, i)), a)));
        case Op::Sin: return mul(make_node(Op::Cos, a), derive(a, i));
        case Op::Cos: return mul(neg(make_node(Op::Sin, a)), derive(a, i));
        case Op::Exp: return mul(np, derive(a, i));
        case Op::Log: return div(derive(a, i), a);
        case Op::Sqrt: return div(derive(a, i), mul(make_const(2.0), np));
        case Op::Abs: return mul(make_node(Op::Sgn, a), derive(a, i));
        case Op::Tanh:
            return mul(sub(make_const(1.0), make_node(Op::Pow, np, make_const(2.0))), derive(a, i));
        case Op::Step:
        case Op::Sgn: return make_const(0.0);
        case Op::Min: {
            // a' where a < b, b' otherwise
            NodePtr pick_a = make_node(Op::Step, sub(b, a));
            return add(mul(pick_a, derive(a, i)),
                       mul(sub(make_const(1.0), pick_a), derive(b, i)));
        }
        case Op::Max: {
            NodePtr pick_a = make_node(Op::Step, sub(a, b));
            return add(mul(pick_a, derive(a, i)),
                       mul(sub(make_const(1.0), pick_a), derive(b, i)));
        }
    }
    return make_const(0.0);
}

class Parser {
public:
    Parser(std::string_view text, int dim) : s_(text), dim_(dim) {}

    NodePtr parse() {
        skip_ws();
        if (pos_ == s_.size()) throw ParseError("empty expression", pos_);
        NodePtr n = expr();
        skip_ws();
        if (pos_ != s_.size()) throw ParseError("unexpected input", pos_);
        return n;
    }

private:
    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool accept(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    void expect(char c) {
        if (!accept(c)) throw ParseError(std::string("expected '") + c + "'", pos_);
    }

    NodePtr expr() {
        NodePtr lhs = term();
        for (;;) {
            if (accept('+')) lhs = make_node(Op::Add, lhs, term());
            else if (accept('-')) lhs = make_node(Op::Sub, lhs, term());
            else return lhs;
        }
    }
    NodePtr term() {
        NodePtr lhs = unary();
        for (;;) {
            if (accept('*')) lhs = make_node(Op::Mul, lhs, unary());
            else if (accept('/')) lhs = make_node(Op::Div, lhs, unary());
            else return lhs;
        }
    }
    NodePtr unary() {
        if (accept('-')) return make_node(Op::Neg, unary());
        return power();
    }
    NodePtr power() {
        NodePtr base = primary();
        if (accept('^')) return make_node(Op::Pow, base, unary());
        return base;
    }
    NodePtr primary() {
        skip_ws();
        if (pos_ >= s_.size()) throw ParseError("unexpected end of input", pos_);
        const char c = s_[pos_];
        if (c == '(') {
            ++pos_;
            NodePtr n = expr();
            expect(')');
            return n;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c))) return identifier();
        throw ParseError(std::string("unexpected character '") + c + "'", pos_);
    }
    NodePtr number() {
        const std::size_t start = pos_;
        auto digits = [&] {
            std::size_t n = 0;
            while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) ++pos_, ++n;
            return n;
        };
        std::size_t nd = digits();
        if (pos_ < s_.size() && s_[pos_] == '.') {
            ++pos_;
            nd += digits();
        }
        if (nd == 0) throw ParseError("malformed number", start);
        if (pos_ < s_.size() && (s_[pos_] == 'e' || s_[pos_] == 'E')) {
            std::size_t save = pos_++;
            if (pos_ < s_.size() && (s_[pos_] == '+' || s_[pos_] == '-')) ++pos_;
            if (digits() == 0) pos_ = save;  // "2e" is the number 2 followed by junk
        }
        const std::string tok(s_.substr(start, pos_ - start));
        const double v = std::strtod(tok.c_str(), nullptr);
        if (!std::isfinite(v)) throw ParseError("number out of range", start);
        return make_const(v);
    }
    NodePtr identifier() {
        const std::size_t start = pos_;
        while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) || s_[pos_] == '_'))
            ++pos_;
        const std::string_view name = s_.substr(start, pos_ - start);
        if (name.size() >= 2 && name[0] == 'x' &&
            name.find_first_not_of("0123456789", 1) == std::string_view::npos) {
            const int idx = std::stoi(std::string(name.substr(1)));
            if (idx < 1 || idx > dim_)
                throw ParseError("unknown identifier '" + std::string(name) + "'", start);
            return make_var(idx - 1);
        }
        const FunctionInfo* f = find_function(name);
        if (!f) throw ParseError("unknown identifier '" + std::string(name) + "'", start);
        skip_ws();
        if (!accept('(')) throw ParseError("expected '(' after function name", pos_);
        std::vector<NodePtr> args;
        args.push_back(expr());
        while (accept(',')) args.push_back(expr());
        skip_ws();
        const std::size_t close = pos_;
        expect(')');
        if (static_cast<int>(args.size()) != f->arity)
            throw ParseError("wrong arity for '" + std::string(name) + "': expected " +
                                 std::to_string(f->arity) + ", got " + std::to_string(args.size()),
                             close);
        return make_node(f->op, args[0], args.size() > 1 ? args[1] : nullptr);
    }

    std::string_view s_;
    int dim_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Immutable scalar field over R^d. Cheap to copy; safe to evaluate concurrently.
class Expression {
public:
    Expression() : Expression(detail::make_const(0.0), 1) {}
    Expression(NodePtr root, int dim) : root_(std::move(root)), dim_(dim) {}

    static Expression constant(double v, int dim) { return {detail::make_const(v), dim}; }

    /// Throws EvalError when x leaves the expression's natural domain.
    double operator()(std::span<const double> x) const { return detail::eval_node(*root_, x); }
    double evaluate(std::span<const double> x) const { return (*this)(x); }

    int dim() const noexcept { return dim_; }
    bool is_constant() const { return !detail::depends_on(*root_, -1); }
    bool depends_on(int i) const { return detail::depends_on(*root_, i); }
    /// Value of a constant expression. Precondition: is_constant().
    double constant_value() const { return detail::eval_node(*root_, {}); }

    std::string to_string() const { return detail::print_node(*root_); }
    const ExprNode& root() const noexcept { return *root_; }
    const NodePtr& root_ptr() const noexcept { return root_; }

private:
    NodePtr root_;
    int dim_;
};

inline Expression parse(std::string_view text, int dim) {
    if (dim < 1) throw ConfigError("expression dimension must be positive");
    return {detail::Parser(text, dim).parse(), dim};
}

/// Exact derivative with respect to x_{i+1} (zero-based index i).
/// step() and sgn() differentiate to 0; see kink_warnings().
inline Expression differentiate(const Expression& e, int i) {
    if (i < 0 || i >= e.dim()) throw ConfigError("derivative index out of range");
    return {detail::derive(e.root_ptr(), i), e.dim()};
}

namespace detail {
inline void collect_kinks(const ExprNode& n, int i, std::span<const double> x,
                          std::vector<std::string>& out) {
    if (n.op == Op::Step || n.op == Op::Sgn || n.op == Op::Abs) {
        if (depends_on(*n.lhs, i) && eval_node(*n.lhs, x) == 0.0) out.push_back(print_node(n));
    }
    if ((n.op == Op::Min || n.op == Op::Max) && (depends_on(*n.lhs, i) || depends_on(*n.rhs, i))) {
        if (eval_node(*n.lhs, x) == eval_node(*n.rhs, x)) out.push_back(print_node(n));
    }
    if (n.lhs) collect_kinks(*n.lhs, i, x, out);
    if (n.rhs) collect_kinks(*n.rhs, i, x, out);
}
}  // namespace detail

/// Subexpressions of `e` that are non-differentiable in x_{i+1} at the point x
/// (step/sgn/abs at 0, min/max at a tie). Empty when the symbolic derivative is exact there.
inline std::vector<std::string> kink_warnings(const Expression& e, int i, std::span<const double> x) {
    std::vector<std::string> out;
    detail::collect_kinks(e.root(), i, x, out);
    return out;
}

/// A d-component vector field; component count equals the ambient dimension.
class VectorExpression {
public:
    VectorExpression() = default;
    explicit VectorExpression(std::vector<Expression> components)
        : components_(std::move(components)) {
        for (const auto& c : components_)
            if (c.dim() != dim()) throw ConfigError("vector field component count must equal dimension");
    }

    static VectorExpression zero(int dim) {
        return VectorExpression(std::vector<Expression>(static_cast<std::size_t>(dim), Expression::constant(0.0, dim)));
    }
    static VectorExpression parse(const std::vector<std::string>& texts, int dim) {
        if (static_cast<int>(texts.size()) != dim)
            throw ConfigError("vector field has " + std::to_string(texts.size()) +
                              " components, expected " + std::to_string(dim));
        std::vector<Expression> comps;
        for (const auto& t : texts) comps.push_back(cvp::parse(t, dim));
        return VectorExpression(std::move(comps));
    }

    int dim() const noexcept { return static_cast<int>(components_.size()); }
    const Expression& operator[](std::size_t i) const { return components_[i]; }
    const std::vector<Expression>& components() const noexcept { return components_; }

    bool is_constant() const {
        for (const auto& c : components_)
            if (!c.is_constant()) return false;
        return true;
    }
    bool is_zero() const {
        for (const auto& c : components_)
            if (!c.is_constant() || c.constant_value() != 0.0) return false;
        return true;
    }

    void evaluate(std::span<const double> x, std::span<double> out) const {
        for (std::size_t i = 0; i < components_.size(); ++i) out[i] = components_[i](x);
    }

private:
    std::vector<Expression> components_;
};

}  // namespace cvp
