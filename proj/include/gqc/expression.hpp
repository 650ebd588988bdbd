#pragma once

// Coefficient expressions over x1..xd.
//
// Grammar (tightest binding first):
//
//   primary := number | pi | x1..x3 | name '(' args ')' | '(' expr ')'
//   power   := primary [ '^' unary ]          right associative
//   unary   := ('-' | '+') unary | power
//   term    := unary { ('*' | '/') unary }
//   expr    := term { ('+' | '-') term }
//
// so '^' binds tighter than unary minus (-x^2 == -(x^2)).
//
// Functions: sin cos exp ln sqrt abs (one argument), min max (two),
// indicator(axis, lo, hi) = 1 when lo < x_axis <= hi, else 0.

#include "gqc/errors.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

namespace gqc {

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
    enum class Kind { Number, Pi, Variable, Negate, Add, Sub, Mul, Div, Pow, Call };

    Kind kind = Kind::Number;
    double number = 0.0;
    int variable = 0;  // 0-based axis
    std::string function;
    std::vector<ExprPtr> args;
};

namespace detail {

struct FunctionInfo {
    std::string_view name;
    int arity;
};

inline constexpr std::array<FunctionInfo, 9> kFunctions{{
    {"sin", 1}, {"cos", 1}, {"exp", 1}, {"ln", 1}, {"sqrt", 1}, {"abs", 1}, {"min", 2}, {"max", 2}, {"indicator", 3},
}};

inline const FunctionInfo* find_function(std::string_view name) {
    for (const auto& f : kFunctions) {
        if (f.name == name) return &f;
    }
    return nullptr;
}

inline ExprPtr make_node(Expr::Kind kind, std::vector<ExprPtr> args = {}) {
    auto e = std::make_shared<Expr>();
    e->kind = kind;
    e->args = std::move(args);
    return e;
}

class Parser {
public:
    Parser(std::string_view text, int dim) : text_(text), dim_(dim) {}

    ExprPtr parse() {
        skip_ws();
        if (pos_ >= text_.size()) throw ParseError("empty expression", pos_);
        auto e = expr();
        skip_ws();
        if (pos_ != text_.size()) throw ParseError("unexpected '" + std::string(1, text_[pos_]) + "'", pos_);
        return e;
    }

private:
    std::string_view text_;
    int dim_;
    std::size_t pos_ = 0;

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    void expect(char c) {
        if (!accept(c)) throw ParseError(std::string("expected '") + c + "'", pos_);
    }

    ExprPtr expr() {
        auto lhs = term();
        for (;;) {
            if (accept('+')) {
                lhs = make_node(Expr::Kind::Add, {lhs, term()});
            } else if (accept('-')) {
                lhs = make_node(Expr::Kind::Sub, {lhs, term()});
            } else {
                return lhs;
            }
        }
    }

    ExprPtr term() {
        auto lhs = unary();
        for (;;) {
            if (accept('*')) {
                lhs = make_node(Expr::Kind::Mul, {lhs, unary()});
            } else if (accept('/')) {
                lhs = make_node(Expr::Kind::Div, {lhs, unary()});
            } else {
                return lhs;
            }
        }
    }

    ExprPtr unary() {
        if (accept('-')) return make_node(Expr::Kind::Negate, {unary()});
        if (accept('+')) return unary();
        return power();
    }

    ExprPtr power() {
        auto base = primary();
        if (accept('^')) return make_node(Expr::Kind::Pow, {base, unary()});
        return base;
    }

    ExprPtr primary() {
        skip_ws();
        if (pos_ >= text_.size()) throw ParseError("unexpected end of expression", pos_);
        const char ch = text_[pos_];
        if (ch == '(') {
            ++pos_;
            auto e = expr();
            expect(')');
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(ch)) || ch == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(ch)) || ch == '_') return identifier();
        throw ParseError("unexpected '" + std::string(1, ch) + "'", pos_);
    }

    ExprPtr number() {
        const std::size_t start = pos_;
        auto digits = [&] {
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        };
        digits();
        if (pos_ < text_.size() && text_[pos_] == '.') {
            ++pos_;
            digits();
        }
        if (pos_ < text_.size() && (text_[pos_] == 'e' || text_[pos_] == 'E')) {
            std::size_t save = pos_++;
            if (pos_ < text_.size() && (text_[pos_] == '+' || text_[pos_] == '-')) ++pos_;
            if (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
                digits();
            } else {
                pos_ = save;
            }
        }
        const std::string lexeme(text_.substr(start, pos_ - start));
        if (lexeme == ".") throw ParseError("malformed number", start);
        auto e = std::make_shared<Expr>();
        e->kind = Expr::Kind::Number;
        try {
            e->number = std::stod(lexeme);
        } catch (const std::exception&) {
            throw ParseError("number out of range", start);
        }
        return e;
    }

    ExprPtr identifier() {
        const std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_')) {
            ++pos_;
        }
        const std::string name(text_.substr(start, pos_ - start));
        if (name == "pi") return make_node(Expr::Kind::Pi);
        if (name.size() == 2 && name[0] == 'x' && name[1] >= '1' && name[1] <= '3') {
            const int axis = name[1] - '1';
            if (axis >= dim_) {
                throw ParseError("undefined variable '" + name + "' for a " + std::to_string(dim_) + "-d grid", start);
            }
            auto e = std::make_shared<Expr>();
            e->kind = Expr::Kind::Variable;
            e->variable = axis;
            return e;
        }
        const auto* fn = find_function(name);
        if (fn == nullptr) throw ParseError("unknown identifier '" + name + "'", start);
        expect('(');
        std::vector<ExprPtr> args;
        args.push_back(expr());
        while (accept(',')) args.push_back(expr());
        expect(')');
        if (static_cast<int>(args.size()) != fn->arity) {
            throw ParseError(name + " takes " + std::to_string(fn->arity) + " argument(s)", start);
        }
        auto e = std::make_shared<Expr>();
        e->kind = Expr::Kind::Call;
        e->function = name;
        e->args = std::move(args);
        return e;
    }
};

} // namespace detail

inline ExprPtr parse_expression(std::string_view text, int dim) {
    return detail::Parser(text, dim).parse();
}

/// Evaluates at a point; x holds x1..x3 (unused axes ignored).
inline double evaluate(const Expr& e, const std::array<double, 3>& x) {
    using K = Expr::Kind;
    auto arg = [&](std::size_t i) { return evaluate(*e.args[i], x); };
    switch (e.kind) {
    case K::Number: return e.number;
    case K::Pi: return std::numbers::pi;
    case K::Variable: return x[static_cast<std::size_t>(e.variable)];
    case K::Negate: return -arg(0);
    case K::Add: return arg(0) + arg(1);
    case K::Sub: return arg(0) - arg(1);
    case K::Mul: return arg(0) * arg(1);
    case K::Div: return arg(0) / arg(1);
    case K::Pow: return std::pow(arg(0), arg(1));
    case K::Call: break;
    }
    const auto& f = e.function;
    if (f == "sin") return std::sin(arg(0));
    if (f == "cos") return std::cos(arg(0));
    if (f == "exp") return std::exp(arg(0));
    if (f == "ln") return std::log(arg(0));
    if (f == "sqrt") return std::sqrt(arg(0));
    if (f == "abs") return std::abs(arg(0));
    if (f == "min") return std::min(arg(0), arg(1));
    if (f == "max") return std::max(arg(0), arg(1));
    if (f == "indicator") {
        const double a = std::round(arg(0));
        if (!(a >= 1.0 && a <= 3.0)) return std::numeric_limits<double>::quiet_NaN();
        const double xv = x[static_cast<std::size_t>(a) - 1];
        return (arg(1) < xv && xv <= arg(2)) ? 1.0 : 0.0;
    }
    return std::numeric_limits<double>::quiet_NaN();
}

/// Fully parenthesised canonical text; parse(print(e)) reproduces e exactly.
inline std::string print_expression(const Expr& e) {
    using K = Expr::Kind;
    auto bin = [&](const char* op) {
        return "(" + print_expression(*e.args[0]) + op + print_expression(*e.args[1]) + ")";
    };
    switch (e.kind) {
    case K::Number: {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", e.number);
        return buf;
    }
    case K::Pi: return "pi";
    case K::Variable: return "x" + std::to_string(e.variable + 1);
    case K::Negate: return "(-" + print_expression(*e.args[0]) + ")";
    case K::Add: return bin("+");
    case K::Sub: return bin("-");
    case K::Mul: return bin("*");
    case K::Div: return bin("/");
    case K::Pow: return bin("^");
    case K::Call: break;
    }
    std::string s = e.function + "(";
    for (std::size_t i = 0; i < e.args.size(); ++i) {
        if (i) s += ",";
        s += print_expression(*e.args[i]);
    }
    return s + ")";
}

inline bool same_expression(const Expr& a, const Expr& b) {
    if (a.kind != b.kind || a.args.size() != b.args.size()) return false;
    switch (a.kind) {
    case Expr::Kind::Number:
        if (a.number != b.number) return false;
        break;
    case Expr::Kind::Variable:
        if (a.variable != b.variable) return false;
        break;
    case Expr::Kind::Call:
        if (a.function != b.function) return false;
        break;
    default: break;
    }
    for (std::size_t i = 0; i < a.args.size(); ++i) {
        if (!same_expression(*a.args[i], *b.args[i])) return false;
    }
    return true;
}

} // namespace gqc
