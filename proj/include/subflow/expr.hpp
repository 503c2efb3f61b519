#pragma once

// Symbolic smooth functions R^n -> R: an immutable expression tree with a
// recursive-descent parser, a printer that round-trips through the parser,
// checked evaluation and exact partial differentiation.
//
// Grammar (whitespace is insignificant):
//
//   expr    ::= term { ("+" | "-") term }
//   term    ::= unary { ("*" | "/") unary }
//   unary   ::= "-" unary | power
//   power   ::= primary [ "^" unary ]
//   primary ::= number | variable | function "(" expr ")" | "(" expr ")"
//   number  ::= digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
//   variable::= prefix digits | declared name          (prefix defaults to "x")
//   function::= "sin" | "cos" | "exp" | "log" | "sqrt" | "tanh" | "atan"
//             | "flat" [ digits ]
//
// `^` is right associative and binds tighter than unary minus, so
// `-x0^2` is `-(x0^2)` and `x0^-1` is `x0^(-1)`.

#include "subflow/errors.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace subflow {

enum class Op : std::uint8_t { constant, coord, add, sub, mul, div, pow, neg, call };

/// Smooth primitives. `flat` is the family t -> exp(-1/t) t^-k for t > 0 and 0
/// otherwise; it is closed under differentiation and is what bump functions
/// are assembled from.
enum class Fn : std::uint8_t { sin, cos, exp, log, sqrt, tanh, atan, flat };

inline constexpr std::array<std::string_view, 8> kFunctionNames{
    "sin", "cos", "exp", "log", "sqrt", "tanh", "atan", "flat"};

inline std::string_view function_name(Fn fn) { return kFunctionNames[static_cast<std::size_t>(fn)]; }

class Expr {
public:
    /// The constant 0.
    Expr();
    /// Constant literal; negative values are stored as `-(|c|)` so that
    /// printing and parsing agree structurally.
    Expr(double value); // NOLINT(google-explicit-constructor)

    static Expr constant(double value) { return Expr(value); }
    static Expr coord(std::size_t index);
    static Expr call(Fn fn, Expr argument, unsigned order = 0);

    // Raw node constructors: no folding. The parser uses these.
    static Expr raw_binary(Op op, Expr lhs, Expr rhs);
    static Expr raw_neg(Expr operand);
    static Expr raw_call(Fn fn, Expr argument, unsigned order = 0);

    Op op() const noexcept;
    /// Literal value of a constant node.
    double value() const noexcept;
    /// Coordinate index of a coord node.
    std::size_t index() const noexcept;
    Fn fn() const noexcept;
    /// Order k of a `flat` node.
    unsigned order() const noexcept;
    /// First child (binary lhs, negation operand, call argument).
    const Expr& lhs() const noexcept;
    const Expr& rhs() const noexcept;

    /// One past the largest coordinate index used, 0 for constant expressions.
    std::size_t arity() const noexcept;
    std::size_t node_count() const noexcept;

    /// Literal constant or negated literal constant.
    std::optional<double> literal() const noexcept;
    bool is_zero() const noexcept { auto v = literal(); return v && *v == 0.0; }
    bool is_one() const noexcept { auto v = literal(); return v && *v == 1.0; }

    friend bool operator==(const Expr& a, const Expr& b) noexcept;

private:
    struct Node;
    explicit Expr(std::shared_ptr<const Node> node) : node_(std::move(node)) {}
    static Expr make(Node node);

    std::shared_ptr<const Node> node_;
};

struct Expr::Node {
    Op op = Op::constant;
    double value = 0.0;
    std::size_t index = 0;
    Fn fn = Fn::sin;
    unsigned order = 0;
    Expr a{std::shared_ptr<const Node>{}};
    Expr b{std::shared_ptr<const Node>{}};
    std::size_t arity = 0;
    std::size_t count = 1;
};

inline Expr Expr::make(Node node) {
    node.arity = 0;
    node.count = 1;
    for (const Expr* child : {&node.a, &node.b}) {
        if (child->node_) {
            node.arity = std::max(node.arity, child->node_->arity);
            node.count += child->node_->count;
        }
    }
    if (node.op == Op::coord) node.arity = node.index + 1;
    return Expr(std::make_shared<const Node>(std::move(node)));
}

inline Expr::Expr() : Expr(0.0) {}

inline Expr::Expr(double value) {
    Node n;
    n.op = Op::constant;
    n.value = value == 0.0 ? 0.0 : std::fabs(value);
    Expr literal = make(n);
    node_ = (std::signbit(value) && value != 0.0) ? raw_neg(literal).node_ : literal.node_;
}

inline Expr Expr::coord(std::size_t index) {
    Node n;
    n.op = Op::coord;
    n.index = index;
    return make(n);
}

inline Expr Expr::raw_binary(Op op, Expr lhs, Expr rhs) {
    Node n;
    n.op = op;
    n.a = std::move(lhs);
    n.b = std::move(rhs);
    return make(std::move(n));
}

inline Expr Expr::raw_neg(Expr operand) {
    Node n;
    n.op = Op::neg;
    n.a = std::move(operand);
    return make(std::move(n));
}

inline Expr Expr::raw_call(Fn fn, Expr argument, unsigned order) {
    Node n;
    n.op = Op::call;
    n.fn = fn;
    n.order = fn == Fn::flat ? order : 0;
    n.a = std::move(argument);
    return make(std::move(n));
}

inline Op Expr::op() const noexcept { return node_->op; }
inline double Expr::value() const noexcept { return node_->value; }
inline std::size_t Expr::index() const noexcept { return node_->index; }
inline Fn Expr::fn() const noexcept { return node_->fn; }
inline unsigned Expr::order() const noexcept { return node_->order; }
inline const Expr& Expr::lhs() const noexcept { return node_->a; }
inline const Expr& Expr::rhs() const noexcept { return node_->b; }
inline std::size_t Expr::arity() const noexcept { return node_->arity; }
inline std::size_t Expr::node_count() const noexcept { return node_->count; }

inline std::optional<double> Expr::literal() const noexcept {
    if (node_->op == Op::constant) return node_->value;
    if (node_->op == Op::neg && node_->a.node_->op == Op::constant) return -node_->a.node_->value;
    return std::nullopt;
}

inline bool operator==(const Expr& a, const Expr& b) noexcept {
    if (a.node_ == b.node_) return true;
    const auto& x = *a.node_;
    const auto& y = *b.node_;
    if (x.op != y.op || x.count != y.count) return false;
    switch (x.op) {
    case Op::constant: return x.value == y.value;
    case Op::coord: return x.index == y.index;
    case Op::neg: return x.a == y.a;
    case Op::call: return x.fn == y.fn && x.order == y.order && x.a == y.a;
    default: return x.a == y.a && x.b == y.b;
    }
}

// ---------------------------------------------------------------------------
// Evaluation

namespace detail {

inline double apply_fn(Fn fn, unsigned order, double u) {
    switch (fn) {
    case Fn::sin: return std::sin(u);
    case Fn::cos: return std::cos(u);
    case Fn::exp: return std::exp(u);
    case Fn::log:
        if (!(u > 0.0)) throw DomainError("log of nonpositive value " + std::to_string(u));
        return std::log(u);
    case Fn::sqrt:
        if (u < 0.0) throw DomainError("sqrt of negative value " + std::to_string(u));
        return std::sqrt(u);
    case Fn::tanh: return std::tanh(u);
    case Fn::atan: return std::atan(u);
    case Fn::flat:
        if (!(u > 0.0)) return 0.0;
        return std::exp(-1.0 / u - static_cast<double>(order) * std::log(u));
    }
    return 0.0;
}

inline double checked_pow(double base, double exponent) {
    if (base < 0.0 && exponent != std::nearbyint(exponent))
        throw DomainError("non-integer power of negative base");
    if (base == 0.0 && exponent < 0.0) throw DomainError("negative power of zero");
    return std::pow(base, exponent);
}

inline double evaluate(const Expr& e, std::span<const double> x) {
    double r = 0.0;
    switch (e.op()) {
    case Op::constant: return e.value();
    case Op::coord: return x[e.index()];
    case Op::add: r = evaluate(e.lhs(), x) + evaluate(e.rhs(), x); break;
    case Op::sub: r = evaluate(e.lhs(), x) - evaluate(e.rhs(), x); break;
    case Op::mul: r = evaluate(e.lhs(), x) * evaluate(e.rhs(), x); break;
    case Op::div: {
        const double num = evaluate(e.lhs(), x);
        const double den = evaluate(e.rhs(), x);
        if (den == 0.0) throw DomainError("division by zero");
        r = num / den;
        break;
    }
    case Op::pow: r = checked_pow(evaluate(e.lhs(), x), evaluate(e.rhs(), x)); break;
    case Op::neg: return -evaluate(e.lhs(), x);
    case Op::call: r = apply_fn(e.fn(), e.order(), evaluate(e.lhs(), x)); break;
    }
    if (std::isnan(r)) throw DomainError("evaluation produced NaN");
    return r;
}

} // namespace detail

/// Value of `e` at `point`. Throws DimensionError when the point is too short
/// and DomainError on any primitive domain violation.
inline double eval(const Expr& e, std::span<const double> point) {
    if (point.size() < e.arity())
        throw DimensionError("expression needs " + std::to_string(e.arity()) + " coordinates, got " +
                             std::to_string(point.size()));
    return detail::evaluate(e, point);
}

inline double eval(const Expr& e, std::initializer_list<double> point) {
    return eval(e, std::span<const double>(point.begin(), point.size()));
}

// ---------------------------------------------------------------------------
// Folding builders. Folding is limited to literal arithmetic and the
// identities x+0, x*1, x*0, x/1, x^1, x^0 and --x.

namespace detail {

inline Expr fold_or(Op op, const Expr& a, const Expr& b) {
    const auto va = a.literal();
    const auto vb = b.literal();
    if (va && vb) {
        try {
            const double both[] = {*va, *vb};
            const double r = evaluate(Expr::raw_binary(op, Expr::coord(0), Expr::coord(1)), both);
            if (std::isfinite(r)) return Expr(r);
        } catch (const DomainError&) {
        }
    }
    return Expr::raw_binary(op, a, b);
}

} // namespace detail

inline Expr operator-(const Expr& a) {
    if (auto v = a.literal()) return Expr(-*v);
    if (a.op() == Op::neg) return a.lhs();
    return Expr::raw_neg(a);
}

inline Expr operator+(const Expr& a, const Expr& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    return detail::fold_or(Op::add, a, b);
}

inline Expr operator-(const Expr& a, const Expr& b) {
    if (b.is_zero()) return a;
    if (a.is_zero()) return -b;
    return detail::fold_or(Op::sub, a, b);
}

inline Expr operator*(const Expr& a, const Expr& b) {
    if (a.is_zero() || b.is_zero()) return Expr(0.0);
    if (a.is_one()) return b;
    if (b.is_one()) return a;
    if (auto v = a.literal(); v && *v == -1.0) return -b;
    if (auto v = b.literal(); v && *v == -1.0) return -a;
    return detail::fold_or(Op::mul, a, b);
}

inline Expr operator/(const Expr& a, const Expr& b) {
    if (b.is_one()) return a;
    if (a.is_zero() && !b.is_zero()) return Expr(0.0);
    return detail::fold_or(Op::div, a, b);
}

inline Expr pow(const Expr& base, const Expr& exponent) {
    if (exponent.is_zero()) return Expr(1.0);
    if (exponent.is_one()) return base;
    return detail::fold_or(Op::pow, base, exponent);
}

inline Expr Expr::call(Fn fn, Expr argument, unsigned order) {
    if (auto v = argument.literal()) {
        try {
            const double r = detail::apply_fn(fn, order, *v);
            if (std::isfinite(r)) return Expr(r);
        } catch (const DomainError&) {
        }
    }
    return raw_call(fn, std::move(argument), order);
}

inline Expr sin(const Expr& e) { return Expr::call(Fn::sin, e); }
inline Expr cos(const Expr& e) { return Expr::call(Fn::cos, e); }
inline Expr exp(const Expr& e) { return Expr::call(Fn::exp, e); }
inline Expr log(const Expr& e) { return Expr::call(Fn::log, e); }
inline Expr sqrt(const Expr& e) { return Expr::call(Fn::sqrt, e); }
inline Expr tanh(const Expr& e) { return Expr::call(Fn::tanh, e); }
inline Expr atan(const Expr& e) { return Expr::call(Fn::atan, e); }
inline Expr flat(const Expr& e, unsigned order = 0) { return Expr::call(Fn::flat, e, order); }

// ---------------------------------------------------------------------------
// Differentiation

namespace detail {

inline Expr derivative_of_fn(Fn fn, unsigned order, const Expr& u) {
    switch (fn) {
    case Fn::sin: return cos(u);
    case Fn::cos: return -sin(u);
    case Fn::exp: return exp(u);
    case Fn::log: return Expr(1.0) / u;
    case Fn::sqrt: return Expr(1.0) / (Expr(2.0) * sqrt(u));
    case Fn::tanh: return Expr(1.0) - pow(tanh(u), Expr(2.0));
    case Fn::atan: return Expr(1.0) / (Expr(1.0) + pow(u, Expr(2.0)));
    case Fn::flat:
        // d/dt exp(-1/t) t^-k = exp(-1/t) (t^-(k+2) - k t^-(k+1))
        return flat(u, order + 2) - Expr(static_cast<double>(order)) * flat(u, order + 1);
    }
    return Expr(0.0);
}

} // namespace detail

/// Exact partial derivative with respect to coordinate `i`.
inline Expr diff(const Expr& e, std::size_t i) {
    if (e.arity() <= i) return Expr(0.0);
    const Expr& a = e.lhs();
    const Expr& b = e.rhs();
    switch (e.op()) {
    case Op::constant: return Expr(0.0);
    case Op::coord: return Expr(e.index() == i ? 1.0 : 0.0);
    case Op::add: return diff(a, i) + diff(b, i);
    case Op::sub: return diff(a, i) - diff(b, i);
    case Op::mul: return diff(a, i) * b + a * diff(b, i);
    case Op::div: return (diff(a, i) * b - a * diff(b, i)) / pow(b, Expr(2.0));
    case Op::neg: return -diff(a, i);
    case Op::pow:
        if (b.arity() == 0) return b * pow(a, b - Expr(1.0)) * diff(a, i);
        return e * (diff(b, i) * log(a) + b * diff(a, i) / a);
    case Op::call: return detail::derivative_of_fn(e.fn(), e.order(), a) * diff(a, i);
    }
    return Expr(0.0);
}

/// Gradient (∂_0 e, ..., ∂_{n-1} e).
inline std::vector<Expr> gradient(const Expr& e, std::size_t n) {
    std::vector<Expr> g;
    g.reserve(n);
    for (std::size_t i = 0; i < n; ++i) g.push_back(diff(e, i));
    return g;
}

// ---------------------------------------------------------------------------
// Substitution

/// Replace every coordinate x_j of `outer` by `inner[j]`.
inline Expr compose(const Expr& outer, std::span<const Expr> inner) {
    switch (outer.op()) {
    case Op::constant: return outer;
    case Op::coord:
        if (outer.index() >= inner.size())
            throw DimensionError("composition needs " + std::to_string(outer.index() + 1) + " inner functions");
        return inner[outer.index()];
    case Op::add: return compose(outer.lhs(), inner) + compose(outer.rhs(), inner);
    case Op::sub: return compose(outer.lhs(), inner) - compose(outer.rhs(), inner);
    case Op::mul: return compose(outer.lhs(), inner) * compose(outer.rhs(), inner);
    case Op::div: return compose(outer.lhs(), inner) / compose(outer.rhs(), inner);
    case Op::pow: return pow(compose(outer.lhs(), inner), compose(outer.rhs(), inner));
    case Op::neg: return -compose(outer.lhs(), inner);
    case Op::call: return Expr::call(outer.fn(), compose(outer.lhs(), inner), outer.order());
    }
    return outer;
}

/// Rename x_j to x_{j+offset}.
inline Expr shift_coords(const Expr& e, std::size_t offset) {
    switch (e.op()) {
    case Op::constant: return e;
    case Op::coord: return Expr::coord(e.index() + offset);
    case Op::neg: return Expr::raw_neg(shift_coords(e.lhs(), offset));
    case Op::call: return Expr::raw_call(e.fn(), shift_coords(e.lhs(), offset), e.order());
    default: return Expr::raw_binary(e.op(), shift_coords(e.lhs(), offset), shift_coords(e.rhs(), offset));
    }
}

// ---------------------------------------------------------------------------
// Printing

namespace detail {

inline int precedence(const Expr& e) {
    switch (e.op()) {
    case Op::add:
    case Op::sub: return 1;
    case Op::mul:
    case Op::div: return 2;
    case Op::neg: return 3;
    case Op::pow: return 4;
    default: return 5;
    }
}

inline void format_number(double v, std::string& out) {
    std::array<char, 64> buf{};
    auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    out.append(buf.data(), end);
}

inline void print_to(const Expr& e, std::string& out);

inline void print_child(const Expr& e, bool parens, std::string& out) {
    if (parens) out.push_back('(');
    print_to(e, out);
    if (parens) out.push_back(')');
}

inline void print_to(const Expr& e, std::string& out) {
    const int p = precedence(e);
    switch (e.op()) {
    case Op::constant: format_number(e.value(), out); return;
    case Op::coord:
        out.push_back('x');
        out += std::to_string(e.index());
        return;
    case Op::call:
        out += function_name(e.fn());
        if (e.fn() == Fn::flat && e.order() > 0) out += std::to_string(e.order());
        print_child(e.lhs(), true, out);
        return;
    case Op::neg:
        out.push_back('-');
        print_child(e.lhs(), precedence(e.lhs()) < 3, out);
        return;
    case Op::pow:
        print_child(e.lhs(), precedence(e.lhs()) <= 4, out);
        out.push_back('^');
        print_child(e.rhs(), precedence(e.rhs()) < 3, out);
        return;
    default: {
        static constexpr std::string_view symbols[] = {"", "", " + ", " - ", "*", "/"};
        print_child(e.lhs(), precedence(e.lhs()) < p, out);
        out += symbols[static_cast<std::size_t>(e.op())];
        print_child(e.rhs(), precedence(e.rhs()) <= p, out);
        return;
    }
    }
}

} // namespace detail

/// Canonical text form; `parse(to_string(e)) == e` for every expression.
inline std::string to_string(const Expr& e) {
    std::string out;
    detail::print_to(e, out);
    return out;
}

// ---------------------------------------------------------------------------
// Parsing

struct ParseOptions {
    /// Indexed variables are `prefix` followed by a decimal index.
    std::string prefix = "x";
    /// Additional variable names; names[i] denotes coordinate i.
    std::vector<std::string> names;
    /// When set, coordinate indices must be below this bound.
    std::optional<std::size_t> dimension;
};

namespace detail {

class Parser {
public:
    Parser(std::string_view src, const ParseOptions& opts) : src_(src), opts_(opts) {}

    Expr parse() {
        Expr e = expression();
        skip_space();
        if (pos_ != src_.size()) throw ParseError("unexpected '" + std::string(1, src_[pos_]) + "'", pos_);
        return e;
    }

private:
    void skip_space() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool accept(char c) {
        skip_space();
        if (pos_ < src_.size() && src_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    Expr expression() {
        Expr lhs = term();
        for (;;) {
            if (accept('+')) lhs = Expr::raw_binary(Op::add, lhs, term());
            else if (accept('-')) lhs = Expr::raw_binary(Op::sub, lhs, term());
            else return lhs;
        }
    }

    Expr term() {
        Expr lhs = unary();
        for (;;) {
            if (accept('*')) lhs = Expr::raw_binary(Op::mul, lhs, unary());
            else if (accept('/')) lhs = Expr::raw_binary(Op::div, lhs, unary());
            else return lhs;
        }
    }

    Expr unary() {
        if (accept('-')) return Expr::raw_neg(unary());
        return power();
    }

    Expr power() {
        Expr base = primary();
        if (accept('^')) return Expr::raw_binary(Op::pow, base, unary());
        return base;
    }

    Expr primary() {
        skip_space();
        if (pos_ >= src_.size()) throw ParseError("unexpected end of input", pos_);
        const char c = src_[pos_];
        if (accept('(')) {
            Expr inner = expression();
            if (!accept(')')) throw ParseError("expected ')'", pos_);
            return inner;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return identifier();
        throw ParseError("unexpected '" + std::string(1, c) + "'", pos_);
    }

    Expr number() {
        const std::size_t start = pos_;
        auto digits = [&] {
            while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
        };
        digits();
        if (pos_ < src_.size() && src_[pos_] == '.') {
            ++pos_;
            digits();
        }
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t save = pos_++;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) digits();
            else pos_ = save;
        }
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(src_.data() + start, src_.data() + pos_, v);
        if (ec != std::errc() || ptr != src_.data() + pos_) throw ParseError("malformed number", start);
        return Expr::constant(v);
    }

    Expr identifier() {
        const std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            ++pos_;
        const std::string_view name = src_.substr(start, pos_ - start);
        skip_space();
        if (pos_ < src_.size() && src_[pos_] == '(') return call(name, start);
        return variable(name, start);
    }

    Expr call(std::string_view name, std::size_t start) {
        Fn fn{};
        unsigned order = 0;
        if (!lookup_function(name, fn, order)) throw ParseError("unknown function '" + std::string(name) + "'", start);
        accept('(');
        Expr arg = expression();
        if (!accept(')')) throw ParseError("expected ')'", pos_);
        return Expr::raw_call(fn, arg, order);
    }

    static bool lookup_function(std::string_view name, Fn& fn, unsigned& order) {
        for (std::size_t k = 0; k < kFunctionNames.size(); ++k) {
            if (name == kFunctionNames[k]) {
                fn = static_cast<Fn>(k);
                return true;
            }
        }
        constexpr std::string_view flat_name = "flat";
        if (name.size() > flat_name.size() && name.substr(0, flat_name.size()) == flat_name) {
            auto digits = name.substr(flat_name.size());
            auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), order);
            if (ec == std::errc() && ptr == digits.data() + digits.size()) {
                fn = Fn::flat;
                return true;
            }
        }
        return false;
    }

    Expr variable(std::string_view name, std::size_t start) {
        for (std::size_t i = 0; i < opts_.names.size(); ++i)
            if (name == opts_.names[i]) return checked_coord(i, name, start);
        const std::string_view prefix = opts_.prefix;
        if (name.size() > prefix.size() && name.substr(0, prefix.size()) == prefix) {
            auto digits = name.substr(prefix.size());
            std::size_t index = 0;
            auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), index);
            if (ec == std::errc() && ptr == digits.data() + digits.size()) return checked_coord(index, name, start);
        }
        throw ParseError("unknown identifier '" + std::string(name) + "'", start);
    }

    Expr checked_coord(std::size_t index, std::string_view name, std::size_t start) const {
        if (opts_.dimension && index >= *opts_.dimension)
            throw ParseError("unknown identifier '" + std::string(name) + "' (dimension " +
                                 std::to_string(*opts_.dimension) + ")",
                             start);
        return Expr::coord(index);
    }

    std::string_view src_;
    const ParseOptions& opts_;
    std::size_t pos_ = 0;
};

} // namespace detail

inline Expr parse(std::string_view source, const ParseOptions& options = {}) {
    return detail::Parser(source, options).parse();
}

} // namespace subflow
