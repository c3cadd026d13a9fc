#pragma once

// Activation expressions: the phenotype produced by grammar mapping.
//
// An ActivationExpr is an immutable tree over a single input `x`. It is
// evaluated element-wise over a tensor (here a flat vector of doubles) with
// two guards: a near-zero denominator anywhere in the tree, or any non-finite
// intermediate, turns the whole result into `x * 0.0`. An expression with no
// input leaf is multiplied by `x` before it is returned.

#include <algorithm>
#include <charconv>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "geaf/error.hpp"

namespace geaf {

enum class UnaryOp : std::uint8_t { sin, cos, tan, exp, tanh };
enum class BoundOp : std::uint8_t { min, max };
enum class BinaryOp : std::uint8_t { add, sub, mul, div };

inline constexpr double kZeroDivisionThreshold = 1e-12;

struct ExprNode;

class ActivationExpr {
public:
    ActivationExpr();  // the input `x`
    explicit ActivationExpr(std::shared_ptr<const ExprNode> node) : node_(std::move(node)) {}

    const ExprNode& node() const { return *node_; }

    /// True iff an Input leaf occurs anywhere in the tree (cached at construction).
    bool contains_input() const;
    std::size_t size() const;

    friend bool operator==(const ActivationExpr& a, const ActivationExpr& b);

private:
    std::shared_ptr<const ExprNode> node_;
};

namespace node {
struct Input {};
struct Const {
    double value;
};
struct Unary {
    UnaryOp op;
    ActivationExpr child;
};
/// min(child, bound) / max(child, bound)
struct Bounded {
    BoundOp op;
    ActivationExpr child;
    double bound;
};
struct Pow {
    ActivationExpr base;
    double exponent;
};
struct Binary {
    BinaryOp op;
    ActivationExpr lhs;
    ActivationExpr rhs;
};
}  // namespace node

struct ExprNode {
    using Variant = std::variant<node::Input, node::Const, node::Unary, node::Bounded, node::Pow, node::Binary>;

    explicit ExprNode(Variant v) : value(std::move(v)) {
        std::visit(
            [this](const auto& n) {
                using N = std::decay_t<decltype(n)>;
                if constexpr (std::is_same_v<N, node::Input>) {
                    has_input = true;
                    count = 1;
                } else if constexpr (std::is_same_v<N, node::Const>) {
                    count = 1;
                } else if constexpr (std::is_same_v<N, node::Unary> || std::is_same_v<N, node::Bounded>) {
                    has_input = n.child.contains_input();
                    count = 1 + n.child.size();
                } else if constexpr (std::is_same_v<N, node::Pow>) {
                    has_input = n.base.contains_input();
                    count = 1 + n.base.size();
                } else {
                    has_input = n.lhs.contains_input() || n.rhs.contains_input();
                    count = 1 + n.lhs.size() + n.rhs.size();
                }
            },
            value);
    }

    Variant value;
    bool has_input = false;
    std::size_t count = 0;
};

inline ActivationExpr::ActivationExpr() : node_(std::make_shared<const ExprNode>(node::Input{})) {}

inline bool ActivationExpr::contains_input() const { return node_->has_input; }
inline std::size_t ActivationExpr::size() const { return node_->count; }

inline bool operator==(const ActivationExpr& a, const ActivationExpr& b) {
    if (a.node_ == b.node_) return true;
    const auto& va = a.node_->value;
    const auto& vb = b.node_->value;
    if (va.index() != vb.index()) return false;
    return std::visit(
        [&vb](const auto& x) -> bool {
            using N = std::decay_t<decltype(x)>;
            const auto& y = std::get<N>(vb);
            if constexpr (std::is_same_v<N, node::Input>) {
                return true;
            } else if constexpr (std::is_same_v<N, node::Const>) {
                return x.value == y.value;
            } else if constexpr (std::is_same_v<N, node::Unary>) {
                return x.op == y.op && x.child == y.child;
            } else if constexpr (std::is_same_v<N, node::Bounded>) {
                return x.op == y.op && x.bound == y.bound && x.child == y.child;
            } else if constexpr (std::is_same_v<N, node::Pow>) {
                return x.exponent == y.exponent && x.base == y.base;
            } else {
                return x.op == y.op && x.lhs == y.lhs && x.rhs == y.rhs;
            }
        },
        va);
}

// Builders. Kept in their own namespace so `build::sin` does not shadow std::sin.
namespace build {
inline ActivationExpr make(ExprNode::Variant v) { return ActivationExpr(std::make_shared<const ExprNode>(std::move(v))); }
inline ActivationExpr x() { return ActivationExpr(); }
inline ActivationExpr constant(double v) { return make(node::Const{v}); }
inline ActivationExpr unary(UnaryOp op, ActivationExpr c) { return make(node::Unary{op, std::move(c)}); }
inline ActivationExpr sin(ActivationExpr c) { return unary(UnaryOp::sin, std::move(c)); }
inline ActivationExpr cos(ActivationExpr c) { return unary(UnaryOp::cos, std::move(c)); }
inline ActivationExpr tan(ActivationExpr c) { return unary(UnaryOp::tan, std::move(c)); }
inline ActivationExpr exp(ActivationExpr c) { return unary(UnaryOp::exp, std::move(c)); }
inline ActivationExpr tanh(ActivationExpr c) { return unary(UnaryOp::tanh, std::move(c)); }
inline ActivationExpr bounded(BoundOp op, ActivationExpr c, double b) { return make(node::Bounded{op, std::move(c), b}); }
inline ActivationExpr min(ActivationExpr c, double b) { return bounded(BoundOp::min, std::move(c), b); }
inline ActivationExpr max(ActivationExpr c, double b) { return bounded(BoundOp::max, std::move(c), b); }
inline ActivationExpr pow(ActivationExpr c, double e) { return make(node::Pow{std::move(c), e}); }
inline ActivationExpr binary(BinaryOp op, ActivationExpr l, ActivationExpr r) {
    return make(node::Binary{op, std::move(l), std::move(r)});
}
}  // namespace build

inline ActivationExpr operator+(ActivationExpr l, ActivationExpr r) { return build::binary(BinaryOp::add, std::move(l), std::move(r)); }
inline ActivationExpr operator-(ActivationExpr l, ActivationExpr r) { return build::binary(BinaryOp::sub, std::move(l), std::move(r)); }
inline ActivationExpr operator*(ActivationExpr l, ActivationExpr r) { return build::binary(BinaryOp::mul, std::move(l), std::move(r)); }
inline ActivationExpr operator/(ActivationExpr l, ActivationExpr r) { return build::binary(BinaryOp::div, std::move(l), std::move(r)); }

inline bool contains_input(const ActivationExpr& e) { return e.contains_input(); }

// ---------------------------------------------------------------------------
// Evaluation

enum class EvalStatus : std::uint8_t { ok, zero_division, non_finite };

inline std::string_view to_string(EvalStatus s) {
    switch (s) {
        case EvalStatus::ok: return "ok";
        case EvalStatus::zero_division: return "zero_division";
        case EvalStatus::non_finite: return "non_finite";
    }
    return "?";
}

struct EvalOutcome {
    std::vector<double> values;
    EvalStatus status = EvalStatus::ok;

    bool ok() const { return status == EvalStatus::ok; }
};

namespace detail {

/// Value plus first derivative with respect to the input.
struct Dual {
    double v = 0.0;
    double d = 0.0;
};

inline Dual operator+(Dual a, Dual b) { return {a.v + b.v, a.d + b.d}; }
inline Dual operator-(Dual a, Dual b) { return {a.v - b.v, a.d - b.d}; }
inline Dual operator*(Dual a, Dual b) { return {a.v * b.v, a.d * b.v + a.v * b.d}; }
inline Dual operator/(Dual a, Dual b) { return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)}; }

inline double value_of(double x) { return x; }
inline double value_of(Dual x) { return x.v; }

template <class T>
T lift(double c) {
    if constexpr (std::is_same_v<T, Dual>) {
        return Dual{c, 0.0};
    } else {
        return c;
    }
}

inline double apply(UnaryOp op, double u) {
    switch (op) {
        case UnaryOp::sin: return std::sin(u);
        case UnaryOp::cos: return std::cos(u);
        case UnaryOp::tan: return std::tan(u);
        case UnaryOp::exp: return std::exp(u);
        case UnaryOp::tanh: return std::tanh(u);
    }
    return 0.0;
}

inline Dual apply(UnaryOp op, Dual u) {
    switch (op) {
        case UnaryOp::sin: return {std::sin(u.v), std::cos(u.v) * u.d};
        case UnaryOp::cos: return {std::cos(u.v), -std::sin(u.v) * u.d};
        case UnaryOp::tan: {
            const double t = std::tan(u.v);
            return {t, (1.0 + t * t) * u.d};
        }
        case UnaryOp::exp: {
            const double e = std::exp(u.v);
            return {e, e * u.d};
        }
        case UnaryOp::tanh: {
            const double t = std::tanh(u.v);
            return {t, (1.0 - t * t) * u.d};
        }
    }
    return {};
}

// Ties take derivative 1: d/du min(u,c) = 1 where u <= c, d/du max(u,c) = 1 where u >= c.
inline double apply(BoundOp op, double u, double c) { return op == BoundOp::min ? std::min(u, c) : std::max(u, c); }
inline Dual apply(BoundOp op, Dual u, double c) {
    const bool pass = op == BoundOp::min ? u.v <= c : u.v >= c;
    return pass ? u : Dual{c, 0.0};
}

inline double apply_pow(double u, double e) { return std::pow(u, e); }
inline Dual apply_pow(Dual u, double e) {
    return {std::pow(u.v, e), e * std::pow(u.v, e - 1.0) * u.d};
}

inline bool finite(double x) { return std::isfinite(x); }
inline bool finite(Dual x) { return std::isfinite(x.v) && std::isfinite(x.d); }

template <class T>
struct Evaluator {
    T x;
    bool check_derivative;
    EvalStatus trip = EvalStatus::ok;

    void flag(EvalStatus s) {
        // A zero division outranks a non-finite value.
        if (trip == EvalStatus::ok || s == EvalStatus::zero_division) trip = s;
    }

    T checked(T r) {
        if constexpr (std::is_same_v<T, Dual>) {
            if (!std::isfinite(r.v) || (check_derivative && !std::isfinite(r.d))) flag(EvalStatus::non_finite);
        } else {
            if (!std::isfinite(r)) flag(EvalStatus::non_finite);
        }
        return r;
    }

    T operator()(const ActivationExpr& e) {
        return std::visit([this](const auto& n) { return (*this)(n); }, e.node().value);
    }
    T operator()(const node::Input&) { return x; }
    T operator()(const node::Const& n) { return lift<T>(n.value); }
    T operator()(const node::Unary& n) { return checked(apply(n.op, (*this)(n.child))); }
    T operator()(const node::Bounded& n) { return checked(apply(n.op, (*this)(n.child), n.bound)); }
    T operator()(const node::Pow& n) { return checked(apply_pow((*this)(n.base), n.exponent)); }
    T operator()(const node::Binary& n) {
        const T l = (*this)(n.lhs);
        const T r = (*this)(n.rhs);
        switch (n.op) {
            case BinaryOp::add: return checked(l + r);
            case BinaryOp::sub: return checked(l - r);
            case BinaryOp::mul: return checked(l * r);
            case BinaryOp::div:
                if (std::abs(value_of(r)) < kZeroDivisionThreshold) {
                    flag(EvalStatus::zero_division);
                    return lift<T>(0.0);
                }
                return checked(l / r);
        }
        return lift<T>(0.0);
    }
};

}  // namespace detail

/// Evaluates the expression and its input-derivative over `x` in one pass.
/// `values` and `derivs` must have x.size() elements. A tripped guard zeroes
/// both outputs. With `check_derivative` false only values drive the guard, so a
/// finite activation with an infinite slope is reported as ok.
inline EvalStatus evaluate_with_derivative(const ActivationExpr& expr, std::span<const double> x,
                                           std::span<double> values, std::span<double> derivs,
                                           bool check_derivative = true) {
    const bool adjust = !expr.contains_input();
    EvalStatus status = EvalStatus::ok;
    for (std::size_t i = 0; i < x.size(); ++i) {
        detail::Evaluator<detail::Dual> ev{detail::Dual{x[i], 1.0}, check_derivative};
        detail::Dual r = ev(expr);
        if (adjust) r = {r.v * x[i], r.d * x[i] + r.v};
        if (ev.trip == EvalStatus::ok && !std::isfinite(r.v)) ev.flag(EvalStatus::non_finite);
        if (ev.trip != EvalStatus::ok) {
            if (status == EvalStatus::ok || ev.trip == EvalStatus::zero_division) status = ev.trip;
        }
        values[i] = r.v;
        derivs[i] = r.d;
    }
    if (status != EvalStatus::ok) {
        for (std::size_t i = 0; i < x.size(); ++i) {
            values[i] = x[i] * 0.0;
            derivs[i] = 0.0;
        }
    }
    return status;
}

inline EvalOutcome evaluate(const ActivationExpr& expr, std::span<const double> x) {
    const bool adjust = !expr.contains_input();
    EvalOutcome out;
    out.values.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        detail::Evaluator<double> ev{x[i], false};
        double r = ev(expr);
        if (adjust) r *= x[i];
        if (ev.trip == EvalStatus::ok && !std::isfinite(r)) ev.flag(EvalStatus::non_finite);
        if (ev.trip != EvalStatus::ok && (out.status == EvalStatus::ok || ev.trip == EvalStatus::zero_division)) {
            out.status = ev.trip;
        }
        out.values[i] = r;
    }
    if (!out.ok()) {
        for (std::size_t i = 0; i < x.size(); ++i) out.values[i] = x[i] * 0.0;
    }
    return out;
}

inline EvalOutcome derivative(const ActivationExpr& expr, std::span<const double> x) {
    EvalOutcome out;
    std::vector<double> values(x.size());
    out.values.resize(x.size());
    out.status = evaluate_with_derivative(expr, x, values, out.values, true);
    return out;
}

/// n evenly spaced samples over [lo, hi], both endpoints included. Each point is
/// evaluated on its own, so a guard trip only zeroes the offending sample.
inline std::vector<std::pair<double, double>> sample_curve(const ActivationExpr& expr, double lo, double hi,
                                                           std::size_t n) {
    if (!(lo < hi) || n < 2) throw Error("sample_curve requires lo < hi and n >= 2");
    std::vector<std::pair<double, double>> pts;
    pts.reserve(n);
    const double step = (hi - lo) / static_cast<double>(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const double x = i + 1 == n ? hi : lo + step * static_cast<double>(i);
        const double xs[1] = {x};
        pts.emplace_back(x, evaluate(expr, xs).values[0]);
    }
    return pts;
}

// ---------------------------------------------------------------------------
// Text form: sin cos tan exp tanh, min(e,c) max(e,c) pow(e,c), + - * /, x.

inline std::string_view to_string(UnaryOp op) {
    switch (op) {
        case UnaryOp::sin: return "sin";
        case UnaryOp::cos: return "cos";
        case UnaryOp::tan: return "tan";
        case UnaryOp::exp: return "exp";
        case UnaryOp::tanh: return "tanh";
    }
    return "?";
}

inline std::string_view to_string(BoundOp op) { return op == BoundOp::min ? "min" : "max"; }

inline char to_char(BinaryOp op) {
    switch (op) {
        case BinaryOp::add: return '+';
        case BinaryOp::sub: return '-';
        case BinaryOp::mul: return '*';
        case BinaryOp::div: return '/';
    }
    return '?';
}

inline int precedence(BinaryOp op) { return op == BinaryOp::add || op == BinaryOp::sub ? 1 : 2; }

/// Shortest text that parses back to the same double; always carries a decimal point.
inline std::string format_number(double v) {
    char buf[64];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, end);
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

namespace detail {

inline void write_text(const ActivationExpr& e, std::string& out);

struct TextWriter {
    std::string& out;

    void operator()(const node::Input&) { out += 'x'; }
    void operator()(const node::Const& n) { out += format_number(n.value); }
    void operator()(const node::Unary& n) {
        out += to_string(n.op);
        out += '(';
        write_text(n.child, out);
        out += ')';
    }
    void operator()(const node::Bounded& n) {
        out += to_string(n.op);
        out += '(';
        write_text(n.child, out);
        out += ',';
        out += format_number(n.bound);
        out += ')';
    }
    void operator()(const node::Pow& n) {
        out += "pow(";
        write_text(n.base, out);
        out += ',';
        out += format_number(n.exponent);
        out += ')';
    }
    void operator()(const node::Binary& n) {
        const int p = precedence(n.op);
        operand(n.lhs, [p](int child) { return child < p; });
        out += to_char(n.op);
        // Left associativity: an equal-precedence right operand keeps its brackets.
        operand(n.rhs, [p](int child) { return child <= p; });
    }

    template <class NeedsParens>
    void operand(const ActivationExpr& e, NeedsParens needs) {
        const auto* b = std::get_if<node::Binary>(&e.node().value);
        const auto* c = std::get_if<node::Const>(&e.node().value);
        const bool parens = (b && needs(precedence(b->op))) || (c && c->value < 0.0);
        if (parens) out += '(';
        write_text(e, out);
        if (parens) out += ')';
    }
};

inline void write_text(const ActivationExpr& e, std::string& out) { std::visit(TextWriter{out}, e.node().value); }

class TextParser {
public:
    explicit TextParser(std::string_view s) : src_(s) {}

    ActivationExpr parse() {
        ActivationExpr e = expression(0);
        skip_ws();
        if (pos_ != src_.size()) fail("unexpected trailing input");
        return e;
    }

private:
    std::string_view src_;
    std::size_t pos_ = 0;
    int nesting_ = 0;

    [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, pos_); }

    void skip_ws() {
        while (pos_ < src_.size() && (src_[pos_] == ' ' || src_[pos_] == '\t' || src_[pos_] == '\n' || src_[pos_] == '\r'))
            ++pos_;
    }

    bool consume(std::string_view tok) {
        skip_ws();
        if (src_.substr(pos_, tok.size()) == tok) {
            pos_ += tok.size();
            return true;
        }
        return false;
    }

    void expect(std::string_view tok) {
        if (!consume(tok)) fail("expected '" + std::string(tok) + "'");
    }

    bool peek_binary(BinaryOp& op, std::size_t& len) {
        skip_ws();
        static constexpr std::pair<std::string_view, BinaryOp> table[] = {
            {"+", BinaryOp::add},         {"-", BinaryOp::sub},         {"*", BinaryOp::mul},
            {"/", BinaryOp::div},         {"\xC3\x97", BinaryOp::mul},  {"\xC3\xB7", BinaryOp::div},
            {"\xE2\x88\x92", BinaryOp::sub},
        };
        for (const auto& [tok, o] : table) {
            if (src_.substr(pos_, tok.size()) == tok) {
                op = o;
                len = tok.size();
                return true;
            }
        }
        return false;
    }

    // Precedence climbing; every operator is left-associative.
    ActivationExpr expression(int min_prec) {
        if (++nesting_ > 512) fail("expression nested too deeply");
        ActivationExpr lhs = operand();
        BinaryOp op{};
        std::size_t len = 0;
        while (peek_binary(op, len) && precedence(op) >= min_prec) {
            pos_ += len;
            ActivationExpr rhs = expression(precedence(op) + 1);
            lhs = build::binary(op, std::move(lhs), std::move(rhs));
        }
        --nesting_;
        return lhs;
    }

    double number() {
        skip_ws();
        const std::size_t start = pos_;
        if (pos_ < src_.size() && (src_[pos_] == '-' || src_[pos_] == '+')) ++pos_;
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(src_.data() + pos_, src_.data() + src_.size(), v);
        if (ec != std::errc{} || ptr == src_.data() + pos_) {
            pos_ = start;
            fail("expected a number");
        }
        if (start < pos_ && src_[start] == '-') v = -v;
        pos_ = static_cast<std::size_t>(ptr - src_.data());
        return v;
    }

    std::string_view identifier() {
        skip_ws();
        const std::size_t start = pos_;
        while (pos_ < src_.size() && (std::isalpha(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_')) ++pos_;
        return src_.substr(start, pos_ - start);
    }

    ActivationExpr operand() {
        skip_ws();
        if (pos_ >= src_.size()) fail("unexpected end of input");
        const char c = src_[pos_];
        if (c == '(') {
            ++pos_;
            ActivationExpr e = expression(0);
            expect(")");
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-') return build::constant(number());

        const std::size_t start = pos_;
        const std::string_view id = identifier();
        if (id.empty()) fail("expected an operand");
        if (id == "x" || id == "tensor") return build::x();

        static constexpr std::pair<std::string_view, UnaryOp> unary[] = {
            {"sin", UnaryOp::sin}, {"cos", UnaryOp::cos}, {"tan", UnaryOp::tan},
            {"exp", UnaryOp::exp}, {"tanh", UnaryOp::tanh},
        };
        for (const auto& [name, op] : unary) {
            if (id == name) {
                expect("(");
                ActivationExpr arg = expression(0);
                expect(")");
                return build::unary(op, std::move(arg));
            }
        }
        if (id == "min" || id == "max" || id == "pow") {
            expect("(");
            ActivationExpr arg = expression(0);
            expect(",");
            const double c2 = number();
            expect(")");
            if (id == "pow") return build::pow(std::move(arg), c2);
            return build::bounded(id == "min" ? BoundOp::min : BoundOp::max, std::move(arg), c2);
        }
        pos_ = start;
        fail("unknown identifier '" + std::string(id) + "'");
    }
};

}  // namespace detail

inline std::string to_text(const ActivationExpr& e) {
    std::string out;
    detail::write_text(e, out);
    return out;
}

inline ActivationExpr parse_text(std::string_view text) { return detail::TextParser(text).parse(); }

}  // namespace geaf
