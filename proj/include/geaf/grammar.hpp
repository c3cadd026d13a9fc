#pragma once

// BNF grammar and the codon-driven genotype -> phenotype mapping.
//
// Mapping walks the grammar depth-first from the start symbol. At a rule with
// k > 1 productions one codon c is read and production c mod k is expanded; a
// rule with a single production reads nothing. Reading past the last codon
// wraps to codon 0. The derived terminal string is then read as an infix
// expression with the usual precedence (* / over + -, left associative), which
// is how the string form of the phenotype would evaluate.

#include <algorithm>
#include <array>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "geaf/error.hpp"
#include "geaf/expr.hpp"

namespace geaf {

inline constexpr std::size_t kGenomeLength = 30;
inline constexpr int kCodonMax = 100;

struct UndefinedNonterminal : GrammarError {
    UndefinedNonterminal(const std::string& name, std::size_t line_no)
        : GrammarError("undefined nonterminal " + name, line_no), nonterminal(name) {}
    std::string nonterminal;
};

/// The derived phenotype is not a well-formed expression (custom grammars only).
struct MalformedPhenotype : MappingOverflow {
    using MappingOverflow::MappingOverflow;
};

// ---------------------------------------------------------------------------
// Terminal tokens

enum class Primitive : std::uint8_t { sin, cos, tan, exp, tanh, min, max, pow };

enum class TokenKind : std::uint8_t { call_open, lparen, rparen, comma, input, op, constant };

struct Token {
    TokenKind kind{};
    Primitive primitive{};  // call_open
    BinaryOp op{};          // op
    double value = 0.0;     // constant
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

}  // namespace detail

/// Reads a terminal spelling as an expression token. Host-framework spellings
/// such as `tf.math.minimum (` are accepted as aliases of the abstract primitives.
inline std::optional<Token> classify_terminal(std::string_view raw) {
    const std::string_view s = detail::trim(raw);
    if (s == "(") return Token{TokenKind::lparen};
    if (s == ")") return Token{TokenKind::rparen};
    if (s == ",") return Token{TokenKind::comma};
    if (s == "tensor" || s == "x") return Token{TokenKind::input};

    static constexpr std::pair<std::string_view, BinaryOp> ops[] = {
        {"+", BinaryOp::add}, {"-", BinaryOp::sub}, {"\xE2\x88\x92", BinaryOp::sub},
        {"*", BinaryOp::mul}, {"\xC3\x97", BinaryOp::mul}, {"/", BinaryOp::div},
        {"\xC3\xB7", BinaryOp::div},
    };
    for (const auto& [spelling, op] : ops) {
        if (s == spelling) {
            Token t{TokenKind::op};
            t.op = op;
            return t;
        }
    }

    double v = 0.0;
    if (auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v); ec == std::errc{} && ptr == s.data() + s.size()) {
        Token t{TokenKind::constant};
        t.value = v;
        return t;
    }

    if (!s.empty() && s.back() == '(') {
        std::string_view name = detail::trim(s.substr(0, s.size() - 1));
        if (name.starts_with("tf.math.")) name.remove_prefix(8);
        static constexpr std::pair<std::string_view, Primitive> prims[] = {
            {"sin", Primitive::sin},     {"cos", Primitive::cos},     {"tan", Primitive::tan},
            {"exp", Primitive::exp},     {"tanh", Primitive::tanh},   {"min", Primitive::min},
            {"minimum", Primitive::min}, {"max", Primitive::max},     {"maximum", Primitive::max},
            {"pow", Primitive::pow},
        };
        for (const auto& [spelling, prim] : prims) {
            if (name == spelling) {
                Token t{TokenKind::call_open};
                t.primitive = prim;
                return t;
            }
        }
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Grammar structure

struct Symbol {
    enum class Kind : std::uint8_t { terminal, nonterminal };

    Kind kind = Kind::terminal;
    std::string text;  // terminal spelling, or nonterminal name with angle brackets
    Token token{};     // classified terminal

    static Symbol terminal(std::string spelling) {
        auto tok = classify_terminal(spelling);
        if (!tok) throw GrammarError("unrecognised terminal '" + spelling + "'", 0);
        return Symbol{Kind::terminal, std::move(spelling), *tok};
    }
    static Symbol nonterminal(std::string name) { return Symbol{Kind::nonterminal, std::move(name), {}}; }

    bool is_terminal() const { return kind == Kind::terminal; }

    friend bool operator==(const Symbol& a, const Symbol& b) { return a.kind == b.kind && a.text == b.text; }
};

struct Production {
    std::vector<Symbol> symbols;

    friend bool operator==(const Production&, const Production&) = default;
};

struct Rule {
    std::string name;
    std::vector<Production> productions;

    friend bool operator==(const Rule&, const Rule&) = default;
};

class Grammar {
public:
    /// Rules keep their order; the first rule is the start symbol unless `start` is given.
    explicit Grammar(std::vector<Rule> rules, std::string start = {}) : rules_(std::move(rules)), start_(std::move(start)) {
        if (rules_.empty()) throw GrammarError("grammar has no rules", 0);
        if (start_.empty()) start_ = rules_.front().name;
        for (std::size_t i = 0; i < rules_.size(); ++i) {
            if (rules_[i].productions.empty()) throw GrammarError("rule " + rules_[i].name + " has no productions", 0);
            for (const auto& p : rules_[i].productions)
                if (p.symbols.empty()) throw GrammarError("rule " + rules_[i].name + " has an empty production", 0);
            if (!index_.emplace(rules_[i].name, i).second) throw GrammarError("duplicate rule " + rules_[i].name, 0);
        }
        if (!index_.contains(start_)) throw UndefinedNonterminal(start_, 0);
        for (const auto& r : rules_)
            for (const auto& p : r.productions)
                for (const auto& s : p.symbols)
                    if (!s.is_terminal() && !index_.contains(s.text)) throw UndefinedNonterminal(s.text, 0);
    }

    const std::vector<Rule>& rules() const { return rules_; }
    const std::string& start() const { return start_; }
    std::size_t index_of(const std::string& name) const { return index_.at(name); }
    const Rule& rule(const std::string& name) const { return rules_.at(index_of(name)); }
    const Rule* find(const std::string& name) const {
        auto it = index_.find(name);
        return it == index_.end() ? nullptr : &rules_[it->second];
    }

    friend bool operator==(const Grammar& a, const Grammar& b) { return a.start_ == b.start_ && a.rules_ == b.rules_; }

private:
    std::vector<Rule> rules_;
    std::string start_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// The activation grammar: one expression built from unary primitives of the
/// input, two-argument min/max/pow against a constant, chained by + / * -.
inline Grammar default_grammar() {
    using S = Symbol;
    auto nt = [](const char* n) { return S::nonterminal(n); };
    auto t = [](const char* s) { return S::terminal(s); };
    auto call = [&](const char* fn, const char* arg) { return Production{{t(fn), nt(arg), t(")")}}; };
    auto call2 = [&](const char* fn, const char* arg) { return Production{{t(fn), nt(arg), nt("<acti_var>"), t(")")}}; };

    std::vector<Rule> rules;
    rules.push_back({"<activation_function>", {Production{{nt("<acti_expr>")}}}});
    rules.push_back({"<acti_expr>",
                     {Production{{nt("<acti_pre_op>")}},
                      Production{{nt("<acti_pre_op>"), nt("<op>"), nt("<acti_expr>")}},
                      Production{{t("("), nt("<acti_pre_op>"), nt("<op>"), nt("<acti_expr>"), t(")")}}}});
    rules.push_back({"<acti_pre_op>",
                     {call("sin(", "<acti_input>"), call("cos(", "<acti_input>"), call("tan(", "<acti_input>"),
                      call2("min(", "<acti_input>"), call2("max(", "<acti_input>"), call("exp(", "<acti_input>"),
                      call("tanh(", "<acti_input>"), call2("pow(", "<acti_pre_op>")}});
    rules.push_back({"<acti_input>", {Production{{t("tensor")}}}});
    rules.push_back({"<op>",
                     {Production{{t("+")}}, Production{{t("\xC3\xB7")}}, Production{{t("\xC3\x97")}},
                      Production{{t("-")}}}});
    rules.push_back({"<acti_var>",
                     {Production{{t("0.1")}}, Production{{t("1.0")}}, Production{{t("2.0")}},
                      Production{{t("3.0")}}}});
    return Grammar(std::move(rules));
}

// ---------------------------------------------------------------------------
// BNF text

namespace detail {

inline bool bare_terminal(std::string_view s) {
    if (s.empty()) return false;
    for (char c : s) {
        if (c == ' ' || c == '\t' || c == '"' || c == '|' || c == '<' || c == '(' || c == ')' || c == ',') return false;
    }
    return true;
}

}  // namespace detail

/// Serialises a grammar as BNF: one `::==` per rule, further alternatives on
/// continuation lines starting with `|`.
inline std::string to_bnf(const Grammar& g) {
    std::size_t width = 0;
    for (const auto& r : g.rules()) width = std::max(width, r.name.size());
    std::ostringstream out;
    for (const auto& r : g.rules()) {
        for (std::size_t i = 0; i < r.productions.size(); ++i) {
            if (i == 0) {
                out << r.name << std::string(width - r.name.size(), ' ') << " ::== ";
            } else {
                out << std::string(width, ' ') << "   | ";
            }
            const auto& syms = r.productions[i].symbols;
            for (std::size_t j = 0; j < syms.size(); ++j) {
                if (j) out << ' ';
                if (!syms[j].is_terminal() || detail::bare_terminal(syms[j].text)) {
                    out << syms[j].text;
                } else {
                    out << '"' << syms[j].text << '"';
                }
            }
            out << '\n';
        }
    }
    return out.str();
}

/// Parses BNF text. Rule heads are `<name> ::== alt | alt ...` (`::=` also
/// accepted); a line starting with `|` continues the previous rule. Terminals
/// may be quoted; `#` starts a comment line. The first rule is the start symbol.
inline Grammar load_grammar(std::string_view text) {
    struct Pending {
        Rule rule;
        std::size_t line;
        std::vector<std::pair<std::string, std::size_t>> refs;  // nonterminal, line
    };
    std::vector<Pending> pending;
    std::unordered_map<std::string, std::size_t> seen;

    auto parse_alternatives = [&](std::string_view body, std::size_t line_no, Pending& rule, bool leading_bar) {
        std::vector<Symbol> current;
        bool expect_alt = leading_bar;  // a continuation line opens with '|'
        auto close = [&]() {
            if (current.empty()) throw GrammarError("empty alternative in rule " + rule.rule.name, line_no);
            rule.rule.productions.push_back(Production{std::move(current)});
            current.clear();
        };
        std::size_t i = 0;
        if (expect_alt) {
            // skip the leading bar
            while (i < body.size() && (body[i] == ' ' || body[i] == '\t')) ++i;
            ++i;
        }
        while (i < body.size()) {
            const char c = body[i];
            if (c == ' ' || c == '\t' || c == '\r') {
                ++i;
            } else if (c == '|') {
                close();
                ++i;
            } else if (c == '<') {
                const auto end = body.find('>', i);
                if (end == std::string_view::npos) throw GrammarError("unterminated nonterminal", line_no);
                std::string name(body.substr(i, end - i + 1));
                rule.refs.emplace_back(name, line_no);
                current.push_back(Symbol::nonterminal(std::move(name)));
                i = end + 1;
            } else if (c == '"') {
                const auto end = body.find('"', i + 1);
                if (end == std::string_view::npos) throw GrammarError("unterminated quoted terminal", line_no);
                std::string spelling(body.substr(i + 1, end - i - 1));
                if (!classify_terminal(spelling)) throw GrammarError("unrecognised terminal '" + spelling + "'", line_no);
                current.push_back(Symbol::terminal(std::move(spelling)));
                i = end + 1;
            } else {
                std::size_t end = i;
                while (end < body.size() && body[end] != ' ' && body[end] != '\t' && body[end] != '|' && body[end] != '\r')
                    ++end;
                std::string spelling(body.substr(i, end - i));
                if (!classify_terminal(spelling)) throw GrammarError("unrecognised terminal '" + spelling + "'", line_no);
                current.push_back(Symbol::terminal(std::move(spelling)));
                i = end;
            }
        }
        close();
    };

    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        const std::string_view line = detail::trim(text.substr(pos, nl - pos));
        pos = nl + 1;
        ++line_no;
        if (line.empty() || line.front() == '#') continue;

        if (line.front() == '|') {
            if (pending.empty()) throw GrammarError("alternative before any rule", line_no);
            parse_alternatives(line, line_no, pending.back(), true);
            continue;
        }
        if (line.front() != '<') throw GrammarError("expected a rule definition", line_no);
        const auto close = line.find('>');
        if (close == std::string_view::npos) throw GrammarError("unterminated nonterminal", line_no);
        std::string name(line.substr(0, close + 1));
        std::string_view rest = detail::trim(line.substr(close + 1));
        if (rest.starts_with("::==")) {
            rest.remove_prefix(4);
        } else if (rest.starts_with("::=")) {
            rest.remove_prefix(3);
        } else {
            throw GrammarError("expected '::==' after " + name, line_no);
        }
        if (seen.contains(name)) throw GrammarError("duplicate rule " + name, line_no);
        seen.emplace(name, pending.size());
        pending.push_back(Pending{Rule{name, {}}, line_no, {}});
        rest = detail::trim(rest);
        if (!rest.empty()) parse_alternatives(rest, line_no, pending.back(), false);
    }

    if (pending.empty()) throw GrammarError("grammar has no rules", line_no);
    std::vector<Rule> rules;
    for (auto& p : pending) {
        if (p.rule.productions.empty()) throw GrammarError("rule " + p.rule.name + " has no productions", p.line);
        for (const auto& [ref, ln] : p.refs)
            if (!seen.contains(ref)) throw UndefinedNonterminal(ref, ln);
        rules.push_back(std::move(p.rule));
    }
    return Grammar(std::move(rules));
}

// ---------------------------------------------------------------------------
// Genotype and mapping

class Genotype {
public:
    using Codons = std::array<int, kGenomeLength>;

    Genotype() { codons_.fill(0); }
    explicit Genotype(const Codons& c) : codons_(c) { validate(); }
    explicit Genotype(std::span<const int> c) {
        if (c.size() != kGenomeLength)
            throw Error("genotype must have " + std::to_string(kGenomeLength) + " codons, got " + std::to_string(c.size()));
        std::copy(c.begin(), c.end(), codons_.begin());
        validate();
    }

    const Codons& codons() const { return codons_; }
    int operator[](std::size_t i) const { return codons_[i]; }
    std::size_t size() const { return kGenomeLength; }

    /// Returns a copy with codon `i` replaced.
    Genotype with(std::size_t i, int value) const {
        Codons c = codons_;
        c.at(i) = value;
        return Genotype(c);
    }

    /// Parses "c0,c1,...,c29".
    static Genotype parse(std::string_view text) {
        std::vector<int> values;
        std::size_t pos = 0;
        while (pos <= text.size()) {
            auto comma = text.find(',', pos);
            if (comma == std::string_view::npos) comma = text.size();
            const std::string_view field = detail::trim(text.substr(pos, comma - pos));
            int v = 0;
            auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
            if (field.empty() || ec != std::errc{} || ptr != field.data() + field.size())
                throw Error("malformed codon '" + std::string(field) + "'");
            values.push_back(v);
            pos = comma + 1;
        }
        return Genotype(std::span<const int>(values));
    }

    std::string to_string() const {
        std::string s;
        for (std::size_t i = 0; i < kGenomeLength; ++i) {
            if (i) s += ',';
            s += std::to_string(codons_[i]);
        }
        return s;
    }

    friend bool operator==(const Genotype&, const Genotype&) = default;

private:
    void validate() const {
        for (std::size_t i = 0; i < kGenomeLength; ++i)
            if (codons_[i] < 0 || codons_[i] > kCodonMax)
                throw Error("codon " + std::to_string(i) + " = " + std::to_string(codons_[i]) + " outside [0," +
                            std::to_string(kCodonMax) + "]");
    }

    Codons codons_;
};

/// Bounds on a derivation. Depth is the number of simultaneously open
/// expansions of any single nonterminal, i.e. recursion depth.
struct MappingLimits {
    std::size_t max_wraps = 10;
    std::size_t max_depth = 50;
};

struct MappingTrace {
    std::size_t codons_consumed = 0;
    std::size_t wraps_used = 0;
    std::vector<std::size_t> expression_starts;  // codons_consumed when each expression began

    friend bool operator==(const MappingTrace&, const MappingTrace&) = default;
};

struct MappingResult {
    std::vector<ActivationExpr> expressions;
    MappingTrace trace;
};

namespace detail {

class TokenReader {
public:
    explicit TokenReader(std::span<const Token> toks) : toks_(toks) {}

    ActivationExpr parse() {
        ActivationExpr e = expression(0);
        if (pos_ != toks_.size()) fail("trailing tokens after expression");
        return e;
    }

private:
    std::span<const Token> toks_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& msg) const {
        throw MalformedPhenotype("malformed phenotype at token " + std::to_string(pos_) + ": " + msg);
    }

    const Token* peek() const { return pos_ < toks_.size() ? &toks_[pos_] : nullptr; }

    const Token& take() {
        if (pos_ >= toks_.size()) fail("unexpected end of phenotype");
        return toks_[pos_++];
    }

    void expect(TokenKind k, const char* what) {
        if (take().kind != k) {
            --pos_;
            fail(std::string("expected ") + what);
        }
    }

    ActivationExpr expression(int min_prec) {
        ActivationExpr lhs = operand();
        while (const Token* t = peek()) {
            if (t->kind != TokenKind::op || precedence(t->op) < min_prec) break;
            const BinaryOp op = t->op;
            ++pos_;
            ActivationExpr rhs = expression(precedence(op) + 1);
            lhs = build::binary(op, std::move(lhs), std::move(rhs));
        }
        return lhs;
    }

    double constant() {
        const Token& t = take();
        if (t.kind != TokenKind::constant) {
            --pos_;
            fail("expected a constant argument");
        }
        return t.value;
    }

    ActivationExpr operand() {
        const Token& t = take();
        switch (t.kind) {
            case TokenKind::input: return build::x();
            case TokenKind::constant: return build::constant(t.value);
            case TokenKind::lparen: {
                ActivationExpr e = expression(0);
                expect(TokenKind::rparen, "')'");
                return e;
            }
            case TokenKind::call_open: {
                ActivationExpr arg = expression(0);
                ActivationExpr result;
                switch (t.primitive) {
                    case Primitive::sin: result = build::sin(arg); break;
                    case Primitive::cos: result = build::cos(arg); break;
                    case Primitive::tan: result = build::tan(arg); break;
                    case Primitive::exp: result = build::exp(arg); break;
                    case Primitive::tanh: result = build::tanh(arg); break;
                    case Primitive::min:
                    case Primitive::max:
                    case Primitive::pow: {
                        // Arguments may be juxtaposed or comma separated.
                        if (const Token* c = peek(); c && c->kind == TokenKind::comma) ++pos_;
                        const double k = constant();
                        if (t.primitive == Primitive::pow) {
                            result = build::pow(arg, k);
                        } else {
                            result = build::bounded(t.primitive == Primitive::min ? BoundOp::min : BoundOp::max, arg, k);
                        }
                        break;
                    }
                }
                expect(TokenKind::rparen, "')'");
                return result;
            }
            default: --pos_; fail("expected an operand");
        }
    }
};

class Mapper {
public:
    Mapper(const Genotype& g, const Grammar& grammar, const MappingLimits& limits)
        : genotype_(g), grammar_(grammar), limits_(limits), open_(grammar.rules().size(), 0) {}

    ActivationExpr next_expression() {
        trace.expression_starts.push_back(trace.codons_consumed);
        tokens_.clear();
        expand(grammar_.index_of(grammar_.start()));
        return TokenReader(tokens_).parse();
    }

    MappingTrace trace;

private:
    const Genotype& genotype_;
    const Grammar& grammar_;
    MappingLimits limits_;
    std::vector<std::size_t> open_;
    std::vector<Token> tokens_;
    std::size_t cursor_ = 0;

    int read_codon() {
        if (cursor_ == genotype_.size()) {
            cursor_ = 0;
            if (++trace.wraps_used > limits_.max_wraps)
                throw MappingOverflow("genotype exhausted after " + std::to_string(limits_.max_wraps) + " wraps");
        }
        ++trace.codons_consumed;
        return genotype_[cursor_++];
    }

    void expand(std::size_t rule_index) {
        const Rule& rule = grammar_.rules()[rule_index];
        if (++open_[rule_index] > limits_.max_depth)
            throw MappingOverflow("expansion of " + rule.name + " exceeds depth " + std::to_string(limits_.max_depth));
        std::size_t choice = 0;
        if (rule.productions.size() > 1)
            choice = static_cast<std::size_t>(read_codon()) % rule.productions.size();
        for (const Symbol& s : rule.productions[choice].symbols) {
            if (s.is_terminal()) {
                tokens_.push_back(s.token);
            } else {
                expand(grammar_.index_of(s.text));
            }
        }
        --open_[rule_index];
    }
};

}  // namespace detail

/// Maps one genotype to `n_functions` expressions, the codon cursor continuing
/// from one expression to the next. Throws MappingOverflow when the wrap or
/// depth limit is exceeded.
inline MappingResult map_genotype(const Genotype& genotype, const Grammar& grammar, std::size_t n_functions,
                                  const MappingLimits& limits = {}) {
    if (n_functions < 1) throw Error("n_functions must be at least 1");
    if (limits.max_wraps < 1 || limits.max_depth < 1) throw Error("mapping limits must be at least 1");
    detail::Mapper m(genotype, grammar, limits);
    MappingResult out;
    out.expressions.reserve(n_functions);
    for (std::size_t i = 0; i < n_functions; ++i) out.expressions.push_back(m.next_expression());
    out.trace = std::move(m.trace);
    return out;
}

inline std::size_t used_codon_count(const Genotype& genotype, const Grammar& grammar, std::size_t n_functions,
                                    const MappingLimits& limits = {}) {
    return map_genotype(genotype, grammar, n_functions, limits).trace.codons_consumed;
}

}  // namespace geaf
