#pragma once

// Symbolic scalar expressions: the coefficient field for every geometric
// object in the library. Immutable trees over named symbols with exact
// rational constants; supports parsing, printing (round-trippable),
// differentiation, numeric evaluation and probabilistic equality.

#include <boost/multiprecision/cpp_int.hpp>

#include <cctype>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "phasesym/errors.hpp"

namespace phasesym {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

inline double to_double(const Rational& r) { return r.convert_to<double>(); }

enum class ExprKind : std::uint8_t {
    Constant,   // exact rational
    Symbol,     // named coordinate or parameter (bound at system load)
    Negate,
    Sum,        // n-ary
    Product,    // n-ary
    Quotient,
    Power,      // rational exponent only
    Sqrt,
};

class ScalarExpr;
namespace detail {
struct ExprNode {
    ExprKind kind;
    Rational constant;               // Constant
    std::string symbol;              // Symbol
    Rational exponent;               // Power
    std::vector<ScalarExpr> kids;
};
}  // namespace detail

/// Immutable handle to an expression tree node.
class ScalarExpr {
  public:
    ScalarExpr() = default;  // empty handle; use factories below
    explicit ScalarExpr(std::shared_ptr<const detail::ExprNode> n) : node_(std::move(n)) {}

    bool valid() const { return node_ != nullptr; }
    ExprKind kind() const { return node_->kind; }
    const Rational& constant() const { return node_->constant; }
    const std::string& symbol() const { return node_->symbol; }
    const Rational& exponent() const { return node_->exponent; }
    const std::vector<ScalarExpr>& kids() const { return node_->kids; }

    bool is_constant() const { return node_->kind == ExprKind::Constant; }
    bool is_zero() const { return is_constant() && constant() == 0; }
    bool is_one() const { return is_constant() && constant() == 1; }

  private:
    std::shared_ptr<const detail::ExprNode> node_;
};

namespace detail {
inline ScalarExpr make_node(ExprNode&& n) {
    return ScalarExpr(std::make_shared<const ExprNode>(std::move(n)));
}
}  // namespace detail

inline ScalarExpr constant(Rational r) {
    detail::ExprNode n;
    n.kind = ExprKind::Constant;
    n.constant = std::move(r);
    return detail::make_node(std::move(n));
}

inline ScalarExpr constant(long v) { return constant(Rational(v)); }

inline ScalarExpr symbol(std::string name) {
    detail::ExprNode n;
    n.kind = ExprKind::Symbol;
    n.symbol = std::move(name);
    return detail::make_node(std::move(n));
}

ScalarExpr negate(const ScalarExpr& a);

/// n-ary sum with constant folding and zero elimination.
inline ScalarExpr sum(std::vector<ScalarExpr> terms) {
    Rational c = 0;
    std::vector<ScalarExpr> out;
    for (auto& t : terms) {
        if (t.kind() == ExprKind::Sum) {  // flatten
            for (auto& k : t.kids()) {
                if (k.is_constant()) c += k.constant();
                else out.push_back(k);
            }
        } else if (t.is_constant()) {
            c += t.constant();
        } else {
            out.push_back(std::move(t));
        }
    }
    if (c != 0 || out.empty()) out.insert(out.begin(), constant(c));
    if (out.size() == 1) return out[0];
    detail::ExprNode n;
    n.kind = ExprKind::Sum;
    n.kids = std::move(out);
    return detail::make_node(std::move(n));
}

inline ScalarExpr sum(const ScalarExpr& a, const ScalarExpr& b) {
    return sum(std::vector<ScalarExpr>{a, b});
}

/// n-ary product with constant folding and 0/1 elimination.
inline ScalarExpr product(std::vector<ScalarExpr> factors) {
    Rational c = 1;
    std::vector<ScalarExpr> out;
    for (auto& f : factors) {
        if (f.kind() == ExprKind::Product) {
            for (auto& k : f.kids()) {
                if (k.is_constant()) c *= k.constant();
                else out.push_back(k);
            }
        } else if (f.is_constant()) {
            c *= f.constant();
        } else {
            out.push_back(std::move(f));
        }
    }
    if (c == 0) return constant(0);
    if (c != 1 || out.empty()) out.insert(out.begin(), constant(c));
    if (out.size() == 1) return out[0];
    detail::ExprNode n;
    n.kind = ExprKind::Product;
    n.kids = std::move(out);
    return detail::make_node(std::move(n));
}

inline ScalarExpr product(const ScalarExpr& a, const ScalarExpr& b) {
    return product(std::vector<ScalarExpr>{a, b});
}

inline ScalarExpr negate(const ScalarExpr& a) {
    if (a.is_constant()) return constant(-a.constant());
    if (a.kind() == ExprKind::Negate) return a.kids()[0];
    detail::ExprNode n;
    n.kind = ExprKind::Negate;
    n.kids = {a};
    return detail::make_node(std::move(n));
}

inline ScalarExpr quotient(const ScalarExpr& a, const ScalarExpr& b) {
    if (a.is_zero()) return constant(0);
    if (b.is_constant() && b.constant() != 0) {
        if (b.is_one()) return a;
        if (a.is_constant()) return constant(a.constant() / b.constant());
        return product(constant(Rational(1) / b.constant()), a);
    }
    detail::ExprNode n;
    n.kind = ExprKind::Quotient;
    n.kids = {a, b};
    return detail::make_node(std::move(n));
}

/// base^exponent with an exact rational exponent.
inline ScalarExpr power(const ScalarExpr& base, Rational exp) {
    using boost::multiprecision::denominator;
    using boost::multiprecision::numerator;
    if (exp == 0) return constant(1);
    if (exp == 1) return base;
    if (base.is_one()) return constant(1);
    if (base.is_constant() && denominator(exp) == 1) {
        BigInt e = numerator(exp);
        bool neg = e < 0;
        if (neg) e = -e;
        if (base.constant() == 0) {
            if (!neg) return constant(0);
        } else {
            Rational r = 1;
            Rational b = base.constant();
            for (BigInt i = 0; i < e; ++i) r *= b;
            if (neg) r = Rational(1) / r;
            return constant(r);
        }
    }
    detail::ExprNode n;
    n.kind = ExprKind::Power;
    n.exponent = std::move(exp);
    n.kids = {base};
    return detail::make_node(std::move(n));
}

inline ScalarExpr sqrt_of(const ScalarExpr& a) {
    using boost::multiprecision::denominator;
    using boost::multiprecision::numerator;
    if (a.is_constant() && a.constant() >= 0) {
        BigInt num = numerator(a.constant()), den = denominator(a.constant());
        BigInt rn = boost::multiprecision::sqrt(num), rd = boost::multiprecision::sqrt(den);
        if (rn * rn == num && rd * rd == den) return constant(Rational(rn, rd));
    }
    detail::ExprNode n;
    n.kind = ExprKind::Sqrt;
    n.kids = {a};
    return detail::make_node(std::move(n));
}

inline ScalarExpr difference(const ScalarExpr& a, const ScalarExpr& b) {
    return sum(a, negate(b));
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Bindings for every coordinate and parameter name referenced at a point.
struct EvalContext {
    std::map<std::string, double> values;

    double lookup(const std::string& name) const {
        auto it = values.find(name);
        if (it == values.end()) throw UnknownNameError(name);
        return it->second;
    }
};

inline double evaluate(const ScalarExpr& e, const EvalContext& ctx);

namespace detail {
inline double check_finite(double v) {
    if (!std::isfinite(v))
        throw DomainPointError("non-finite value during evaluation");
    return v;
}

inline double eval_pow(double base, const Rational& exp) {
    using boost::multiprecision::denominator;
    const bool integral = denominator(exp) == 1;
    if (base < 0.0 && !integral)
        throw DomainPointError("negative base with fractional exponent");
    if (base == 0.0 && exp < 0)
        throw DomainPointError("zero base with negative exponent");
    return check_finite(std::pow(base, to_double(exp)));
}
}  // namespace detail

inline double evaluate(const ScalarExpr& e, const EvalContext& ctx) {
    switch (e.kind()) {
        case ExprKind::Constant: return to_double(e.constant());
        case ExprKind::Symbol: return ctx.lookup(e.symbol());
        case ExprKind::Negate: return -evaluate(e.kids()[0], ctx);
        case ExprKind::Sum: {
            double s = 0;
            for (const auto& k : e.kids()) s += evaluate(k, ctx);
            return detail::check_finite(s);
        }
        case ExprKind::Product: {
            double p = 1;
            for (const auto& k : e.kids()) p *= evaluate(k, ctx);
            return detail::check_finite(p);
        }
        case ExprKind::Quotient: {
            double num = evaluate(e.kids()[0], ctx);
            double den = evaluate(e.kids()[1], ctx);
            if (den == 0.0) throw DomainPointError("division by zero");
            return detail::check_finite(num / den);
        }
        case ExprKind::Power:
            return detail::eval_pow(evaluate(e.kids()[0], ctx), e.exponent());
        case ExprKind::Sqrt: {
            double v = evaluate(e.kids()[0], ctx);
            if (v < 0.0) throw DomainPointError("square root of a negative value");
            return std::sqrt(v);
        }
    }
    throw Error("corrupt expression node");
}

// ---------------------------------------------------------------------------
// Compiled form: postfix program with slot-indexed symbols, for hot loops
// (trajectory integration, pointwise pipelines).
// ---------------------------------------------------------------------------

class CompiledExpr {
  public:
    CompiledExpr() = default;

    /// slots maps symbol name -> index into the evaluation vector.
    CompiledExpr(const ScalarExpr& e, const std::map<std::string, int>& slots) {
        compile(e, slots);
    }

    double operator()(const std::vector<double>& slot_values) const {
        stack_.clear();
        for (const auto& in : prog_) {
            switch (in.op) {
                case Op::PushConst: stack_.push_back(in.value); break;
                case Op::PushSlot: stack_.push_back(slot_values[in.slot]); break;
                case Op::Neg: stack_.back() = -stack_.back(); break;
                case Op::AddN: {
                    double s = 0;
                    for (int i = 0; i < in.slot; ++i) { s += stack_.back(); stack_.pop_back(); }
                    stack_.push_back(s);
                    break;
                }
                case Op::MulN: {
                    double p = 1;
                    for (int i = 0; i < in.slot; ++i) { p *= stack_.back(); stack_.pop_back(); }
                    stack_.push_back(p);
                    break;
                }
                case Op::Div: {
                    double den = stack_.back(); stack_.pop_back();
                    if (den == 0.0) throw DomainPointError("division by zero");
                    stack_.back() = detail::check_finite(stack_.back() / den);
                    break;
                }
                case Op::PowRat: {
                    double b = stack_.back();
                    if (b < 0.0 && !in.integral)
                        throw DomainPointError("negative base with fractional exponent");
                    if (b == 0.0 && in.value < 0)
                        throw DomainPointError("zero base with negative exponent");
                    stack_.back() = detail::check_finite(std::pow(b, in.value));
                    break;
                }
                case Op::Sqrt: {
                    if (stack_.back() < 0.0)
                        throw DomainPointError("square root of a negative value");
                    stack_.back() = std::sqrt(stack_.back());
                    break;
                }
            }
        }
        return detail::check_finite(stack_.back());
    }

  private:
    enum class Op : std::uint8_t { PushConst, PushSlot, Neg, AddN, MulN, Div, PowRat, Sqrt };
    struct Instr {
        Op op;
        int slot = 0;          // slot index or arity
        double value = 0.0;    // constant or exponent
        bool integral = false; // exponent integrality for PowRat
    };

    void compile(const ScalarExpr& e, const std::map<std::string, int>& slots) {
        using boost::multiprecision::denominator;
        switch (e.kind()) {
            case ExprKind::Constant:
                prog_.push_back({Op::PushConst, 0, to_double(e.constant()), false});
                return;
            case ExprKind::Symbol: {
                auto it = slots.find(e.symbol());
                if (it == slots.end()) throw UnknownNameError(e.symbol());
                prog_.push_back({Op::PushSlot, it->second, 0.0, false});
                return;
            }
            case ExprKind::Negate:
                compile(e.kids()[0], slots);
                prog_.push_back({Op::Neg, 0, 0.0, false});
                return;
            case ExprKind::Sum:
            case ExprKind::Product: {
                for (const auto& k : e.kids()) compile(k, slots);
                prog_.push_back({e.kind() == ExprKind::Sum ? Op::AddN : Op::MulN,
                                 static_cast<int>(e.kids().size()), 0.0, false});
                return;
            }
            case ExprKind::Quotient:
                compile(e.kids()[0], slots);
                compile(e.kids()[1], slots);
                prog_.push_back({Op::Div, 0, 0.0, false});
                return;
            case ExprKind::Power:
                compile(e.kids()[0], slots);
                prog_.push_back({Op::PowRat, 0, to_double(e.exponent()),
                                 denominator(e.exponent()) == 1});
                return;
            case ExprKind::Sqrt:
                compile(e.kids()[0], slots);
                prog_.push_back({Op::Sqrt, 0, 0.0, false});
                return;
        }
    }

    std::vector<Instr> prog_;
    mutable std::vector<double> stack_;
};

// ---------------------------------------------------------------------------
// Differentiation
// ---------------------------------------------------------------------------

inline ScalarExpr differentiate(const ScalarExpr& e, const std::string& coord) {
    switch (e.kind()) {
        case ExprKind::Constant: return constant(0);
        case ExprKind::Symbol: return constant(e.symbol() == coord ? 1 : 0);
        case ExprKind::Negate: return negate(differentiate(e.kids()[0], coord));
        case ExprKind::Sum: {
            std::vector<ScalarExpr> ts;
            for (const auto& k : e.kids()) ts.push_back(differentiate(k, coord));
            return sum(std::move(ts));
        }
        case ExprKind::Product: {
            std::vector<ScalarExpr> ts;
            for (std::size_t i = 0; i < e.kids().size(); ++i) {
                std::vector<ScalarExpr> fs;
                for (std::size_t j = 0; j < e.kids().size(); ++j)
                    fs.push_back(j == i ? differentiate(e.kids()[j], coord) : e.kids()[j]);
                ts.push_back(product(std::move(fs)));
            }
            return sum(std::move(ts));
        }
        case ExprKind::Quotient: {
            const auto& a = e.kids()[0];
            const auto& b = e.kids()[1];
            ScalarExpr da = differentiate(a, coord), db = differentiate(b, coord);
            return quotient(sum(product(da, b), negate(product(a, db))), product(b, b));
        }
        case ExprKind::Power: {
            const auto& u = e.kids()[0];
            ScalarExpr du = differentiate(u, coord);
            return product({constant(e.exponent()), power(u, e.exponent() - 1), du});
        }
        case ExprKind::Sqrt: {
            const auto& u = e.kids()[0];
            return quotient(differentiate(u, coord), product(constant(2), sqrt_of(u)));
        }
    }
    throw Error("corrupt expression node");
}

// ---------------------------------------------------------------------------
// Symbol collection / bind-time validation
// ---------------------------------------------------------------------------

inline void collect_symbols(const ScalarExpr& e, std::set<std::string>& out) {
    if (e.kind() == ExprKind::Symbol) out.insert(e.symbol());
    if (e.kind() == ExprKind::Constant) return;
    for (const auto& k : e.kids()) collect_symbols(k, out);
}

inline std::set<std::string> free_symbols(const ScalarExpr& e) {
    std::set<std::string> s;
    collect_symbols(e, s);
    return s;
}

inline void validate_symbols(const ScalarExpr& e, const std::set<std::string>& declared) {
    for (const auto& s : free_symbols(e))
        if (!declared.count(s)) throw UnknownNameError(s);
}

// ---------------------------------------------------------------------------
// Printing (round-trippable through the parser)
// ---------------------------------------------------------------------------

namespace detail {
// precedence: 0 sum, 1 product/quotient, 2 unary minus, 3 power, 4 atom
inline void print_rec(const ScalarExpr& e, std::ostream& os, int parent_prec);

inline void print_paren(const ScalarExpr& e, std::ostream& os, int prec, int parent) {
    if (prec < parent) {
        os << '(';
        print_rec(e, os, 0);
        os << ')';
    } else {
        print_rec(e, os, parent);
    }
}

inline void print_rational(const Rational& r, std::ostream& os) {
    using boost::multiprecision::denominator;
    using boost::multiprecision::numerator;
    os << numerator(r).str();
    if (denominator(r) != 1) os << '/' << denominator(r).str();
}

inline void print_rec(const ScalarExpr& e, std::ostream& os, int parent_prec) {
    switch (e.kind()) {
        case ExprKind::Constant: {
            const bool neg = e.constant() < 0;
            const bool frac = boost::multiprecision::denominator(e.constant()) != 1;
            if ((neg && parent_prec > 0) || (frac && parent_prec > 1)) {
                os << '(';
                print_rational(e.constant(), os);
                os << ')';
            } else {
                print_rational(e.constant(), os);
            }
            return;
        }
        case ExprKind::Symbol: os << e.symbol(); return;
        case ExprKind::Negate:
            if (parent_prec > 2) {
                os << "(-";
                print_paren(e.kids()[0], os, 2, 2);
                os << ')';
            } else {
                os << '-';
                print_paren(e.kids()[0], os, 2, 2);
            }
            return;
        case ExprKind::Sum: {
            if (parent_prec > 0) os << '(';
            bool first = true;
            for (const auto& k : e.kids()) {
                if (!first && k.kind() == ExprKind::Negate) {
                    os << " - ";
                    print_paren(k.kids()[0], os, 2, 2);
                } else if (!first && k.is_constant() && k.constant() < 0) {
                    os << " - ";
                    print_rational(-k.constant(), os);
                } else {
                    if (!first) os << " + ";
                    print_rec(k, os, first ? (parent_prec > 0 ? 0 : parent_prec) : 1);
                }
                first = false;
            }
            if (parent_prec > 0) os << ')';
            return;
        }
        case ExprKind::Product: {
            if (parent_prec > 1) os << '(';
            bool first = true;
            for (const auto& k : e.kids()) {
                if (!first) os << '*';
                print_paren(k, os, first && parent_prec <= 1 ? 1 : 2, 2);
                first = false;
            }
            if (parent_prec > 1) os << ')';
            return;
        }
        case ExprKind::Quotient:
            if (parent_prec > 1) os << '(';
            print_paren(e.kids()[0], os, 1, 2);
            os << '/';
            print_paren(e.kids()[1], os, 3, 3);
            if (parent_prec > 1) os << ')';
            return;
        case ExprKind::Power: {
            print_paren(e.kids()[0], os, 3, 4);
            os << '^';
            const bool simple =
                boost::multiprecision::denominator(e.exponent()) == 1 && e.exponent() >= 0;
            if (simple) {
                print_rational(e.exponent(), os);
            } else {
                os << '(';
                print_rational(e.exponent(), os);
                os << ')';
            }
            return;
        }
        case ExprKind::Sqrt:
            os << "sqrt(";
            print_rec(e.kids()[0], os, 0);
            os << ')';
            return;
    }
}
}  // namespace detail

inline std::string to_string(const ScalarExpr& e) {
    std::ostringstream os;
    detail::print_rec(e, os, 0);
    return os.str();
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {
class Parser {
  public:
    explicit Parser(std::string_view text) : text_(text) {}

    ScalarExpr parse() {
        ScalarExpr e = parse_sum();
        skip_ws();
        if (pos_ != text_.size()) throw SyntaxError("unexpected trailing input", pos_);
        return e;
    }

  private:
    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    }

    bool eat(char c) {
        skip_ws();
        if (pos_ < text_.size() && text_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }

    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }

    ScalarExpr parse_sum() {
        ScalarExpr e = parse_term();
        for (;;) {
            if (eat('+')) e = sum(e, parse_term());
            else if (eat('-')) e = sum(e, negate(parse_term()));
            else return e;
        }
    }

    ScalarExpr parse_term() {
        ScalarExpr e = parse_factor();
        for (;;) {
            if (eat('*')) e = product(e, parse_factor());
            else if (eat('/')) e = quotient(e, parse_factor());
            else return e;
        }
    }

    ScalarExpr parse_factor() {
        if (eat('-')) return negate(parse_factor());
        ScalarExpr base = parse_primary();
        skip_ws();
        if (eat('^')) return power(base, parse_exponent());
        return base;
    }

    Rational parse_exponent() {
        skip_ws();
        if (eat('(')) {
            bool neg = eat('-');
            BigInt num = parse_integer();
            BigInt den = 1;
            if (eat('/')) den = parse_integer();
            if (!eat(')')) throw SyntaxError("expected ')' in exponent", pos_);
            if (den == 0) throw SyntaxError("zero denominator in exponent", pos_);
            Rational r(num, den);
            return neg ? -r : r;
        }
        bool neg = eat('-');
        Rational r(parse_integer());
        return neg ? -r : r;
    }

    BigInt parse_integer() {
        skip_ws();
        std::size_t start = pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        if (pos_ == start) throw SyntaxError("expected integer", pos_);
        return BigInt(std::string(text_.substr(start, pos_ - start)));
    }

    ScalarExpr parse_primary() {
        skip_ws();
        if (pos_ >= text_.size()) throw SyntaxError("unexpected end of input", pos_);
        char c = text_[pos_];
        if (c == '(') {
            ++pos_;
            ScalarExpr e = parse_sum();
            if (!eat(')')) throw SyntaxError("expected ')'", pos_);
            return e;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
        throw SyntaxError(std::string("unexpected character '") + c + "'", pos_);
    }

    ScalarExpr parse_number() {
        std::size_t start = pos_;
        while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
        BigInt ipart = pos_ > start ? BigInt(std::string(text_.substr(start, pos_ - start))) : BigInt(0);
        Rational value(ipart);
        if (pos_ < text_.size() && text_[pos_] == '.') {
            ++pos_;
            std::size_t fstart = pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            if (fstart == pos_ && start + 1 == pos_)
                throw SyntaxError("expected digits", pos_);
            BigInt scale = 1;
            for (std::size_t i = fstart; i < pos_; ++i) scale *= 10;
            BigInt frac = fstart < pos_ ? BigInt(std::string(text_.substr(fstart, pos_ - fstart))) : BigInt(0);
            value += Rational(frac, scale);
        }
        return constant(value);
    }

    ScalarExpr parse_ident() {
        std::size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum(static_cast<unsigned char>(text_[pos_])) || text_[pos_] == '_'))
            ++pos_;
        std::string name(text_.substr(start, pos_ - start));
        if (peek() == '(') {
            if (name != "sqrt") throw UnknownFunctionError(name, start);
            eat('(');
            ScalarExpr arg = parse_sum();
            if (!eat(')')) throw SyntaxError("expected ')'", pos_);
            return sqrt_of(arg);
        }
        return symbol(std::move(name));
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};
}  // namespace detail

inline ScalarExpr parse_expression(std::string_view text) {
    return detail::Parser(text).parse();
}

// ---------------------------------------------------------------------------
// Probabilistic equality
// ---------------------------------------------------------------------------

using Rng = std::mt19937_64;

/// Policy shared by all probabilistic identity checks: uniform samples in
/// [-2,2] per variable, up to 10x resampling on domain-point errors.
struct SampleBox {
    double lo = -2.0;
    double hi = 2.0;
    int max_resample_factor = 10;
};

namespace detail {
template <class Fn>
double sample_valid(Fn&& fn, const std::set<std::string>& vars, Rng& rng,
                    const SampleBox& box, EvalContext* ctx_out = nullptr) {
    std::uniform_real_distribution<double> dist(box.lo, box.hi);
    for (int attempt = 0; attempt < box.max_resample_factor; ++attempt) {
        EvalContext ctx;
        for (const auto& v : vars) ctx.values[v] = dist(rng);
        try {
            double r = fn(ctx);
            if (ctx_out) *ctx_out = ctx;
            return r;
        } catch (const DomainPointError&) {
            continue;
        }
    }
    throw ExhaustedSamplingError();
}
}  // namespace detail

inline bool probabilistic_equal(const ScalarExpr& a, const ScalarExpr& b, int trials,
                                double tol, Rng& rng, const SampleBox& box = {}) {
    std::set<std::string> vars = free_symbols(a);
    collect_symbols(b, vars);
    for (int t = 0; t < trials; ++t) {
        double va = 0, vb = 0;
        detail::sample_valid(
            [&](const EvalContext& ctx) {
                va = evaluate(a, ctx);
                vb = evaluate(b, ctx);
                return 0.0;
            },
            vars, rng, box);
        if (std::abs(va - vb) > tol * (1.0 + std::max(std::abs(va), std::abs(vb))))
            return false;
    }
    return true;
}

inline bool probabilistically_zero(const ScalarExpr& a, int trials, double tol, Rng& rng,
                                   const SampleBox& box = {}) {
    return probabilistic_equal(a, constant(0), trials, tol, rng, box);
}

// ---------------------------------------------------------------------------
// Polynomial view (used by the exactness test in classify_field)
// ---------------------------------------------------------------------------

/// Multivariate polynomial as exponent-vector -> rational coefficient.
/// Conversion fails (returns nullopt semantics via bool) on any non-polynomial
/// construct: fractional powers, sqrt of non-constants, division by symbols.
struct Polynomial {
    std::vector<std::string> vars;                 // fixed variable order
    std::map<std::vector<int>, Rational> terms;    // exponent tuple -> coeff

    static bool convert(const ScalarExpr& e, const std::vector<std::string>& vars,
                        Polynomial& out) {
        out.vars = vars;
        out.terms.clear();
        return convert_rec(e, out);
    }

    ScalarExpr to_expr() const {
        std::vector<ScalarExpr> ts;
        for (const auto& [mono, c] : terms) {
            std::vector<ScalarExpr> fs{constant(c)};
            for (std::size_t i = 0; i < vars.size(); ++i)
                if (mono[i] != 0) fs.push_back(power(symbol(vars[i]), Rational(mono[i])));
            ts.push_back(product(std::move(fs)));
        }
        return sum(std::move(ts));
    }

  private:
    void add_term(std::vector<int> mono, const Rational& c) {
        if (c == 0) return;
        auto [it, fresh] = terms.emplace(std::move(mono), c);
        if (!fresh) {
            it->second += c;
            if (it->second == 0) terms.erase(it);
        }
    }

    static bool convert_rec(const ScalarExpr& e, Polynomial& out) {
        switch (e.kind()) {
            case ExprKind::Constant:
                out.add_term(std::vector<int>(out.vars.size(), 0), e.constant());
                return true;
            case ExprKind::Symbol: {
                auto it = std::find(out.vars.begin(), out.vars.end(), e.symbol());
                std::vector<int> mono(out.vars.size(), 0);
                if (it == out.vars.end()) return false;
                mono[static_cast<std::size_t>(it - out.vars.begin())] = 1;
                out.add_term(std::move(mono), 1);
                return true;
            }
            case ExprKind::Negate: {
                Polynomial inner;
                if (!convert(e.kids()[0], out.vars, inner)) return false;
                for (auto& [m, c] : inner.terms) out.add_term(m, -c);
                return true;
            }
            case ExprKind::Sum: {
                for (const auto& k : e.kids()) {
                    Polynomial inner;
                    if (!convert(k, out.vars, inner)) return false;
                    for (auto& [m, c] : inner.terms) out.add_term(m, c);
                }
                return true;
            }
            case ExprKind::Product: {
                Polynomial acc;
                acc.vars = out.vars;
                acc.add_term(std::vector<int>(out.vars.size(), 0), 1);
                for (const auto& k : e.kids()) {
                    Polynomial inner;
                    if (!convert(k, out.vars, inner)) return false;
                    acc = multiply(acc, inner);
                }
                for (auto& [m, c] : acc.terms) out.add_term(m, c);
                return true;
            }
            case ExprKind::Quotient: {
                Polynomial num, den;
                if (!convert(e.kids()[0], out.vars, num)) return false;
                if (!convert(e.kids()[1], out.vars, den)) return false;
                // only division by a nonzero constant stays polynomial
                if (den.terms.size() != 1) return false;
                auto it = den.terms.begin();
                for (int x : it->first)
                    if (x != 0) return false;
                if (it->second == 0) return false;
                for (auto& [m, c] : num.terms) out.add_term(m, c / it->second);
                return true;
            }
            case ExprKind::Power: {
                using boost::multiprecision::denominator;
                using boost::multiprecision::numerator;
                if (denominator(e.exponent()) != 1 || e.exponent() < 0) return false;
                long n = static_cast<long>(numerator(e.exponent()));
                Polynomial base;
                if (!convert(e.kids()[0], out.vars, base)) return false;
                Polynomial acc;
                acc.vars = out.vars;
                acc.add_term(std::vector<int>(out.vars.size(), 0), 1);
                for (long i = 0; i < n; ++i) acc = multiply(acc, base);
                for (auto& [m, c] : acc.terms) out.add_term(m, c);
                return true;
            }
            case ExprKind::Sqrt:
                return false;
        }
        return false;
    }

    static Polynomial multiply(const Polynomial& a, const Polynomial& b) {
        Polynomial r;
        r.vars = a.vars;
        for (const auto& [ma, ca] : a.terms)
            for (const auto& [mb, cb] : b.terms) {
                std::vector<int> m(ma.size());
                for (std::size_t i = 0; i < m.size(); ++i) m[i] = ma[i] + mb[i];
                r.add_term(std::move(m), ca * cb);
            }
        return r;
    }
};

}  // namespace phasesym
