#pragma once

#include "revsde/expr/ast.hpp"

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstring>
#include <span>

namespace revsde::expr {

// ---------------------------------------------------------------------------
// Scalar types for forward-mode differentiation.
//
// DualN<N>   value + N partials, fixed size, allocation-free (hot loops)
// DynDual    value + dynamic gradient
// Taylor2    value + dynamic gradient + dense Hessian
// ---------------------------------------------------------------------------

template <int N>
struct DualN {
    double v = 0.0;
    std::array<double, N> g{};

    static DualN constant(double c) {
        DualN r;
        r.v = c;
        return r;
    }
    static DualN variable(double x, int i) {
        DualN r;
        r.v = x;
        r.g[static_cast<std::size_t>(i)] = 1.0;
        return r;
    }
};

template <int N>
inline DualN<N> operator+(const DualN<N>& a, const DualN<N>& b) {
    DualN<N> r;
    r.v = a.v + b.v;
    for (int i = 0; i < N; ++i) r.g[i] = a.g[i] + b.g[i];
    return r;
}
template <int N>
inline DualN<N> operator-(const DualN<N>& a, const DualN<N>& b) {
    DualN<N> r;
    r.v = a.v - b.v;
    for (int i = 0; i < N; ++i) r.g[i] = a.g[i] - b.g[i];
    return r;
}
template <int N>
inline DualN<N> operator-(const DualN<N>& a) {
    DualN<N> r;
    r.v = -a.v;
    for (int i = 0; i < N; ++i) r.g[i] = -a.g[i];
    return r;
}
template <int N>
inline DualN<N> operator*(const DualN<N>& a, const DualN<N>& b) {
    DualN<N> r;
    r.v = a.v * b.v;
    for (int i = 0; i < N; ++i) r.g[i] = a.g[i] * b.v + a.v * b.g[i];
    return r;
}
template <int N>
inline DualN<N> operator/(const DualN<N>& a, const DualN<N>& b) {
    DualN<N> r;
    const double inv = 1.0 / b.v;
    r.v = a.v * inv;
    for (int i = 0; i < N; ++i) r.g[i] = (a.g[i] - r.v * b.g[i]) * inv;
    return r;
}

template <int N>
inline DualN<N> chain(const DualN<N>& u, double f, double fp) {
    DualN<N> r;
    r.v = f;
    for (int i = 0; i < N; ++i) r.g[i] = fp * u.g[i];
    return r;
}

template <int N> inline DualN<N> sin(const DualN<N>& u) { return chain(u, std::sin(u.v), std::cos(u.v)); }
template <int N> inline DualN<N> cos(const DualN<N>& u) { return chain(u, std::cos(u.v), -std::sin(u.v)); }
template <int N> inline DualN<N> exp(const DualN<N>& u) {
    const double e = std::exp(u.v);
    return chain(u, e, e);
}
template <int N> inline DualN<N> log(const DualN<N>& u) { return chain(u, std::log(u.v), 1.0 / u.v); }
template <int N> inline DualN<N> tanh(const DualN<N>& u) {
    const double t = std::tanh(u.v);
    return chain(u, t, 1.0 - t * t);
}
template <int N> inline DualN<N> sqrt(const DualN<N>& u) {
    const double s = std::sqrt(u.v);
    return chain(u, s, 0.5 / s);
}
template <int N> inline DualN<N> abs(const DualN<N>& u) {
    const double s = u.v > 0.0 ? 1.0 : (u.v < 0.0 ? -1.0 : 0.0);
    return chain(u, std::abs(u.v), s);
}
template <int N> inline DualN<N> pow_const(const DualN<N>& u, double e) {
    return chain(u, std::pow(u.v, e), e * std::pow(u.v, e - 1.0));
}

struct DynDual {
    double v = 0.0;
    Eigen::VectorXd g;

    static DynDual constant(double c, int dim) { return {c, Eigen::VectorXd::Zero(dim)}; }
    static DynDual variable(double x, int i, int dim) {
        DynDual r{x, Eigen::VectorXd::Zero(dim)};
        r.g[i] = 1.0;
        return r;
    }
};

inline DynDual operator+(const DynDual& a, const DynDual& b) { return {a.v + b.v, a.g + b.g}; }
inline DynDual operator-(const DynDual& a, const DynDual& b) { return {a.v - b.v, a.g - b.g}; }
inline DynDual operator-(const DynDual& a) { return {-a.v, -a.g}; }
inline DynDual operator*(const DynDual& a, const DynDual& b) {
    return {a.v * b.v, a.g * b.v + b.g * a.v};
}
inline DynDual operator/(const DynDual& a, const DynDual& b) {
    const double inv = 1.0 / b.v;
    const double v = a.v * inv;
    return {v, (a.g - v * b.g) * inv};
}
inline DynDual chain(const DynDual& u, double f, double fp) { return {f, fp * u.g}; }
inline DynDual sin(const DynDual& u) { return chain(u, std::sin(u.v), std::cos(u.v)); }
inline DynDual cos(const DynDual& u) { return chain(u, std::cos(u.v), -std::sin(u.v)); }
inline DynDual exp(const DynDual& u) {
    const double e = std::exp(u.v);
    return chain(u, e, e);
}
inline DynDual log(const DynDual& u) { return chain(u, std::log(u.v), 1.0 / u.v); }
inline DynDual tanh(const DynDual& u) {
    const double t = std::tanh(u.v);
    return chain(u, t, 1.0 - t * t);
}
inline DynDual sqrt(const DynDual& u) {
    const double s = std::sqrt(u.v);
    return chain(u, s, 0.5 / s);
}
inline DynDual abs(const DynDual& u) {
    const double s = u.v > 0.0 ? 1.0 : (u.v < 0.0 ? -1.0 : 0.0);
    return chain(u, std::abs(u.v), s);
}
inline DynDual pow_const(const DynDual& u, double e) {
    return chain(u, std::pow(u.v, e), e * std::pow(u.v, e - 1.0));
}

// Second-order forward value: carries an exact dense Hessian.
struct Taylor2 {
    double v = 0.0;
    Eigen::VectorXd g;
    Eigen::MatrixXd h;

    static Taylor2 constant(double c, int dim) {
        return {c, Eigen::VectorXd::Zero(dim), Eigen::MatrixXd::Zero(dim, dim)};
    }
    static Taylor2 variable(double x, int i, int dim) {
        Taylor2 r = constant(x, dim);
        r.v = x;
        r.g[i] = 1.0;
        return r;
    }
};

inline Taylor2 operator+(const Taylor2& a, const Taylor2& b) { return {a.v + b.v, a.g + b.g, a.h + b.h}; }
inline Taylor2 operator-(const Taylor2& a, const Taylor2& b) { return {a.v - b.v, a.g - b.g, a.h - b.h}; }
inline Taylor2 operator-(const Taylor2& a) { return {-a.v, -a.g, -a.h}; }
inline Taylor2 operator*(const Taylor2& a, const Taylor2& b) {
    Eigen::MatrixXd cross = a.g * b.g.transpose();
    return {a.v * b.v, a.g * b.v + b.g * a.v, a.h * b.v + b.h * a.v + cross + cross.transpose()};
}
inline Taylor2 chain(const Taylor2& u, double f, double fp, double fpp) {
    return {f, fp * u.g, fp * u.h + fpp * (u.g * u.g.transpose())};
}
inline Taylor2 operator/(const Taylor2& a, const Taylor2& b) {
    const double inv = 1.0 / b.v;
    return a * chain(b, inv, -inv * inv, 2.0 * inv * inv * inv);
}
inline Taylor2 sin(const Taylor2& u) {
    const double s = std::sin(u.v);
    return chain(u, s, std::cos(u.v), -s);
}
inline Taylor2 cos(const Taylor2& u) {
    const double c = std::cos(u.v);
    return chain(u, c, -std::sin(u.v), -c);
}
inline Taylor2 exp(const Taylor2& u) {
    const double e = std::exp(u.v);
    return chain(u, e, e, e);
}
inline Taylor2 log(const Taylor2& u) {
    const double inv = 1.0 / u.v;
    return chain(u, std::log(u.v), inv, -inv * inv);
}
inline Taylor2 tanh(const Taylor2& u) {
    const double t = std::tanh(u.v);
    const double sech2 = 1.0 - t * t;
    return chain(u, t, sech2, -2.0 * t * sech2);
}
inline Taylor2 sqrt(const Taylor2& u) {
    const double s = std::sqrt(u.v);
    return chain(u, s, 0.5 / s, -0.25 / (s * s * s));
}
inline Taylor2 abs(const Taylor2& u) {
    const double s = u.v > 0.0 ? 1.0 : (u.v < 0.0 ? -1.0 : 0.0);
    return chain(u, std::abs(u.v), s, 0.0);
}
inline Taylor2 pow_const(const Taylor2& u, double e) {
    return chain(u, std::pow(u.v, e), e * std::pow(u.v, e - 1.0),
                 e * (e - 1.0) * std::pow(u.v, e - 2.0));
}

inline double pow_const(double u, double e) { return std::pow(u, e); }

// ---------------------------------------------------------------------------
// Generic checked tree evaluator
// ---------------------------------------------------------------------------

namespace detail {

template <class T> struct ScalarCtor;

template <> struct ScalarCtor<double> {
    static constexpr int order = 0;
    static double constant(double c, int) { return c; }
    static double variable(double x, int, int) { return x; }
    static double value(double s) { return s; }
};
template <int N> struct ScalarCtor<DualN<N>> {
    static constexpr int order = 1;
    static DualN<N> constant(double c, int) { return DualN<N>::constant(c); }
    static DualN<N> variable(double x, int i, int) { return DualN<N>::variable(x, i); }
    static double value(const DualN<N>& s) { return s.v; }
};
template <> struct ScalarCtor<DynDual> {
    static constexpr int order = 1;
    static DynDual constant(double c, int dim) { return DynDual::constant(c, dim); }
    static DynDual variable(double x, int i, int dim) { return DynDual::variable(x, i, dim); }
    static double value(const DynDual& s) { return s.v; }
};
template <> struct ScalarCtor<Taylor2> {
    static constexpr int order = 2;
    static Taylor2 constant(double c, int dim) { return Taylor2::constant(c, dim); }
    static Taylor2 variable(double x, int i, int dim) { return Taylor2::variable(x, i, dim); }
    static double value(const Taylor2& s) { return s.v; }
};

inline bool is_integer(double e) { return e == std::floor(e); }

template <class T>
T eval_node(const ExpressionAst& ast, int idx, const T* xs) {
    using C = ScalarCtor<T>;
    using std::abs;
    using std::cos;
    using std::exp;
    using std::log;
    using std::sin;
    using std::sqrt;
    using std::tanh;

    const Node& n = ast.node(idx);
    switch (n.kind) {
        case NodeKind::Constant: return C::constant(n.imm, ast.dim());
        case NodeKind::Variable: return xs[n.a];
        case NodeKind::Neg: return -eval_node(ast, n.a, xs);
        case NodeKind::Add: return eval_node(ast, n.a, xs) + eval_node(ast, n.b, xs);
        case NodeKind::Sub: return eval_node(ast, n.a, xs) - eval_node(ast, n.b, xs);
        case NodeKind::Mul: return eval_node(ast, n.a, xs) * eval_node(ast, n.b, xs);
        case NodeKind::Div: {
            T num = eval_node(ast, n.a, xs);
            T den = eval_node(ast, n.b, xs);
            if (C::value(den) == 0.0) throw DomainError("division by zero");
            return num / den;
        }
        case NodeKind::PowConst: {
            T base = eval_node(ast, n.a, xs);
            const double v = C::value(base);
            const double e = n.imm;
            if (v < 0.0 && !is_integer(e)) throw DomainError("negative base with non-integer exponent");
            if (v == 0.0 && e < 0.0) throw DomainError("zero base with negative exponent");
            if constexpr (C::order >= 1) {
                if (v == 0.0 && e < 1.0 && e != 0.0)
                    throw DomainError("power derivative singular at zero base");
            }
            return pow_const(base, e);
        }
        case NodeKind::Call: {
            T arg = eval_node(ast, n.a, xs);
            const double v = C::value(arg);
            switch (n.fn) {
                case Func::Sin: return sin(arg);
                case Func::Cos: return cos(arg);
                case Func::Exp: return exp(arg);
                case Func::Log:
                    if (v <= 0.0) throw DomainError("log of non-positive value");
                    return log(arg);
                case Func::Tanh: return tanh(arg);
                case Func::Sqrt:
                    if (v < 0.0) throw DomainError("sqrt of negative value");
                    if constexpr (C::order >= 1) {
                        if (v == 0.0) throw DomainError("sqrt derivative singular at zero");
                    }
                    return sqrt(arg);
                case Func::Abs: return abs(arg);
            }
            throw DomainError("unknown function");
        }
    }
    throw DomainError("corrupt expression node");
}

}  // namespace detail

template <class T>
T evaluate(const ExpressionAst& ast, std::span<const T> point) {
    return detail::eval_node<T>(ast, ast.root(), point.data());
}

// Allocation-free linear evaluation over the node arena (children always
// precede parents). No domain checks: faults propagate as NaN/Inf and are
// caught by the integrator's finiteness guard. `scratch` must hold
// ast.nodes().size() values.
template <class T>
T evaluate_unchecked(const ExpressionAst& ast, const T* xs, T* scratch) {
    using std::abs;
    using std::cos;
    using std::exp;
    using std::log;
    using std::sin;
    using std::sqrt;
    using std::tanh;

    const auto& nodes = ast.nodes();
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        const Node& n = nodes[i];
        switch (n.kind) {
            case NodeKind::Constant:
                scratch[i] = detail::ScalarCtor<T>::constant(n.imm, ast.dim());
                break;
            case NodeKind::Variable: scratch[i] = xs[n.a]; break;
            case NodeKind::Neg: scratch[i] = -scratch[n.a]; break;
            case NodeKind::Add: scratch[i] = scratch[n.a] + scratch[n.b]; break;
            case NodeKind::Sub: scratch[i] = scratch[n.a] - scratch[n.b]; break;
            case NodeKind::Mul: scratch[i] = scratch[n.a] * scratch[n.b]; break;
            case NodeKind::Div: scratch[i] = scratch[n.a] / scratch[n.b]; break;
            case NodeKind::PowConst: scratch[i] = pow_const(scratch[n.a], n.imm); break;
            case NodeKind::Call:
                switch (n.fn) {
                    case Func::Sin: scratch[i] = sin(scratch[n.a]); break;
                    case Func::Cos: scratch[i] = cos(scratch[n.a]); break;
                    case Func::Exp: scratch[i] = exp(scratch[n.a]); break;
                    case Func::Log: scratch[i] = log(scratch[n.a]); break;
                    case Func::Tanh: scratch[i] = tanh(scratch[n.a]); break;
                    case Func::Sqrt: scratch[i] = sqrt(scratch[n.a]); break;
                    case Func::Abs: scratch[i] = abs(scratch[n.a]); break;
                }
                break;
        }
    }
    return scratch[ast.root()];
}

double eval_value(const ExpressionAst& ast, const Eigen::VectorXd& x);
DynDual eval_gradient(const ExpressionAst& ast, const Eigen::VectorXd& x);
Taylor2 eval_taylor2(const ExpressionAst& ast, const Eigen::VectorXd& x);

}  // namespace revsde::expr
