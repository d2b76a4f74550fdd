#include "evpinn/autodiff.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace evpinn {

namespace {

[[noreturn]] void domain_error(const char* what) {
    throw std::domain_error(std::string("autodiff: ") + what);
}

double eval_unary(OpKind op, double x, double aux) {
    switch (op) {
        case OpKind::PowConst:
            return std::pow(x, aux);
        case OpKind::Tanh:
            return std::tanh(x);
        case OpKind::Exp:
            return std::exp(x);
        case OpKind::Ln:
            if (!(x > 0.0)) domain_error("ln of non-positive value");
            return std::log(x);
        case OpKind::Neg:
            return -x;
        case OpKind::Abs:
            return std::abs(x);
        default:
            throw std::logic_error("autodiff: not a unary op");
    }
}

double eval_binary(OpKind op, double x, double y) {
    switch (op) {
        case OpKind::Add:
            return x + y;
        case OpKind::Sub:
            return x - y;
        case OpKind::Mul:
            return x * y;
        case OpKind::Div:
            if (y == 0.0) domain_error("division by zero");
            return x / y;
        default:
            throw std::logic_error("autodiff: not a binary op");
    }
}

}  // namespace

Var Tape::push(OpKind op, std::int32_t a, std::int32_t b, double aux, double value) {
    assert(a < static_cast<std::int32_t>(nodes_.size()));
    assert(b < static_cast<std::int32_t>(nodes_.size()));
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.push_back(Node{op, a, b, aux, value});
    return Var{this, id, value};
}

Var Tape::lift(double value) { return push(OpKind::Leaf, -1, -1, 0.0, value); }

Var Tape::apply(OpKind op, Var x) {
    assert(x.tape == this);
    return push(op, x.id, -1, 0.0, eval_unary(op, x.value, 0.0));
}

Var Tape::apply(OpKind op, Var x, Var y) {
    assert(x.tape == this && y.tape == this);
    return push(op, x.id, y.id, 0.0, eval_binary(op, x.value, y.value));
}

Var Tape::pow_const(Var x, double exponent) {
    assert(x.tape == this);
    return push(OpKind::PowConst, x.id, -1, exponent, std::pow(x.value, exponent));
}

Eigen::VectorXd Tape::replay() const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(nodes_.size()));
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
        const Node& n = nodes_[i];
        switch (n.op) {
            case OpKind::Leaf:
                out[static_cast<Eigen::Index>(i)] = n.value;
                break;
            case OpKind::Add:
            case OpKind::Sub:
            case OpKind::Mul:
            case OpKind::Div:
                out[static_cast<Eigen::Index>(i)] = eval_binary(n.op, out[n.a], out[n.b]);
                break;
            default:
                out[static_cast<Eigen::Index>(i)] = eval_unary(n.op, out[n.a], n.aux);
                break;
        }
    }
    return out;
}

Eigen::VectorXd backward(const Var& output) {
    const Tape& tape = *output.tape;
    const auto& nodes = tape.nodes();
    Eigen::VectorXd adj = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(nodes.size()));
    adj[output.id] = 1.0;

    for (std::int32_t i = output.id; i >= 0; --i) {
        const double g = adj[i];
        if (g == 0.0) continue;
        const Tape::Node& n = nodes[static_cast<std::size_t>(i)];
        switch (n.op) {
            case OpKind::Leaf:
                break;
            case OpKind::Add:
                adj[n.a] += g;
                adj[n.b] += g;
                break;
            case OpKind::Sub:
                adj[n.a] += g;
                adj[n.b] -= g;
                break;
            case OpKind::Mul:
                adj[n.a] += g * nodes[n.b].value;
                adj[n.b] += g * nodes[n.a].value;
                break;
            case OpKind::Div: {
                const double den = nodes[n.b].value;
                adj[n.a] += g / den;
                adj[n.b] -= g * n.value / den;
                break;
            }
            case OpKind::PowConst: {
                const double x = nodes[n.a].value;
                adj[n.a] += g * n.aux * std::pow(x, n.aux - 1.0);
                break;
            }
            case OpKind::Tanh:
                adj[n.a] += g * (1.0 - n.value * n.value);
                break;
            case OpKind::Exp:
                adj[n.a] += g * n.value;
                break;
            case OpKind::Ln:
                adj[n.a] += g / nodes[n.a].value;
                break;
            case OpKind::Neg:
                adj[n.a] -= g;
                break;
            case OpKind::Abs: {
                const double x = nodes[n.a].value;
                // subgradient 0 at x == 0
                adj[n.a] += g * (x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0));
                break;
            }
        }
    }

    if (!adj.allFinite()) {
        throw std::overflow_error("autodiff: non-finite adjoint during backward sweep");
    }
    return adj;
}

Var operator+(Var a, Var b) { return a.tape->apply(OpKind::Add, a, b); }
Var operator-(Var a, Var b) { return a.tape->apply(OpKind::Sub, a, b); }
Var operator*(Var a, Var b) { return a.tape->apply(OpKind::Mul, a, b); }
Var operator/(Var a, Var b) { return a.tape->apply(OpKind::Div, a, b); }
Var operator-(Var a) { return a.tape->apply(OpKind::Neg, a); }
Var operator+(Var a, double b) { return a + a.tape->lift(b); }
Var operator+(double a, Var b) { return b.tape->lift(a) + b; }
Var operator-(Var a, double b) { return a - a.tape->lift(b); }
Var operator-(double a, Var b) { return b.tape->lift(a) - b; }
Var operator*(Var a, double b) { return a * a.tape->lift(b); }
Var operator*(double a, Var b) { return b.tape->lift(a) * b; }
Var operator/(Var a, double b) { return a / a.tape->lift(b); }
Var operator/(double a, Var b) { return b.tape->lift(a) / b; }
Var tanh(Var x) { return x.tape->apply(OpKind::Tanh, x); }
Var exp(Var x) { return x.tape->apply(OpKind::Exp, x); }
Var log(Var x) { return x.tape->apply(OpKind::Ln, x); }
Var abs(Var x) { return x.tape->apply(OpKind::Abs, x); }
Var pow(Var x, double exponent) { return x.tape->pow_const(x, exponent); }
Var square(Var x) { return x.tape->pow_const(x, 2.0); }

double check_gradient(const ExprBuilder& f, const Eigen::VectorXd& at, double h) {
    if (!(h > 0.0)) throw std::invalid_argument("check_gradient: h must be positive");
    const auto n = at.size();

    auto eval = [&](const Eigen::VectorXd& x) {
        Tape tape;
        std::vector<Var> leaves;
        leaves.reserve(static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) leaves.push_back(tape.lift(x[i]));
        return f(tape, leaves).value;
    };

    Tape tape;
    std::vector<Var> leaves;
    leaves.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) leaves.push_back(tape.lift(at[i]));
    const Var y = f(tape, leaves);
    const Eigen::VectorXd adj = backward(y);

    double worst = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd xp = at;
        Eigen::VectorXd xm = at;
        xp[i] += h;
        xm[i] -= h;
        const double fd = (eval(xp) - eval(xm)) / (2.0 * h);
        const double analytic = adj[leaves[static_cast<std::size_t>(i)].id];
        const double err = std::abs(analytic - fd) / std::max(1.0, std::abs(analytic));
        worst = std::max(worst, err);
    }
    return worst;
}

}  // namespace evpinn
