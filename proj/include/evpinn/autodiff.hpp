#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <vector>

namespace evpinn {

class Tape;

/// Handle to a node on a Tape. Cheap to copy; `value` mirrors the cached
/// node value so expressions can be inspected without touching the tape.
struct Var {
    Tape* tape = nullptr;
    std::int32_t id = -1;
    double value = 0.0;
};

enum class OpKind : std::uint8_t {
    Leaf,
    Add,
    Sub,
    Mul,
    Div,
    PowConst,
    Tanh,
    Exp,
    Ln,
    Neg,
    Abs,
};

/// Append-only record of one scalar computation. Reverse-mode gradients are
/// obtained by sweeping the records backwards. Operand indices are always
/// strictly smaller than the node's own index.
class Tape {
public:
    struct Node {
        OpKind op;
        std::int32_t a;  // first operand, -1 for leaves
        std::int32_t b;  // second operand, -1 if unary
        double aux;      // exponent for PowConst, otherwise unused
        double value;    // cached forward value
    };

    Var lift(double value);

    // Unary/binary op application. Throws on domain violations (division by
    // zero, ln of a non-positive value) instead of producing NaN.
    Var apply(OpKind op, Var x);
    Var apply(OpKind op, Var x, Var y);
    Var pow_const(Var x, double exponent);

    std::size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }
    double value(std::int32_t id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    const std::vector<Node>& nodes() const { return nodes_; }

    // Recomputes every node value from its operands; used by tests to verify
    // that replaying the tape reproduces the cached values exactly.
    Eigen::VectorXd replay() const;

private:
    Var push(OpKind op, std::int32_t a, std::int32_t b, double aux, double value);

    std::vector<Node> nodes_;
};

/// Reverse sweep from `output` (seed 1). Returns the adjoint of every node,
/// indexed by node id; leaves unreachable from `output` get 0. Throws if any
/// adjoint overflows to a non-finite value.
Eigen::VectorXd backward(const Var& output);

/// Partial of the swept output with respect to `v`, from a backward() result.
inline double gradient(const Eigen::VectorXd& adjoints, const Var& v) {
    return adjoints[v.id];
}

// Operator sugar over Tape::apply. Mixed Var/double forms lift the constant
// as a leaf on the same tape.
Var operator+(Var a, Var b);
Var operator-(Var a, Var b);
Var operator*(Var a, Var b);
Var operator/(Var a, Var b);
Var operator-(Var a);
Var operator+(Var a, double b);
Var operator+(double a, Var b);
Var operator-(Var a, double b);
Var operator-(double a, Var b);
Var operator*(Var a, double b);
Var operator*(double a, Var b);
Var operator/(Var a, double b);
Var operator/(double a, Var b);
Var tanh(Var x);
Var exp(Var x);
Var log(Var x);
Var abs(Var x);
Var pow(Var x, double exponent);
Var square(Var x);

/// Builds a scalar expression from leaf variables; used with check_gradient.
using ExprBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|),
/// with the analytic gradient from backward() and differences at step h.
double check_gradient(const ExprBuilder& f, const Eigen::VectorXd& at, double h = 1e-5);

}  // namespace evpinn
