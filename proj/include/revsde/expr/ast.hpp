#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace revsde::expr {

// Error raised by the parser; `offset` is the byte position in the source.
struct ParseError : std::runtime_error {
    ParseError(const std::string& msg, std::size_t offset)
        : std::runtime_error(msg + " (at offset " + std::to_string(offset) + ")"),
          offset(offset) {}
    std::size_t offset;
};

// Error raised when an expression is evaluated outside its domain
// (log of a non-positive number, sqrt of a negative, division by zero, ...).
struct DomainError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class NodeKind : unsigned char {
    Constant,  // imm = value
    Variable,  // a = variable index
    Neg,       // a = child
    Add,       // a, b = children
    Sub,
    Mul,
    Div,
    PowConst,  // a = base, imm = constant exponent
    Call,      // a = argument, fn = function id
};

enum class Func : unsigned char { Sin, Cos, Exp, Log, Tanh, Sqrt, Abs };

const char* func_name(Func f);

struct Node {
    NodeKind kind;
    Func fn = Func::Sin;
    int a = -1;
    int b = -1;
    double imm = 0.0;
};

// Immutable arithmetic expression over variables x1..xd (aliases x,y for d<=2).
// Nodes live in a flat arena; `root()` is the index of the top node. Instances
// never mutate after construction, so they are safe to share across threads.
class ExpressionAst {
  public:
    ExpressionAst() = default;
    ExpressionAst(std::vector<Node> nodes, int root, int dim)
        : nodes_(std::move(nodes)), root_(root), dim_(dim) {}

    int dim() const { return dim_; }
    int root() const { return root_; }
    bool empty() const { return nodes_.empty(); }
    const std::vector<Node>& nodes() const { return nodes_; }
    const Node& node(int i) const { return nodes_[static_cast<std::size_t>(i)]; }

    bool is_constant() const { return !empty() && node(root_).kind == NodeKind::Constant; }
    double constant_value() const { return node(root_).imm; }

    // Precedence-aware printer; output reparses to a structurally identical tree.
    std::string to_string() const;

    bool structurally_equal(const ExpressionAst& other) const;

    // Builders (structural composition only; no algebraic simplification beyond
    // folding a unary minus into a numeric literal, mirroring the parser).
    static ExpressionAst constant(double v, int dim);
    static ExpressionAst variable(int index, int dim);
    static ExpressionAst add(const ExpressionAst& l, const ExpressionAst& r);
    static ExpressionAst mul(const ExpressionAst& l, const ExpressionAst& r);
    static ExpressionAst scale(double c, const ExpressionAst& e);

  private:
    std::vector<Node> nodes_;
    int root_ = -1;
    int dim_ = 0;
};

// Recursive-descent parser for the expression grammar (see README).
// Throws ParseError on malformed input, unknown identifiers, variable index
// >= d, or a non-constant exponent.
ExpressionAst parse_expression(std::string_view src, int dim);

}  // namespace revsde::expr
