#include "revsde/expr/ast.hpp"

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace revsde::expr {

const char* func_name(Func f) {
    switch (f) {
        case Func::Sin: return "sin";
        case Func::Cos: return "cos";
        case Func::Exp: return "exp";
        case Func::Log: return "log";
        case Func::Tanh: return "tanh";
        case Func::Sqrt: return "sqrt";
        case Func::Abs: return "abs";
    }
    return "?";
}

namespace {

bool lookup_func(std::string_view name, Func& out) {
    static constexpr std::array<std::pair<std::string_view, Func>, 7> table = {{
        {"sin", Func::Sin},
        {"cos", Func::Cos},
        {"exp", Func::Exp},
        {"log", Func::Log},
        {"tanh", Func::Tanh},
        {"sqrt", Func::Sqrt},
        {"abs", Func::Abs},
    }};
    for (const auto& [n, f] : table) {
        if (n == name) {
            out = f;
            return true;
        }
    }
    return false;
}

// Recursive-descent parser. Precedence, tightest first:
//   ^ (constant exponent)  >  unary -  >  * /  >  + -
// All binary operators are left-associative.
class Parser {
  public:
    Parser(std::string_view src, int dim) : src_(src), dim_(dim) {}

    ExpressionAst run() {
        skip_ws();
        if (pos_ >= src_.size()) throw ParseError("empty expression", 0);
        int root = parse_expr();
        skip_ws();
        if (pos_ < src_.size()) throw ParseError("unexpected trailing input", pos_);
        return ExpressionAst(std::move(nodes_), root, dim_);
    }

  private:
    std::string_view src_;
    int dim_;
    std::size_t pos_ = 0;
    std::vector<Node> nodes_;

    int push(Node n) {
        nodes_.push_back(n);
        return static_cast<int>(nodes_.size()) - 1;
    }

    void skip_ws() {
        while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    }

    bool peek_is(char c) {
        skip_ws();
        return pos_ < src_.size() && src_[pos_] == c;
    }

    bool consume(char c) {
        if (peek_is(c)) {
            ++pos_;
            return true;
        }
        return false;
    }

    int parse_expr() {
        int lhs = parse_term();
        for (;;) {
            if (consume('+')) {
                int rhs = parse_term();
                lhs = push({NodeKind::Add, Func::Sin, lhs, rhs, 0.0});
            } else if (peek_is('-')) {
                ++pos_;
                int rhs = parse_term();
                lhs = push({NodeKind::Sub, Func::Sin, lhs, rhs, 0.0});
            } else {
                return lhs;
            }
        }
    }

    int parse_term() {
        int lhs = parse_factor();
        for (;;) {
            if (consume('*')) {
                int rhs = parse_factor();
                lhs = push({NodeKind::Mul, Func::Sin, lhs, rhs, 0.0});
            } else if (consume('/')) {
                int rhs = parse_factor();
                lhs = push({NodeKind::Div, Func::Sin, lhs, rhs, 0.0});
            } else {
                return lhs;
            }
        }
    }

    int parse_factor() {
        skip_ws();
        if (consume('-')) {
            int child = parse_factor();
            // Fold a unary minus on a literal into the constant so that
            // printing and reparsing reproduce the same tree.
            if (nodes_[static_cast<std::size_t>(child)].kind == NodeKind::Constant) {
                nodes_[static_cast<std::size_t>(child)].imm =
                    -nodes_[static_cast<std::size_t>(child)].imm;
                return child;
            }
            return push({NodeKind::Neg, Func::Sin, child, -1, 0.0});
        }
        int base = parse_atom();
        skip_ws();
        if (consume('^')) {
            skip_ws();
            std::size_t at = pos_;
            if (pos_ >= src_.size() || !(std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.'))
                throw ParseError("exponent must be a numeric constant", at);
            double e = parse_number();
            return push({NodeKind::PowConst, Func::Sin, base, -1, e});
        }
        return base;
    }

    int parse_atom() {
        skip_ws();
        if (pos_ >= src_.size()) throw ParseError("expected expression", pos_);
        char c = src_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            double v = parse_number();
            return push({NodeKind::Constant, Func::Sin, -1, -1, v});
        }
        if (c == '(') {
            ++pos_;
            int inner = parse_expr();
            skip_ws();
            if (!consume(')')) throw ParseError("expected ')'", pos_);
            return inner;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') return parse_ident();
        throw ParseError(std::string("unexpected character '") + c + "'", pos_);
    }

    double parse_number() {
        std::size_t start = pos_;
        while (pos_ < src_.size() && (std::isdigit(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '.'))
            ++pos_;
        if (pos_ < src_.size() && (src_[pos_] == 'e' || src_[pos_] == 'E')) {
            std::size_t mark = pos_;
            ++pos_;
            if (pos_ < src_.size() && (src_[pos_] == '+' || src_[pos_] == '-')) ++pos_;
            if (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) {
                while (pos_ < src_.size() && std::isdigit(static_cast<unsigned char>(src_[pos_]))) ++pos_;
            } else {
                pos_ = mark;  // 'e' belongs to a following identifier, not this number
            }
        }
        double value = 0.0;
        auto res = std::from_chars(src_.data() + start, src_.data() + pos_, value);
        if (res.ec != std::errc() || res.ptr != src_.data() + pos_)
            throw ParseError("malformed number", start);
        return value;
    }

    int parse_ident() {
        std::size_t start = pos_;
        while (pos_ < src_.size() &&
               (std::isalnum(static_cast<unsigned char>(src_[pos_])) || src_[pos_] == '_'))
            ++pos_;
        std::string_view name = src_.substr(start, pos_ - start);

        Func fn;
        if (lookup_func(name, fn)) {
            skip_ws();
            if (!consume('(')) throw ParseError("expected '(' after function name", pos_);
            int arg = parse_expr();
            skip_ws();
            if (!consume(')')) throw ParseError("expected ')'", pos_);
            return push({NodeKind::Call, fn, arg, -1, 0.0});
        }

        int index = -1;
        if (name == "x" && dim_ <= 2) {
            index = 0;
        } else if (name == "y" && dim_ == 2) {
            index = 1;
        } else if (name.size() >= 2 && name[0] == 'x') {
            int parsed = 0;
            auto res = std::from_chars(name.data() + 1, name.data() + name.size(), parsed);
            if (res.ec == std::errc() && res.ptr == name.data() + name.size()) {
                if (parsed < 1 || parsed > dim_)
                    throw ParseError("variable '" + std::string(name) + "' exceeds dimension " +
                                         std::to_string(dim_),
                                     start);
                index = parsed - 1;
            }
        }
        if (index < 0) throw ParseError("unknown identifier '" + std::string(name) + "'", start);
        return push({NodeKind::Variable, Func::Sin, index, -1, 0.0});
    }
};

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

int precedence(NodeKind k) {
    switch (k) {
        case NodeKind::Add:
        case NodeKind::Sub: return 1;
        case NodeKind::Mul:
        case NodeKind::Div: return 2;
        case NodeKind::Neg: return 3;
        case NodeKind::PowConst: return 4;
        default: return 5;
    }
}

void print_node(const ExpressionAst& ast, int idx, int min_prec, std::string& out) {
    const Node& n = ast.node(idx);
    const int prec = precedence(n.kind);
    const bool parens = prec < min_prec;
    if (parens) out += '(';
    switch (n.kind) {
        case NodeKind::Constant: {
            if (n.imm < 0.0 && !parens && min_prec > 0) {
                out += '(';
                out += format_double(n.imm);
                out += ')';
            } else {
                out += format_double(n.imm);
            }
            break;
        }
        case NodeKind::Variable:
            if (ast.dim() <= 2)
                out += (n.a == 0 ? "x" : "y");
            else
                out += "x" + std::to_string(n.a + 1);
            break;
        case NodeKind::Neg:
            out += '-';
            print_node(ast, n.a, prec, out);
            break;
        case NodeKind::Add:
        case NodeKind::Sub:
        case NodeKind::Mul:
        case NodeKind::Div:
            print_node(ast, n.a, prec, out);
            out += (n.kind == NodeKind::Add   ? " + "
                    : n.kind == NodeKind::Sub ? " - "
                    : n.kind == NodeKind::Mul ? "*"
                                              : "/");
            print_node(ast, n.b, prec + 1, out);
            break;
        case NodeKind::PowConst:
            print_node(ast, n.a, prec + 1, out);
            out += '^';
            out += format_double(n.imm);
            break;
        case NodeKind::Call:
            out += func_name(n.fn);
            out += '(';
            print_node(ast, n.a, 0, out);
            out += ')';
            break;
    }
    if (parens) out += ')';
}

bool nodes_equal(const ExpressionAst& a, int ia, const ExpressionAst& b, int ib) {
    const Node& na = a.node(ia);
    const Node& nb = b.node(ib);
    if (na.kind != nb.kind) return false;
    switch (na.kind) {
        case NodeKind::Constant: return na.imm == nb.imm;
        case NodeKind::Variable: return na.a == nb.a;
        case NodeKind::Neg: return nodes_equal(a, na.a, b, nb.a);
        case NodeKind::PowConst: return na.imm == nb.imm && nodes_equal(a, na.a, b, nb.a);
        case NodeKind::Call: return na.fn == nb.fn && nodes_equal(a, na.a, b, nb.a);
        default: return nodes_equal(a, na.a, b, nb.a) && nodes_equal(a, na.b, b, nb.b);
    }
}

// Appends `src`'s nodes to `dst`, returning the re-based root index.
int append_tree(std::vector<Node>& dst, const ExpressionAst& src) {
    const int offset = static_cast<int>(dst.size());
    for (const Node& n : src.nodes()) {
        Node m = n;
        if (m.kind != NodeKind::Constant && m.kind != NodeKind::Variable) {
            if (m.a >= 0) m.a += offset;
            if (m.b >= 0) m.b += offset;
        }
        dst.push_back(m);
    }
    return src.root() + offset;
}

}  // namespace

ExpressionAst parse_expression(std::string_view src, int dim) {
    if (dim < 1) throw ParseError("dimension must be positive", 0);
    return Parser(src, dim).run();
}

std::string ExpressionAst::to_string() const {
    std::string out;
    print_node(*this, root_, 0, out);
    return out;
}

bool ExpressionAst::structurally_equal(const ExpressionAst& other) const {
    if (dim_ != other.dim_ || empty() != other.empty()) return false;
    if (empty()) return true;
    return nodes_equal(*this, root_, other, other.root_);
}

ExpressionAst ExpressionAst::constant(double v, int dim) {
    return ExpressionAst({{NodeKind::Constant, Func::Sin, -1, -1, v}}, 0, dim);
}

ExpressionAst ExpressionAst::variable(int index, int dim) {
    return ExpressionAst({{NodeKind::Variable, Func::Sin, index, -1, 0.0}}, 0, dim);
}

ExpressionAst ExpressionAst::add(const ExpressionAst& l, const ExpressionAst& r) {
    std::vector<Node> nodes;
    int a = append_tree(nodes, l);
    int b = append_tree(nodes, r);
    nodes.push_back({NodeKind::Add, Func::Sin, a, b, 0.0});
    const int root = static_cast<int>(nodes.size()) - 1;
    return ExpressionAst(std::move(nodes), root, l.dim());
}

ExpressionAst ExpressionAst::mul(const ExpressionAst& l, const ExpressionAst& r) {
    std::vector<Node> nodes;
    int a = append_tree(nodes, l);
    int b = append_tree(nodes, r);
    nodes.push_back({NodeKind::Mul, Func::Sin, a, b, 0.0});
    const int root = static_cast<int>(nodes.size()) - 1;
    return ExpressionAst(std::move(nodes), root, l.dim());
}

ExpressionAst ExpressionAst::scale(double c, const ExpressionAst& e) {
    return mul(constant(c, e.dim()), e);
}

}  // namespace revsde::expr
