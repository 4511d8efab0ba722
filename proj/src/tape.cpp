#include "nslam/tape.hpp"

#include <cmath>

namespace nslam {

namespace detail {
Tape*& active_tape() {
    thread_local Tape* t = nullptr;
    return t;
}
}  // namespace detail

double softplus_k_val(double x, double k) {
    double m = x > 0 ? x : 0.0;
    return m + std::log1p(std::exp(-k * std::abs(x))) / k;
}

double sigmoid_k_val(double x, double k) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-k * x));
    double e = std::exp(k * x);
    return e / (1.0 + e);
}

static double eval_node(const TapeNode& n, double va, double vb) {
    switch (n.op) {
        case Op::Const:
        case Op::Param: return n.val;
        case Op::Add: return va + vb;
        case Op::Sub: return va - vb;
        case Op::Mul: return va * vb;
        case Op::Div: return va / vb;
        case Op::Neg: return -va;
        case Op::AddC: return va + n.aux;
        case Op::MulC: return va * n.aux;
        case Op::RsubC: return n.aux - va;
        case Op::DivC: return va / n.aux;
        case Op::RdivC: return n.aux / va;
        case Op::Exp: return std::exp(va);
        case Op::Log: return std::log(va);
        case Op::Sqrt: return std::sqrt(va);
        case Op::Sin: return std::sin(va);
        case Op::Cos: return std::cos(va);
        case Op::Min: return va <= vb ? va : vb;
        case Op::Max: return va >= vb ? va : vb;
        case Op::Abs: return std::abs(va);
        case Op::Recip: return 1.0 / va;
        case Op::PowC: return std::pow(va, n.aux);
        case Op::SoftplusK: return softplus_k_val(va, n.aux);
        case Op::SigmoidK: return sigmoid_k_val(va, n.aux);
    }
    return 0;
}

void Tape::replay() {
    for (auto& n : nodes_) {
        if (n.op == Op::Const || n.op == Op::Param) continue;
        n.val = eval_node(n, nodes_[n.a].val, nodes_[n.b].val);
    }
}

GradientMap backward(const Tape& tape, Value output) {
    if (!output.valid()) throw InvalidOutput("backward: output handle is invalid");
    if (output.id >= tape.nodes_.size()) throw UnknownNode("backward: output node is not on this tape");

    const auto& nodes = tape.nodes_;
    std::vector<double> adj(nodes.size(), 0.0);
    adj[output.id] = 1.0;

    for (uint32_t i = output.id + 1; i-- > 0;) {
        double g = adj[i];
        if (g == 0.0) continue;
        const TapeNode& n = nodes[i];
        double va = nodes[n.a].val, vb = nodes[n.b].val;
        switch (n.op) {
            case Op::Const:
            case Op::Param: break;
            case Op::Add: adj[n.a] += g; adj[n.b] += g; break;
            case Op::Sub: adj[n.a] += g; adj[n.b] -= g; break;
            case Op::Mul: adj[n.a] += g * vb; adj[n.b] += g * va; break;
            case Op::Div: adj[n.a] += g / vb; adj[n.b] -= g * n.val / vb; break;
            case Op::Neg: adj[n.a] -= g; break;
            case Op::AddC: adj[n.a] += g; break;
            case Op::MulC: adj[n.a] += g * n.aux; break;
            case Op::RsubC: adj[n.a] -= g; break;
            case Op::DivC: adj[n.a] += g / n.aux; break;
            case Op::RdivC: adj[n.a] -= g * n.val / va; break;
            case Op::Exp: adj[n.a] += g * n.val; break;
            case Op::Log: adj[n.a] += g / va; break;
            case Op::Sqrt: adj[n.a] += g * 0.5 / n.val; break;
            case Op::Sin: adj[n.a] += g * std::cos(va); break;
            case Op::Cos: adj[n.a] -= g * std::sin(va); break;
            case Op::Min: adj[va <= vb ? n.a : n.b] += g; break;
            case Op::Max: adj[va >= vb ? n.a : n.b] += g; break;
            case Op::Abs: adj[n.a] += va > 0 ? g : (va < 0 ? -g : 0.0); break;
            case Op::Recip: adj[n.a] -= g * n.val * n.val; break;
            case Op::PowC: adj[n.a] += g * n.aux * std::pow(va, n.aux - 1.0); break;
            case Op::SoftplusK: adj[n.a] += g * sigmoid_k_val(va, n.aux); break;
            case Op::SigmoidK: adj[n.a] += g * n.aux * n.val * (1.0 - n.val); break;
        }
    }

    std::vector<double> grads(tape.params_.size());
    for (size_t i = 0; i < tape.params_.size(); ++i) grads[i] = adj[tape.params_[i]];
    return GradientMap(tape.params_, std::move(grads));
}

double GradientMap::at(Value param) const {
    for (size_t i = 0; i < param_ids_.size(); ++i)
        if (param_ids_[i] == param.id) return grads_[i];
    return 0.0;
}

}  // namespace nslam
