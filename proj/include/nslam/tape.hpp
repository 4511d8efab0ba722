// Reverse-mode automatic differentiation over scalar computation graphs.
//
// One Tape records one forward evaluation as an append-only node list
// (inputs always precede consumers). A Value is a handle to a node on the
// thread's active tape; arithmetic on Values emits new nodes. backward()
// sweeps the list once in reverse and returns the accumulated partials for
// every registered parameter.
//
// Subgradient conventions: abs'(0) = 0, and min/max route the gradient to
// the first argument on ties.
#pragma once

#include "nslam/core.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace nslam {

struct InvalidOutput : Error { using Error::Error; };
struct UnknownNode : Error { using Error::Error; };
struct NonFiniteValue : Error { using Error::Error; };

enum class Op : uint8_t {
    Const, Param,
    Add, Sub, Mul, Div, Neg,
    AddC, MulC, RsubC, DivC, RdivC,   // one operand folded into aux
    Exp, Log, Sqrt, Sin, Cos,
    Min, Max, Abs, Recip,
    PowC,                              // x^aux
    SoftplusK, SigmoidK,               // sharpness in aux
};

struct TapeNode {
    Op op;
    uint32_t a = 0, b = 0;
    double val = 0;
    double aux = 0;
};

class Tape;

namespace detail {
Tape*& active_tape();
}

struct Value {
    uint32_t id = std::numeric_limits<uint32_t>::max();

    Value() = default;
    explicit Value(double c);  // constant on the active tape
    explicit Value(uint32_t i) : id(i) {}
    bool valid() const { return id != std::numeric_limits<uint32_t>::max(); }
    double val() const;
};

// Accumulated ∂output/∂p for each registered parameter; parameters that do
// not reach the output hold exactly 0.
class GradientMap {
  public:
    GradientMap() = default;
    GradientMap(std::vector<uint32_t> param_ids, std::vector<double> grads)
        : param_ids_(std::move(param_ids)), grads_(std::move(grads)) {}

    size_t size() const { return grads_.size(); }
    // by registration order
    double operator[](size_t i) const { return grads_[i]; }
    // by parameter handle
    double at(Value param) const;
    const std::vector<double>& raw() const { return grads_; }

  private:
    std::vector<uint32_t> param_ids_;
    std::vector<double> grads_;
};

class Tape {
  public:
    Tape() { nodes_.reserve(1024); }

    size_t size() const { return nodes_.size(); }
    const TapeNode& node(uint32_t i) const { return nodes_[i]; }

    Value constant(double v) { return emit(Op::Const, 0, 0, v); }
    Value parameter(double v) {
        Value p = emit(Op::Param, 0, 0, v);
        params_.push_back(p.id);
        return p;
    }
    const std::vector<uint32_t>& parameters() const { return params_; }

    Value emit(Op op, uint32_t a, uint32_t b, double val, double aux = 0) {
        nodes_.push_back({op, a, b, val, aux});
        return Value(uint32_t(nodes_.size() - 1));
    }

    // Recompute every node value from the recorded graph, in place.
    // Reproduces the cached values bit-for-bit.
    void replay();

    void clear() {
        nodes_.clear();
        params_.clear();
    }

  private:
    std::vector<TapeNode> nodes_;
    std::vector<uint32_t> params_;
    friend GradientMap backward(const Tape&, Value);
    friend struct Value;
};

// RAII activation of a tape for the current thread. Value arithmetic and
// double->Value conversion record onto the innermost active tape.
class TapeScope {
  public:
    explicit TapeScope(Tape& t) : prev_(detail::active_tape()) { detail::active_tape() = &t; }
    ~TapeScope() { detail::active_tape() = prev_; }
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

  private:
    Tape* prev_;
};

GradientMap backward(const Tape& tape, Value output);

// --- Value arithmetic -------------------------------------------------------

namespace detail {
inline Tape& at() { return *active_tape(); }
inline double nv(uint32_t id) { return at().node(id).val; }
}

inline Value::Value(double c) { *this = detail::at().constant(c); }
inline double Value::val() const { return detail::nv(id); }

inline Value operator+(Value a, Value b) { return detail::at().emit(Op::Add, a.id, b.id, a.val() + b.val()); }
inline Value operator-(Value a, Value b) { return detail::at().emit(Op::Sub, a.id, b.id, a.val() - b.val()); }
inline Value operator*(Value a, Value b) { return detail::at().emit(Op::Mul, a.id, b.id, a.val() * b.val()); }
inline Value operator/(Value a, Value b) { return detail::at().emit(Op::Div, a.id, b.id, a.val() / b.val()); }
inline Value operator-(Value a) { return detail::at().emit(Op::Neg, a.id, 0, -a.val()); }

inline Value operator+(Value a, double c) { return detail::at().emit(Op::AddC, a.id, 0, a.val() + c, c); }
inline Value operator+(double c, Value a) { return a + c; }
inline Value operator-(Value a, double c) { return a + (-c); }
inline Value operator-(double c, Value a) { return detail::at().emit(Op::RsubC, a.id, 0, c - a.val(), c); }
inline Value operator*(Value a, double c) { return detail::at().emit(Op::MulC, a.id, 0, a.val() * c, c); }
inline Value operator*(double c, Value a) { return a * c; }
inline Value operator/(Value a, double c) { return detail::at().emit(Op::DivC, a.id, 0, a.val() / c, c); }
inline Value operator/(double c, Value a) { return detail::at().emit(Op::RdivC, a.id, 0, c / a.val(), c); }

inline Value& operator+=(Value& a, Value b) { a = a + b; return a; }
inline Value& operator-=(Value& a, Value b) { a = a - b; return a; }
inline Value& operator*=(Value& a, Value b) { a = a * b; return a; }

inline Value exp(Value a) { return detail::at().emit(Op::Exp, a.id, 0, std::exp(a.val())); }
inline Value log(Value a) { return detail::at().emit(Op::Log, a.id, 0, std::log(a.val())); }
inline Value sqrt(Value a) { return detail::at().emit(Op::Sqrt, a.id, 0, std::sqrt(a.val())); }
inline Value sin(Value a) { return detail::at().emit(Op::Sin, a.id, 0, std::sin(a.val())); }
inline Value cos(Value a) { return detail::at().emit(Op::Cos, a.id, 0, std::cos(a.val())); }
inline Value abs(Value a) { return detail::at().emit(Op::Abs, a.id, 0, std::abs(a.val())); }
inline Value reciprocal(Value a) { return detail::at().emit(Op::Recip, a.id, 0, 1.0 / a.val()); }
inline Value pow(Value a, double e) { return detail::at().emit(Op::PowC, a.id, 0, std::pow(a.val(), e), e); }

inline Value min(Value a, Value b) {
    return detail::at().emit(Op::Min, a.id, b.id, a.val() <= b.val() ? a.val() : b.val());
}
inline Value max(Value a, Value b) {
    return detail::at().emit(Op::Max, a.id, b.id, a.val() >= b.val() ? a.val() : b.val());
}
inline Value clamp(Value a, double lo, double hi) { return min(max(a, Value(lo)), Value(hi)); }

// log(1 + exp(k x)) / k, evaluated in the overflow-safe form.
double softplus_k_val(double x, double k);
inline Value softplus_k(Value a, double k) {
    return detail::at().emit(Op::SoftplusK, a.id, 0, softplus_k_val(a.val(), k), k);
}
// 1 / (1 + exp(-k x))
double sigmoid_k_val(double x, double k);
inline Value sigmoid_k(Value a, double k) {
    return detail::at().emit(Op::SigmoidK, a.id, 0, sigmoid_k_val(a.val(), k), k);
}
inline Value relu(Value a) { return max(Value(0.0), a); }

// --- double counterparts so generic code compiles for both scalar types ----

inline double exp(double a) { return std::exp(a); }
inline double log(double a) { return std::log(a); }
inline double sqrt(double a) { return std::sqrt(a); }
inline double sin(double a) { return std::sin(a); }
inline double cos(double a) { return std::cos(a); }
inline double abs(double a) { return std::abs(a); }
inline double reciprocal(double a) { return 1.0 / a; }
inline double pow(double a, double e) { return std::pow(a, e); }
inline double min(double a, double b) { return a <= b ? a : b; }
inline double max(double a, double b) { return a >= b ? a : b; }
inline double clamp(double a, double lo, double hi) { return min(max(a, lo), hi); }
inline double softplus_k(double a, double k) { return softplus_k_val(a, k); }
inline double sigmoid_k(double a, double k) { return sigmoid_k_val(a, k); }
inline double relu(double a) { return a > 0 ? a : 0.0; }

inline double value_of(double a) { return a; }
inline double value_of(Value a) { return a.val(); }

}  // namespace nslam
