#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace gdse {

// A named trainable array. `grad` accumulates across Tape::backward calls
// until zero_grad() is called.
struct Param {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;

  Param() = default;
  Param(std::string name, std::vector<std::size_t> shape, double fill = 0.0);

  std::size_t size() const { return value.size(); }
  void zero_grad();
};

class Tape;

// Handle to a node on a Tape. Values are laid out row-major as
// rows (channels) x cols (time).
class Var {
 public:
  Var() = default;

  std::size_t rows() const;
  std::size_t cols() const;
  std::size_t size() const;
  std::span<const double> value() const;
  std::span<const double> grad() const;
  double item() const;
  bool requires_grad() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Dynamic reverse-mode record. Each primitive op appends a node holding its
// output value and a closure that scatters the node's gradient to its parents.
// Nodes are only ever appended, so parents always precede children.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  struct Node {
    std::vector<double> value;
    std::vector<double> grad;
    std::size_t rows = 0;
    std::size_t cols = 0;
    bool requires_grad = false;
    Param* param = nullptr;
    BackwardFn backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf holding a copy of `values`. Marked inputs receive gradients.
  Var input(std::vector<double> values, std::size_t rows, std::size_t cols,
            bool requires_grad = false);
  Var input(std::span<const double> row, bool requires_grad = false);
  Var constant(std::vector<double> values, std::size_t rows, std::size_t cols) {
    return input(std::move(values), rows, cols, false);
  }
  // Leaf bound to a Param; backward() adds into p.grad. rows*cols must equal
  // p.size().
  Var param(Param& p, std::size_t rows, std::size_t cols);
  Var param(Param& p);

  // Appends an op result. `requires_grad` should be true iff any parent
  // requires grad; `fn` is only kept in that case.
  Var push(std::vector<double> value, std::size_t rows, std::size_t cols,
           bool requires_grad, BackwardFn fn);

  // Reverse sweep from a scalar output. Node gradients are reset first so
  // repeated calls give identical node gradients; bound Params accumulate.
  void backward(Var out);

  Node& node(std::size_t id) { return nodes_[id]; }
  const Node& node(std::size_t id) const { return nodes_[id]; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Gradient buffer of a node, allocated lazily during backward().
  std::vector<double>& grad_of(std::size_t id);

 private:
  std::vector<Node> nodes_;
};

}  // namespace gdse
