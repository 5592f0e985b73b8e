#include "gdse/numerics/tape.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace gdse {

Param::Param(std::string n, std::vector<std::size_t> s, double fill)
    : name(std::move(n)), shape(std::move(s)) {
  std::size_t total = 1;
  for (auto d : shape) total *= d;
  value.assign(total, fill);
  grad.assign(total, 0.0);
}

void Param::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0); }

std::size_t Var::rows() const { return tape_->node(id_).rows; }
std::size_t Var::cols() const { return tape_->node(id_).cols; }
std::size_t Var::size() const { return tape_->node(id_).value.size(); }
std::span<const double> Var::value() const { return tape_->node(id_).value; }
std::span<const double> Var::grad() const { return tape_->node(id_).grad; }
bool Var::requires_grad() const { return tape_->node(id_).requires_grad; }

double Var::item() const {
  if (size() != 1) throw std::invalid_argument("Var::item on non-scalar");
  return tape_->node(id_).value[0];
}

Var Tape::input(std::vector<double> values, std::size_t rows, std::size_t cols,
                bool requires_grad) {
  if (values.size() != rows * cols)
    throw std::invalid_argument("Tape::input: size does not match shape");
  Node n;
  n.value = std::move(values);
  n.rows = rows;
  n.cols = cols;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::input(std::span<const double> row, bool requires_grad) {
  return input(std::vector<double>(row.begin(), row.end()), 1, row.size(),
               requires_grad);
}

Var Tape::param(Param& p, std::size_t rows, std::size_t cols) {
  if (rows * cols != p.size())
    throw std::invalid_argument("Tape::param: shape mismatch for " + p.name);
  if (p.grad.size() != p.value.size()) p.grad.assign(p.value.size(), 0.0);
  Node n;
  n.value = p.value;
  n.rows = rows;
  n.cols = cols;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Param& p) {
  const std::size_t rows = p.shape.empty() ? 1 : p.shape.front();
  return param(p, rows, rows == 0 ? 0 : p.size() / rows);
}

Var Tape::push(std::vector<double> value, std::size_t rows, std::size_t cols,
               bool requires_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.rows = rows;
  n.cols = cols;
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

std::vector<double>& Tape::grad_of(std::size_t id) {
  auto& n = nodes_[id];
  if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

void Tape::backward(Var out) {
  if (out.tape() != this) throw std::invalid_argument("backward: foreign Var");
  if (out.size() != 1)
    throw std::invalid_argument("backward: output must be scalar, got " +
                                std::to_string(out.size()) + " elements");
  for (std::size_t i = 0; i <= out.id(); ++i) {
    auto& n = nodes_[i];
    if (n.requires_grad)
      n.grad.assign(n.value.size(), 0.0);
    else
      n.grad.clear();
  }
  if (!nodes_[out.id()].requires_grad) return;
  nodes_[out.id()].grad[0] = 1.0;
  for (std::size_t i = out.id() + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.requires_grad && n.backward) n.backward(*this, i);
  }
  for (std::size_t i = 0; i <= out.id(); ++i) {
    auto& n = nodes_[i];
    if (n.param == nullptr) continue;
    auto& pg = n.param->grad;
    for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += n.grad[k];
  }
}

}  // namespace gdse
