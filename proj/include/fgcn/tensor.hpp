#pragma once

// Dense tensors, named parameters and the reverse-mode gradient tape.
//
// Feature maps use the layout (batch, channels, time, vertices). Every
// differentiable operation lives in ops.hpp and records itself on a Tape.

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fgcn/error.hpp"

namespace fgcn {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s, T fill = T(0)) : shape(std::move(s)), data(numel(shape), fill) {}
  Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), data(std::move(values)) {
    if (numel(shape) != data.size())
      throw ShapeError("tensor data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_string(shape));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return shape.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  // Row-major 4-D accessors for the canonical (B, C, T, V) layout.
  T& at(std::size_t b, std::size_t c, std::size_t t, std::size_t v) {
    return data[((b * shape[1] + c) * shape[2] + t) * shape[3] + v];
  }
  const T& at(std::size_t b, std::size_t c, std::size_t t, std::size_t v) const {
    return data[((b * shape[1] + c) * shape[2] + t) * shape[3] + v];
  }

  bool all_finite() const {
    for (const T& x : data)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

// A named trainable (or buffer) tensor with its gradient and optimizer state.
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> velocity;
  bool trainable = true;
  bool has_grad = false;

  void zero_grad() {
    grad = Tensor<T>(value.shape);
    has_grad = false;
  }
};

// Ordered parameter collection. Registration order is the iteration order,
// which keeps checkpoints and update sequences deterministic.
template <typename T>
class ParamStore {
 public:
  ParamStore() = default;
  ParamStore(const ParamStore&) = delete;
  ParamStore& operator=(const ParamStore&) = delete;
  ParamStore(ParamStore&&) = default;
  ParamStore& operator=(ParamStore&&) = default;

  Parameter<T>& add(std::string name, Tensor<T> value, bool trainable = true) {
    if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    auto p = std::make_unique<Parameter<T>>();
    p->name = name;
    p->trainable = trainable;
    p->grad = Tensor<T>(value.shape);
    p->velocity = Tensor<T>(value.shape);
    p->value = std::move(value);
    index_.emplace(std::move(name), params_.size());
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Parameter<T>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("no parameter named " + name);
    return *params_[it->second];
  }
  const Parameter<T>& get(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ConfigError("no parameter named " + name);
    return *params_[it->second];
  }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::size_t size() const { return params_.size(); }
  Parameter<T>& operator[](std::size_t i) { return *params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return *params_[i]; }

  void zero_grad() {
    for (auto& p : params_) p->zero_grad();
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (auto& p : params_)
      if (p->trainable) n += p->value.size();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Parameter<T>>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
class Tape;

// Handle to a value recorded on a tape.
template <typename T>
struct Var {
  Tape<T>* tape = nullptr;
  std::size_t id = 0;

  const Shape& shape() const;
  const std::vector<T>& value() const;
  std::size_t dim(std::size_t i) const { return shape().at(i); }
  std::size_t size() const { return value().size(); }
  Tensor<T> tensor() const { return Tensor<T>(shape(), value()); }
};

// Records operations in creation order. backward() walks the entries once in
// reverse and deposits leaf gradients into the bound parameters.
//
// One tape per forward/backward cycle; a consumed tape rejects further use.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  struct Entry {
    std::string op;
    std::vector<std::size_t> inputs;
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    std::vector<T> saved;
    BackwardFn backward;
    Parameter<T>* param = nullptr;
  };

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return entries_.size(); }
  const Entry& entry(std::size_t i) const { return entries_[i]; }
  Entry& entry(std::size_t i) { return entries_[i]; }

  Var<T> constant(const Tensor<T>& t) { return constant(t.shape, t.data); }
  Var<T> constant(Shape shape, std::vector<T> value) {
    check_live();
    if (numel(shape) != value.size())
      throw ShapeError("leaf data length does not match shape " + shape_string(shape));
    Entry e;
    e.op = "leaf";
    e.shape = std::move(shape);
    e.value = std::move(value);
    return push(std::move(e));
  }

  // Leaf bound to a parameter. Repeated calls return the same handle, so a
  // parameter shared across stages accumulates one gradient.
  Var<T> param(Parameter<T>& p) {
    check_live();
    auto it = param_ids_.find(&p);
    if (it != param_ids_.end()) return Var<T>{this, it->second};
    Entry e;
    e.op = "param";
    e.shape = p.value.shape;
    e.value = p.value.data;
    e.param = &p;
    Var<T> v = push(std::move(e));
    param_ids_.emplace(&p, v.id);
    return v;
  }

  Var<T> push(Entry e) {
    check_live();
    for (std::size_t in : e.inputs)
      if (in >= entries_.size()) throw Error("tape entry references a later entry");
    if (!record_) {
      e.backward = nullptr;
      e.saved.clear();
    }
    entries_.push_back(std::move(e));
    return Var<T>{this, entries_.size() - 1};
  }

  // Gradient buffer of an entry, allocated on first use.
  std::vector<T>& grad(std::size_t id) {
    auto& e = entries_[id];
    if (e.grad.empty()) e.grad.assign(e.value.size(), T(0));
    return e.grad;
  }

  void backward(Var<T> loss) {
    check_live();
    if (!record_) throw Error("backward on a tape created without recording");
    if (loss.tape != this) throw Error("loss does not belong to this tape");
    const Entry& le = entries_[loss.id];
    if (le.value.size() != 1)
      throw ShapeError("backward requires a scalar loss, got shape " + shape_string(le.shape));
    grad(loss.id)[0] = T(1);
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Entry& e = entries_[i];
      if (e.grad.empty()) continue;
      if (e.backward) e.backward(*this, i);
      if (e.param && e.param->trainable) {
        auto& pg = e.param->grad;
        if (pg.size() != e.grad.size()) pg = Tensor<T>(e.param->value.shape);
        for (std::size_t j = 0; j < e.grad.size(); ++j) pg.data[j] += e.grad[j];
        e.param->has_grad = true;
      }
    }
    consumed_ = true;
  }

  bool consumed() const { return consumed_; }

  // Gradient reached by the last backward pass; zeros when unreached.
  std::vector<T> gradient(Var<T> v) const {
    const Entry& e = entries_.at(v.id);
    if (e.grad.empty()) return std::vector<T>(e.value.size(), T(0));
    return e.grad;
  }

 private:
  void check_live() const {
    if (consumed_) throw Error("gradient tape already consumed by backward()");
  }

  bool record_;
  bool consumed_ = false;
  std::vector<Entry> entries_;
  std::unordered_map<const Parameter<T>*, std::size_t> param_ids_;
};

template <typename T>
const Shape& Var<T>::shape() const {
  return tape->entry(id).shape;
}
template <typename T>
const std::vector<T>& Var<T>::value() const {
  return tape->entry(id).value;
}

}  // namespace fgcn
