#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace pmcr {

// Live/peak byte counters over tensor buffers; feeds the bench command's
// working-set report.
namespace memstat {
void add(size_t bytes);
void sub(size_t bytes);
size_t live_bytes();
size_t peak_bytes();
void reset_peak();
}  // namespace memstat

struct Shape4 {
  int n = 0, c = 0, h = 0, w = 0;

  size_t numel() const { return size_t(n) * size_t(c) * size_t(h) * size_t(w); }
  bool operator==(const Shape4&) const = default;
  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
           std::to_string(w);
  }
};

template <class T>
class TapeT;

// Dense NCHW tensor, row-major. Copies share the underlying buffer and
// buffers are immutable once an op has produced them (mutable_data exists
// for construction, deserialization and the optimizer's in-place update).
// `tape`/`node` tie the tensor to a gradient slot while recording; a
// detached tensor participates in ops without recording.
template <class T>
class TensorT {
 public:
  TensorT() = default;

  explicit TensorT(Shape4 s) : shape_(s), buf_(alloc(s.numel())) {}

  TensorT(Shape4 s, T fill) : TensorT(s) {
    std::fill(buf_->begin(), buf_->end(), fill);
  }

  static TensorT from_vector(Shape4 s, std::vector<T> v) {
    if (v.size() != s.numel())
      throw std::invalid_argument("tensor data length " + std::to_string(v.size()) +
                                  " does not match shape " + s.str());
    TensorT t;
    t.shape_ = s;
    memstat::add(v.size() * sizeof(T));
    size_t bytes = v.size() * sizeof(T);
    t.buf_ = std::shared_ptr<std::vector<T>>(new std::vector<T>(std::move(v)),
                                             [bytes](std::vector<T>* p) {
                                               memstat::sub(bytes);
                                               delete p;
                                             });
    return t;
  }

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  size_t numel() const { return shape_.numel(); }
  bool empty() const { return buf_ == nullptr; }

  const T* data() const { return buf_->data(); }
  T* mutable_data() { return buf_->data(); }
  const std::vector<T>& vec() const { return *buf_; }

  size_t index(int in, int ic, int iy, int ix) const {
    return ((size_t(in) * shape_.c + ic) * shape_.h + iy) * shape_.w + ix;
  }
  T at(int in, int ic, int iy, int ix) const { return (*buf_)[index(in, ic, iy, ix)]; }

  // same buffer, no tape participation
  TensorT detached() const {
    TensorT t;
    t.shape_ = shape_;
    t.buf_ = buf_;
    return t;
  }

  // fresh buffer copy, no tape participation
  TensorT clone() const {
    TensorT t(shape_);
    std::copy(buf_->begin(), buf_->end(), t.buf_->begin());
    return t;
  }

  TapeT<T>* tape = nullptr;
  int node = -1;

  bool on_tape() const { return tape != nullptr && node >= 0; }

 private:
  static std::shared_ptr<std::vector<T>> alloc(size_t numel) {
    memstat::add(numel * sizeof(T));
    size_t bytes = numel * sizeof(T);
    return std::shared_ptr<std::vector<T>>(new std::vector<T>(numel, T(0)),
                                           [bytes](std::vector<T>* p) {
                                             memstat::sub(bytes);
                                             delete p;
                                           });
  }

  Shape4 shape_;
  std::shared_ptr<std::vector<T>> buf_;
};

// Reverse-mode tape. Nodes are gradient slots allocated in recording order;
// backward seeds the loss slot with 1 and runs the recorded closures
// strictly in reverse. A slot consumed by k ops accumulates the sum of the
// k contributions.
template <class T>
class TapeT {
 public:
  // registers an existing tensor (typically a parameter) as gradient target
  int watch(TensorT<T>& t) {
    if (t.empty()) throw std::invalid_argument("cannot watch an empty tensor");
    if (t.tape != nullptr && t.tape != this)
      throw std::invalid_argument("tensor is already recorded on another tape");
    if (t.node < 0) {
      t.node = alloc_slot(t.numel());
      t.tape = this;
    }
    return t.node;
  }

  int alloc_slot(size_t numel) {
    if (done_) throw std::logic_error("tape already consumed by backward(); reset() first");
    grads_.emplace_back(numel, T(0));
    return int(grads_.size()) - 1;
  }

  void record(std::function<void()> fn) { fns_.push_back(std::move(fn)); }

  std::vector<T>& grad(int node) { return grads_.at(size_t(node)); }

  const std::vector<T>& grad(const TensorT<T>& t) const {
    if (t.tape != this || t.node < 0)
      throw std::invalid_argument("tensor has no gradient on this tape");
    return grads_.at(size_t(t.node));
  }

  void backward(const TensorT<T>& loss) {
    if (loss.numel() != 1 || loss.tape != this || loss.node < 0)
      throw std::invalid_argument("backward() requires a scalar recorded on this tape");
    if (done_) throw std::logic_error("tape already consumed by backward(); reset() first");
    grads_[size_t(loss.node)][0] = T(1);
    for (auto it = fns_.rbegin(); it != fns_.rend(); ++it) (*it)();
    done_ = true;
  }

  void reset() {
    grads_.clear();
    fns_.clear();
    done_ = false;
  }

  size_t num_nodes() const { return grads_.size(); }

 private:
  std::vector<std::vector<T>> grads_;
  std::vector<std::function<void()>> fns_;
  bool done_ = false;
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;
using Tape = TapeT<float>;
using TapeD = TapeT<double>;

}  // namespace pmcr
