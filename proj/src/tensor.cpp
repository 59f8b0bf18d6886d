#include "rcomm/tensor.hpp"

#include <cstring>
#include <unordered_set>

namespace rcomm {

namespace {
std::size_t shape_product(const std::vector<std::size_t>& shape) {
  std::size_t p = 1;
  for (std::size_t d : shape) {
    if (d == 0) throw Error("tensor shape has a zero dimension");
    p *= d;
  }
  return shape.empty() ? 0 : p;
}
}  // namespace

FlatTensor::FlatTensor(std::string name, std::vector<std::size_t> shape)
    : name_(std::move(name)), shape_(std::move(shape)) {
  if (name_.empty()) throw Error("tensor name must be non-empty");
  len_ = shape_product(shape_);
  storage_->assign(len_, 0.0f);
}

FlatTensor::FlatTensor(std::string name, std::vector<std::size_t> shape,
                       std::vector<float> values)
    : name_(std::move(name)), shape_(std::move(shape)) {
  if (name_.empty()) throw Error("tensor name must be non-empty");
  len_ = shape_product(shape_);
  if (values.size() != len_)
    throw Error("tensor '" + name_ + "': shape/data length mismatch");
  *storage_ = std::move(values);
}

FlatTensor BucketArena::as_flat(const std::string& name) const {
  FlatTensor t;
  t.name_ = name;
  t.shape_ = {storage_->size()};
  t.storage_ = storage_;
  t.offset_ = 0;
  t.len_ = storage_->size();
  return t;
}

BucketArena BucketArena::flatten(std::span<FlatTensor*> tensors) {
  if (tensors.empty()) throw Error("flatten: empty tensor list");
  std::unordered_set<std::string> seen;
  std::size_t total = 0;
  for (FlatTensor* t : tensors) {
    if (t->size() == 0) throw Error("flatten: zero-length tensor '" + t->name() + "'");
    if (!seen.insert(t->name()).second)
      throw Error("flatten: duplicate tensor name '" + t->name() + "'");
    total += t->size();
  }
  BucketArena arena;
  arena.storage_->resize(total);
  std::size_t off = 0;
  for (FlatTensor* t : tensors) {
    std::memcpy(arena.storage_->data() + off, t->data(),
                t->size() * sizeof(float));
    arena.members_.push_back({t->name(), off, t->size()});
    t->storage_ = arena.storage_;
    t->offset_ = off;
    off += t->size();
  }
  return arena;
}

}  // namespace rcomm
