#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rcomm {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Contiguous float32 buffer with shape metadata; the unit of communication.
// Initially each tensor owns its storage. After flatten() the tensor becomes
// a view into a bucket arena and writes are visible through both handles.
class FlatTensor {
 public:
  FlatTensor() = default;
  FlatTensor(std::string name, std::vector<std::size_t> shape);
  FlatTensor(std::string name, std::vector<std::size_t> shape,
             std::vector<float> values);

  const std::string& name() const { return name_; }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return len_; }

  float* data() { return storage_->data() + offset_; }
  const float* data() const { return storage_->data() + offset_; }
  std::span<float> span() { return {data(), len_}; }
  std::span<const float> span() const { return {data(), len_}; }

  float& operator[](std::size_t k) { return data()[k]; }
  float operator[](std::size_t k) const { return data()[k]; }

  bool is_view() const { return offset_ != 0 || storage_->size() != len_; }

 private:
  friend class BucketArena;
  std::string name_;
  std::vector<std::size_t> shape_;
  std::shared_ptr<std::vector<float>> storage_ =
      std::make_shared<std::vector<float>>();
  std::size_t offset_ = 0;
  std::size_t len_ = 0;
};

struct TensorView {
  std::string name;
  std::size_t offset;
  std::size_t length;
};

// One contiguous allocation backing many tensor views, in registration
// order with no gaps. Reading the arena flat equals the concatenation of
// the member tensors.
class BucketArena {
 public:
  BucketArena() : storage_(std::make_shared<std::vector<float>>()) {}

  const std::vector<TensorView>& members() const { return members_; }
  std::size_t size() const { return storage_->size(); }

  float* data() { return storage_->data(); }
  const float* data() const { return storage_->data(); }
  std::span<float> span() { return {storage_->data(), storage_->size()}; }
  std::span<const float> span() const {
    return {storage_->data(), storage_->size()};
  }

  // Single logical tensor over the whole arena; writes propagate both ways.
  FlatTensor as_flat(const std::string& name = "arena") const;

  // Copies the tensors' contents into one buffer and repoints each input to
  // its slice. Errors on duplicate names and zero-length members.
  static BucketArena flatten(std::span<FlatTensor*> tensors);
  static BucketArena flatten(std::vector<FlatTensor*> tensors) {
    return flatten(std::span<FlatTensor*>(tensors));
  }

 private:
  std::shared_ptr<std::vector<float>> storage_;
  std::vector<TensorView> members_;
};

}  // namespace rcomm
