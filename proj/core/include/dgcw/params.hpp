#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dgcw/layers.hpp"
#include "dgcw/tensor.hpp"

namespace dgcw {

enum class ParamRole {
  Weight,
  Bias,
  NormAffine,  // batch-norm scale/shift; exempt from weight decay
  Buffer,      // running statistics; saved but not optimized
};

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
  ParamRole role;
};

// Ordered collection of dot-named parameters. Tensors are shared handles, so
// updating an entry updates the owning module.
template <typename T>
class ParamSet {
 public:
  void add(std::string name, Tensor<T> tensor, ParamRole role);
  void add(const std::string& prefix, const LinearParams<T>& p);
  void add(const std::string& prefix, const Conv2dParams<T>& p);
  void add(const std::string& prefix, const BatchNormParams<T>& p);

  const std::vector<NamedParam<T>>& entries() const { return entries_; }
  const NamedParam<T>* find(std::string_view name) const;
  std::size_t size() const { return entries_.size(); }
  std::size_t element_count() const;

  void zero_grad() const;

 private:
  std::vector<NamedParam<T>> entries_;
};

// Checkpoint archive: a flat directory holding one <name>.dgt per parameter
// plus manifest.csv (name,role,dtype,shape,file).
template <typename T>
void save_checkpoint(const std::filesystem::path& dir, const ParamSet<T>& params);

// Loads every manifest entry into the matching parameter. Throws
// std::runtime_error on a missing name or shape mismatch.
template <typename T>
void load_checkpoint(const std::filesystem::path& dir, const ParamSet<T>& params);

const char* role_name(ParamRole role);

}  // namespace dgcw
