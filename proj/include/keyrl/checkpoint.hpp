#pragma once
// Versioned parameter checkpoint.
//
// Layout (little-endian host assumed):
//   line  "KEYRL-CKPT 1"                   text header, LF-terminated
//   line  "<n_tensors>"
//   per tensor:
//     line  "<name> <ndims> <d0> [<d1> ...]"
//     raw   d0*d1*... doubles, host byte order
// Raw payloads make the round trip bit-exact.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace keyrl::nn {

struct TensorView {
  std::string name;
  std::vector<std::int64_t> dims;
  std::span<const double> data;
};

struct LoadedTensor {
  std::string name;
  std::vector<std::int64_t> dims;
  std::vector<double> data;
};

// Throws std::runtime_error on IO failure or when a dim product disagrees
// with the view size.
void save_checkpoint(const std::string& path,
                     const std::vector<TensorView>& tensors);

// Throws std::runtime_error on missing file, bad magic/version, malformed
// descriptors, or truncated payload.
std::vector<LoadedTensor> load_checkpoint(const std::string& path);

}  // namespace keyrl::nn
