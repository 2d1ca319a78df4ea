#include "keyrl/checkpoint.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace keyrl::nn {

namespace {
constexpr const char* kMagic = "KEYRL-CKPT 1";

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw std::runtime_error("checkpoint " + path + ": " + what);
}
}  // namespace

void save_checkpoint(const std::string& path,
                     const std::vector<TensorView>& tensors) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << kMagic << '\n' << tensors.size() << '\n';
  for (const auto& t : tensors) {
    std::int64_t count = 1;
    for (auto d : t.dims) {
      if (d <= 0) fail(path, "non-positive dim for tensor " + t.name);
      count *= d;
    }
    if (static_cast<std::size_t>(count) != t.data.size())
      fail(path, "dims do not match payload size for tensor " + t.name);
    out << t.name << ' ' << t.dims.size();
    for (auto d : t.dims) out << ' ' << d;
    out << '\n';
    out.write(reinterpret_cast<const char*>(t.data.data()),
              static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!out) fail(path, "write failed");
}

std::vector<LoadedTensor> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  std::string line;
  if (!std::getline(in, line) || line != kMagic)
    fail(path, "bad magic or unsupported version");
  if (!std::getline(in, line)) fail(path, "missing tensor count");
  std::size_t n = 0;
  try {
    n = std::stoul(line);
  } catch (...) {
    fail(path, "bad tensor count");
  }

  std::vector<LoadedTensor> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::getline(in, line)) fail(path, "truncated descriptor section");
    std::istringstream ls(line);
    LoadedTensor t;
    std::size_t ndims = 0;
    if (!(ls >> t.name >> ndims) || ndims == 0 || ndims > 8)
      fail(path, "malformed tensor descriptor");
    std::int64_t count = 1;
    for (std::size_t d = 0; d < ndims; ++d) {
      std::int64_t dim = 0;
      if (!(ls >> dim) || dim <= 0) fail(path, "malformed tensor dims");
      t.dims.push_back(dim);
      count *= dim;
    }
    t.data.resize(static_cast<std::size_t>(count));
    in.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    if (in.gcount() !=
        static_cast<std::streamsize>(t.data.size() * sizeof(double)))
      fail(path, "truncated payload for tensor " + t.name);
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace keyrl::nn
