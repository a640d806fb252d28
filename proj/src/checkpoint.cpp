// minirbt/checkpoint.cpp

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "minirbt/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian");

namespace minirbt {

namespace {

constexpr char kMagic[4] = {'M', 'R', 'B', 'T'};
constexpr std::uint32_t kVersion = 1;

void WriteU32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void WriteU64(std::ostream& os, std::uint64_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}
void WriteString(std::ostream& os, const std::string& s) {
  WriteU32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::uint32_t ReadU32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::uint64_t ReadU64(std::istream& is) {
  std::uint64_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof(v));
  return v;
}
std::string ReadString(std::istream& is) {
  std::uint32_t n = ReadU32(is);
  std::string s(n, '\0');
  is.read(s.data(), n);
  return s;
}

}  // namespace

const std::string* Container::find_meta(const std::string& key) const {
  for (const auto& [k, v] : meta)
    if (k == key) return &v;
  return nullptr;
}

const Tensor* Container::find_tensor(const std::string& name) const {
  for (const auto& [k, t] : tensors)
    if (k == name) return &t;
  return nullptr;
}

void SaveContainer(const std::string& path, const Container& c) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot write " + path);
  os.write(kMagic, 4);
  WriteU32(os, kVersion);
  WriteU32(os, static_cast<std::uint32_t>(c.meta.size()));
  for (const auto& [k, v] : c.meta) {
    WriteString(os, k);
    WriteString(os, v);
  }
  WriteU32(os, static_cast<std::uint32_t>(c.tensors.size()));
  for (const auto& [name, t] : c.tensors) {
    WriteString(os, name);
    WriteU32(os, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t d : t.shape) WriteU64(os, d);
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

Container LoadContainer(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  std::uint32_t version = ReadU32(is);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  Container c;
  std::uint32_t nmeta = ReadU32(is);
  for (std::uint32_t i = 0; i < nmeta; ++i) {
    std::string k = ReadString(is);
    std::string v = ReadString(is);
    c.meta.emplace_back(std::move(k), std::move(v));
  }
  std::uint32_t ntens = ReadU32(is);
  for (std::uint32_t i = 0; i < ntens; ++i) {
    std::string name = ReadString(is);
    std::uint32_t ndim = ReadU32(is);
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = ReadU64(is);
    Tensor t(shape);
    is.read(reinterpret_cast<char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(double)));
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  if (!is) throw std::runtime_error("checkpoint: truncated file " + path);
  return c;
}

}  // namespace minirbt
