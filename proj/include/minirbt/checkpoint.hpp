// minirbt/checkpoint.hpp

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

#ifndef MINIRBT_CHECKPOINT_HPP_
#define MINIRBT_CHECKPOINT_HPP_

#include <string>
#include <utility>
#include <vector>

#include "minirbt/tensor.hpp"

namespace minirbt {

/// Checkpoint container: "MRBT" magic + format version, string metadata
/// pairs, then named tensors as shape + little-endian 64-bit float payload.
/// Round-trips byte-exactly.
struct Container {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const std::string* find_meta(const std::string& key) const;
  const Tensor* find_tensor(const std::string& name) const;
};

void SaveContainer(const std::string& path, const Container& c);
Container LoadContainer(const std::string& path);

}  // namespace minirbt

#endif  // MINIRBT_CHECKPOINT_HPP_
