// SPDX-License-Identifier: Apache-2.0

#ifndef DRIFTTUNE_TENSOR_STORE_HPP
#define DRIFTTUNE_TENSOR_STORE_HPP

#include <map>
#include <string>

#include "drifttune/mat.hpp"

namespace drifttune::store {

// Named-tensor container:
//   bytes 0..7   little-endian uint64 header length
//   header       UTF-8 JSON: name -> {dtype:"f32", shape:[..],
//                offset_begin, offset_end}
//   payload      raw little-endian float32, offsets relative to its start
//
// Values are held as doubles in memory and rounded to f32 on write. A
// 1 x n matrix serializes as rank-1 [n]; anything else as [rows, cols].

using TensorMap = std::map<std::string, Mat>;

void write_tensors(const TensorMap &tensors, const std::string &path);
TensorMap read_tensors(const std::string &path);

} // namespace drifttune::store

#endif
