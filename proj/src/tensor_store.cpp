// SPDX-License-Identifier: Apache-2.0

#include "drifttune/tensor_store.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "drifttune/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "tensor container assumes a little-endian host");
static_assert(sizeof(float) == 4);

namespace drifttune::store {

void write_tensors(const TensorMap &tensors, const std::string &path) {
  nlohmann::json header;
  std::uint64_t cursor = 0;
  for (const auto &[name, m] : tensors) {
    const std::uint64_t bytes = static_cast<std::uint64_t>(m.size()) * 4;
    nlohmann::json entry;
    entry["dtype"] = "f32";
    if (m.rows == 1) {
      entry["shape"] = {m.cols};
    } else {
      entry["shape"] = {m.rows, m.cols};
    }
    entry["offset_begin"] = cursor;
    entry["offset_end"] = cursor + bytes;
    header[name] = entry;
    cursor += bytes;
  }
  const std::string header_text = header.dump();

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out.is_open()) {
      throw IoError("cannot open '" + tmp + "' for writing");
    }
    const std::uint64_t hlen = header_text.size();
    out.write(reinterpret_cast<const char *>(&hlen), 8);
    out.write(header_text.data(),
              static_cast<std::streamsize>(header_text.size()));
    for (const auto &[name, m] : tensors) {
      (void)name;
      for (double v : m.data) {
        const float f = static_cast<float>(v);
        out.write(reinterpret_cast<const char *>(&f), 4);
      }
    }
    out.flush();
    if (!out.good()) {
      throw IoError("write failure on '" + tmp + "'");
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw IoError("cannot move '" + tmp + "' to '" + path +
                  "': " + ec.message());
  }
}

TensorMap read_tensors(const std::string &path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) {
    throw IoError("cannot open '" + path + "' for reading");
  }
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char *>(&hlen), 8);
  if (!in.good()) {
    throw FormatError("'" + path + "': truncated header length");
  }
  std::string header_text(hlen, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(hlen));
  if (!in.good()) {
    throw FormatError("'" + path + "': truncated header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_text);
  } catch (const nlohmann::json::exception &e) {
    throw FormatError("'" + path + "': bad header JSON: " + e.what());
  }
  if (!header.is_object()) {
    throw FormatError("'" + path + "': header is not a JSON object");
  }

  std::vector<char> payload(std::istreambuf_iterator<char>(in), {});

  TensorMap out;
  for (const auto &[name, entry] : header.items()) {
    if (!entry.contains("dtype") || entry["dtype"] != "f32") {
      throw FormatError("tensor '" + name + "': unsupported dtype");
    }
    const auto &shape = entry["shape"];
    if (!shape.is_array() || shape.empty() || shape.size() > 2) {
      throw FormatError("tensor '" + name + "': bad shape");
    }
    std::size_t rows = 1, cols = 0;
    if (shape.size() == 1) {
      cols = shape[0].get<std::size_t>();
    } else {
      rows = shape[0].get<std::size_t>();
      cols = shape[1].get<std::size_t>();
    }
    const std::uint64_t begin = entry["offset_begin"].get<std::uint64_t>();
    const std::uint64_t end = entry["offset_end"].get<std::uint64_t>();
    if (end < begin || end > payload.size()) {
      throw FormatError("tensor '" + name + "': offsets outside payload");
    }
    if (end - begin != static_cast<std::uint64_t>(rows) * cols * 4) {
      throw FormatError("tensor '" + name +
                        "': payload size does not match shape");
    }
    Mat m(rows, cols);
    const char *src = payload.data() + begin;
    for (std::size_t i = 0; i < m.size(); ++i) {
      float f;
      std::memcpy(&f, src + i * 4, 4);
      m.data[i] = static_cast<double>(f);
    }
    out.emplace(name, std::move(m));
  }
  return out;
}

} // namespace drifttune::store
