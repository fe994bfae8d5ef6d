// SPDX-License-Identifier: Apache-2.0
#include "xids/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "xids/config.hpp"
#include "xids/errors.hpp"
#include "xids/hash.hpp"

namespace xids {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Cursor {
 public:
  explicit Cursor(std::string_view bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)).data(), sizeof(T));
    return v;
  }
  std::string_view take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw DataError("checkpoint truncated");
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string serialize_checkpoint(const EncoderParams& params) {
  std::string out(kCheckpointMagic);
  put<std::uint32_t>(out, kCheckpointVersion);
  const std::string cfg = encoder_config_to_json(params.config);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(cfg.size()));
  out += cfg;

  std::uint32_t count = 0;
  params.for_each([&](std::string_view, const Matrix&) { ++count; });
  put<std::uint32_t>(out, count);
  params.for_each([&](std::string_view name, const Matrix& m) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(m.cols()));
    out.append(reinterpret_cast<const char*>(m.data()), sizeof(double) * static_cast<std::size_t>(m.size()));
  });
  const auto digest = sha1(out);
  out.append(reinterpret_cast<const char*>(digest.data()), digest.size());
  return out;
}

EncoderParams deserialize_checkpoint(std::string_view bytes) {
  if (bytes.size() < kCheckpointMagic.size() + 20 || bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw DataError("not a checkpoint file (bad magic)");
  }
  const auto body = bytes.substr(0, bytes.size() - 20);
  const auto digest = sha1(body);
  if (std::memcmp(digest.data(), bytes.data() + body.size(), digest.size()) != 0) {
    throw DataError("checkpoint digest mismatch (file corrupted)");
  }
  Cursor cur(body);
  cur.take(kCheckpointMagic.size());
  const auto version = cur.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto cfg_len = cur.get<std::uint32_t>();
  const EncoderConfig config = encoder_config_from_json(cur.take(cfg_len));

  EncoderParams params = init_params(config, 0);
  params.config = config;
  std::uint32_t expected = 0;
  params.for_each([&](std::string_view, const Matrix&) { ++expected; });
  const auto count = cur.get<std::uint32_t>();
  if (count != expected) {
    throw DataError("checkpoint holds " + std::to_string(count) + " tensors, config implies " +
                    std::to_string(expected));
  }
  params.for_each([&](std::string_view name, Matrix& m) {
    const auto name_len = cur.get<std::uint32_t>();
    const auto stored = cur.take(name_len);
    if (stored != name) throw DataError("checkpoint tensor '" + std::string(stored) + "' where '" + std::string(name) + "' was expected");
    const auto rows = cur.get<std::uint64_t>();
    const auto cols = cur.get<std::uint64_t>();
    if (rows != static_cast<std::uint64_t>(m.rows()) || cols != static_cast<std::uint64_t>(m.cols())) {
      throw DataError("checkpoint tensor '" + std::string(name) + "' has shape " + std::to_string(rows) + "x" +
                      std::to_string(cols));
    }
    const auto raw = cur.take(sizeof(double) * rows * cols);
    std::memcpy(m.data(), raw.data(), raw.size());
  });
  if (cur.remaining() != 0) throw DataError("trailing bytes after checkpoint tensors");
  if (!params.all_finite()) throw NumericError("checkpoint contains non-finite parameters");
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params) {
  const std::string bytes = serialize_checkpoint(params);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

EncoderParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize_checkpoint(buf.str());
}

}  // namespace xids
