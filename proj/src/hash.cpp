// SPDX-License-Identifier: Apache-2.0
#include "xids/hash.hpp"

#include <openssl/sha.h>

namespace xids {

Sha1Digest sha1(std::string_view bytes) {
  Sha1Digest out{};
  SHA1(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size(), out.data());
  return out;
}

std::string to_hex(const Sha1Digest& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string s;
  s.reserve(digest.size() * 2);
  for (const auto b : digest) {
    s.push_back(kHex[b >> 4]);
    s.push_back(kHex[b & 0xf]);
  }
  return s;
}

}  // namespace xids
