#include "oxy/md5.hpp"

#include <openssl/evp.h>

#include "oxy/error.hpp"

namespace oxy {

void Md5::Free::operator()(evp_md_ctx_st* ctx) const noexcept { EVP_MD_CTX_free(ctx); }

Md5::Md5() : ctx_(EVP_MD_CTX_new()) {
  if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_md5(), nullptr) != 1)
    throw Error(Errc::IoError, "md5 unavailable");
}

Md5::~Md5() = default;

void Md5::update(std::span<const std::uint8_t> bytes) {
  EVP_DigestUpdate(ctx_.get(), bytes.data(), bytes.size());
}

void Md5::update(std::string_view text) { EVP_DigestUpdate(ctx_.get(), text.data(), text.size()); }

std::array<std::uint8_t, 16> Md5::finish() {
  std::array<std::uint8_t, 16> out{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx_.get(), out.data(), &len);
  return out;
}

std::string to_hex(std::span<const std::uint8_t> bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out.push_back(kDigits[b >> 4]);
    out.push_back(kDigits[b & 0xf]);
  }
  return out;
}

std::string md5_hex(std::string_view text) {
  Md5 md5;
  md5.update(text);
  return to_hex(md5.finish());
}

}  // namespace oxy
