#include "vfl/crypto.hpp"

#include <openssl/evp.h>

#include <fstream>
#include <stdexcept>

namespace vfl {

namespace {

constexpr char kHexDigits[] = "0123456789abcdef";

int hex_value(char c) {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
}

constexpr char kB64Digits[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}

struct EvpPkeyDeleter {
    void operator()(EVP_PKEY* p) const { EVP_PKEY_free(p); }
};
using PkeyPtr = std::unique_ptr<EVP_PKEY, EvpPkeyDeleter>;

struct EvpMdCtxDeleter {
    void operator()(EVP_MD_CTX* c) const { EVP_MD_CTX_free(c); }
};
using MdCtxPtr = std::unique_ptr<EVP_MD_CTX, EvpMdCtxDeleter>;

PkeyPtr private_key_from_seed(const KeyPair::Seed& seed) {
    PkeyPtr pkey(EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr,
                                              seed.data(), seed.size()));
    if (!pkey) throw std::runtime_error("ed25519 private key construction failed");
    return pkey;
}

}  // namespace

std::string hex_encode(std::span<const std::uint8_t> data) {
    std::string out;
    out.reserve(data.size() * 2);
    for (std::uint8_t b : data) {
        out.push_back(kHexDigits[b >> 4]);
        out.push_back(kHexDigits[b & 0x0f]);
    }
    return out;
}

Bytes hex_decode(std::string_view hex) {
    if (hex.size() % 2 != 0) throw std::invalid_argument("hex string has odd length");
    Bytes out;
    out.reserve(hex.size() / 2);
    for (std::size_t i = 0; i < hex.size(); i += 2) {
        int hi = hex_value(hex[i]);
        int lo = hex_value(hex[i + 1]);
        if (hi < 0 || lo < 0) throw std::invalid_argument("invalid hex character");
        out.push_back(static_cast<std::uint8_t>((hi << 4) | lo));
    }
    return out;
}

std::string base64_encode(std::span<const std::uint8_t> data) {
    std::string out;
    out.reserve((data.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 3 <= data.size(); i += 3) {
        std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
        out.push_back(kB64Digits[(v >> 18) & 0x3f]);
        out.push_back(kB64Digits[(v >> 12) & 0x3f]);
        out.push_back(kB64Digits[(v >> 6) & 0x3f]);
        out.push_back(kB64Digits[v & 0x3f]);
    }
    if (i + 1 == data.size()) {
        std::uint32_t v = data[i] << 16;
        out.push_back(kB64Digits[(v >> 18) & 0x3f]);
        out.push_back(kB64Digits[(v >> 12) & 0x3f]);
        out += "==";
    } else if (i + 2 == data.size()) {
        std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
        out.push_back(kB64Digits[(v >> 18) & 0x3f]);
        out.push_back(kB64Digits[(v >> 12) & 0x3f]);
        out.push_back(kB64Digits[(v >> 6) & 0x3f]);
        out.push_back('=');
    }
    return out;
}

Bytes base64_decode(std::string_view b64) {
    if (b64.size() % 4 != 0) throw std::invalid_argument("base64 length not a multiple of 4");
    Bytes out;
    out.reserve(b64.size() / 4 * 3);
    for (std::size_t i = 0; i < b64.size(); i += 4) {
        int pad = 0;
        std::uint32_t v = 0;
        for (int j = 0; j < 4; ++j) {
            char c = b64[i + j];
            if (c == '=') {
                // Padding only allowed in the last two positions of the final group.
                if (i + 4 != b64.size() || j < 2) throw std::invalid_argument("bad base64 padding");
                ++pad;
                v <<= 6;
            } else {
                if (pad > 0) throw std::invalid_argument("bad base64 padding");
                int d = b64_value(c);
                if (d < 0) throw std::invalid_argument("invalid base64 character");
                v = (v << 6) | static_cast<std::uint32_t>(d);
            }
        }
        out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(v & 0xff));
    }
    return out;
}

Bytes read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open file: " + path);
    Bytes data((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    if (f.bad()) throw std::runtime_error("read failed: " + path);
    return data;
}

void write_file(const std::string& path, std::span<const std::uint8_t> data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot create file: " + path);
    f.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size()));
    if (!f) throw std::runtime_error("write failed: " + path);
}

void write_file(const std::string& path, std::string_view text) {
    write_file(path, std::span<const std::uint8_t>(
                         reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Digest Digest::from_hex(std::string_view hex) {
    if (hex.size() != 64) throw std::invalid_argument("digest hex must be 64 chars");
    Bytes raw = hex_decode(hex);
    Digest d;
    std::copy(raw.begin(), raw.end(), d.bytes.begin());
    return d;
}

bool Digest::is_zero() const {
    for (auto b : bytes)
        if (b != 0) return false;
    return true;
}

Sha256::Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(static_cast<EVP_MD_CTX*>(ctx_), EVP_sha256(), nullptr) != 1)
        throw std::runtime_error("SHA-256 init failed");
}

Sha256::~Sha256() { EVP_MD_CTX_free(static_cast<EVP_MD_CTX*>(ctx_)); }

Sha256& Sha256::update(std::span<const std::uint8_t> data) {
    if (!data.empty() &&
        EVP_DigestUpdate(static_cast<EVP_MD_CTX*>(ctx_), data.data(), data.size()) != 1)
        throw std::runtime_error("SHA-256 update failed");
    return *this;
}

Sha256& Sha256::update(std::uint8_t byte) {
    return update(std::span<const std::uint8_t>(&byte, 1));
}

Digest Sha256::finish() {
    Digest d;
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(static_cast<EVP_MD_CTX*>(ctx_), d.bytes.data(), &len) != 1 ||
        len != d.bytes.size())
        throw std::runtime_error("SHA-256 final failed");
    return d;
}

Digest hash_bytes(std::span<const std::uint8_t> data) {
    Sha256 h;
    h.update(data);
    return h.finish();
}

Digest hash_bytes(std::string_view data) {
    return hash_bytes(std::span<const std::uint8_t>(
        reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

KeyPair KeyPair::from_seed(const Seed& seed) {
    KeyPair kp{Uninitialized{}};
    kp.seed_ = seed;
    PkeyPtr pkey = private_key_from_seed(seed);
    std::size_t publen = kp.verify_key_.bytes.size();
    if (EVP_PKEY_get_raw_public_key(pkey.get(), kp.verify_key_.bytes.data(), &publen) != 1 ||
        publen != kp.verify_key_.bytes.size())
        throw std::runtime_error("ed25519 public key extraction failed");
    return kp;
}

Signature KeyPair::sign(std::span<const std::uint8_t> msg) const {
    PkeyPtr pkey = private_key_from_seed(seed_);
    MdCtxPtr ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestSignInit(ctx.get(), nullptr, nullptr, nullptr, pkey.get()) != 1)
        throw std::runtime_error("ed25519 sign init failed");
    Signature sig(64);
    std::size_t siglen = sig.size();
    static const std::uint8_t kEmpty = 0;
    const std::uint8_t* data = msg.empty() ? &kEmpty : msg.data();
    if (EVP_DigestSign(ctx.get(), sig.data(), &siglen, data, msg.size()) != 1 || siglen != 64)
        throw std::runtime_error("ed25519 sign failed");
    return sig;
}

Signature sign(const KeyPair& key, std::span<const std::uint8_t> msg) {
    return key.sign(msg);
}

bool verify(const VerifyKey& key, std::span<const std::uint8_t> msg, const Signature& sig) {
    if (sig.size() != 64) return false;
    PkeyPtr pkey(EVP_PKEY_new_raw_public_key(EVP_PKEY_ED25519, nullptr, key.bytes.data(),
                                             key.bytes.size()));
    if (!pkey) return false;
    MdCtxPtr ctx(EVP_MD_CTX_new());
    if (!ctx || EVP_DigestVerifyInit(ctx.get(), nullptr, nullptr, nullptr, pkey.get()) != 1)
        return false;
    static const std::uint8_t kEmpty = 0;
    const std::uint8_t* data = msg.empty() ? &kEmpty : msg.data();
    return EVP_DigestVerify(ctx.get(), sig.data(), sig.size(), data, msg.size()) == 1;
}

}  // namespace vfl
