#pragma once

// Hashing and signatures used by every other module.
//
// Hash: SHA-256. All multi-part hashes use a single-byte domain prefix
// (see vfl::domain) so that concatenated inputs can never be confused.
// Signatures: Ed25519 (deterministic, 128-bit security). The scheme id
// "ed25519" is embedded in every signed envelope.

#include <array>
#include <compare>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>

#include "vfl/bytes.hpp"

namespace vfl {

inline constexpr std::string_view kSignatureScheme = "ed25519";

// Domain-separation prefixes for multi-part hashing and signing.
namespace domain {
inline constexpr std::uint8_t kMerkleLeaf = 0x00;   // H(0x00 || block)
inline constexpr std::uint8_t kMerkleNode = 0x01;   // H(0x01 || left || right)
inline constexpr std::uint8_t kCommitment = 0x02;   // H(0x02 || salt || root)
inline constexpr std::uint8_t kPcrExtend = 0x03;    // H(0x03 || pcr || value)
inline constexpr std::uint8_t kReportSig = 0x04;    // sign(0x04 || report fields)
inline constexpr std::uint8_t kEndorseSig = 0x05;   // sign(0x05 || attestation pub)
}  // namespace domain

struct Digest {
    std::array<std::uint8_t, 32> bytes{};

    std::string hex() const { return hex_encode(bytes); }
    // Throws std::invalid_argument unless exactly 64 lowercase/uppercase hex chars.
    static Digest from_hex(std::string_view hex);

    bool is_zero() const;
    auto operator<=>(const Digest&) const = default;
};

Digest hash_bytes(std::span<const std::uint8_t> data);
Digest hash_bytes(std::string_view data);

// Incremental SHA-256, for domain-prefixed multi-part hashing.
class Sha256 {
public:
    Sha256();
    ~Sha256();
    Sha256(const Sha256&) = delete;
    Sha256& operator=(const Sha256&) = delete;

    Sha256& update(std::span<const std::uint8_t> data);
    Sha256& update(std::uint8_t byte);
    Sha256& update(const Digest& d) { return update(d.bytes); }
    Digest finish();

private:
    void* ctx_;  // EVP_MD_CTX
};

struct VerifyKey {
    std::array<std::uint8_t, 32> bytes{};
    auto operator<=>(const VerifyKey&) const = default;
};

// Ed25519 signatures are 64 bytes; carried as a vector so that malformed
// envelopes decode into something verify() can reject instead of throwing.
using Signature = Bytes;

class KeyPair {
public:
    using Seed = std::array<std::uint8_t, 32>;

    // The all-zero seed is as valid as any other; the default pair exists so
    // config structs stay aggregate-friendly.
    KeyPair() : KeyPair(from_seed(Seed{})) {}
    static KeyPair from_seed(const Seed& seed);

    const VerifyKey& verify_key() const { return verify_key_; }
    const Seed& seed() const { return seed_; }

    Signature sign(std::span<const std::uint8_t> msg) const;

private:
    struct Uninitialized {};
    explicit KeyPair(Uninitialized) {}
    Seed seed_{};
    VerifyKey verify_key_{};
};

inline KeyPair keygen(const KeyPair::Seed& seed) { return KeyPair::from_seed(seed); }

Signature sign(const KeyPair& key, std::span<const std::uint8_t> msg);
// Never throws: malformed keys/signatures return false.
bool verify(const VerifyKey& key, std::span<const std::uint8_t> msg, const Signature& sig);

}  // namespace vfl
