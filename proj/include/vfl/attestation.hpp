#pragma once

// Software-simulated secure processor: PCR bank, exclusively-held
// attestation key, platform-root endorsement, runtime report signing.
//
// The attestation key lives only inside SecureProcessor and is never
// returned or serialized by any operation. PCR11 holds the launch-time
// code measurement; PCR23 accumulates one extend per attested record and
// is never reset. A monotonic counter makes any two reports from the same
// processor distinguishable.

#include <array>
#include <cstdint>
#include <memory>
#include <mutex>

#include <nlohmann/json.hpp>

#include "vfl/crypto.hpp"

namespace vfl {

inline constexpr std::size_t kPcrCount = 24;
inline constexpr std::size_t kPcrCode = 11;
inline constexpr std::size_t kPcrRuntime = 23;

struct PcrBank {
    std::array<Digest, kPcrCount> pcr{};  // all-zero at creation

    // pcr[idx] = H(0x03 || pcr[idx] || v)
    void extend(std::size_t idx, const Digest& v);
};

struct AttestationReport {
    Digest pcr11;
    Digest pcr23;
    Digest edr_digest;
    std::uint64_t counter = 0;
    Signature sig;          // attestation key over the canonical field encoding
    VerifyKey att_pub;      // attestation verify key, endorsed below
    Signature endorsement;  // platform root over (0x05 || att_pub)
    std::string scheme{kSignatureScheme};

    nlohmann::json to_json() const;
    // Throws on structurally malformed JSON; bad signatures are left to verify_report.
    static AttestationReport from_json(const nlohmann::json& j);

    bool operator==(const AttestationReport&) const = default;
};

class SecureProcessor {
public:
    struct Endorsement {
        VerifyKey att_pub;
        Signature sig;
    };

    // Fresh processor: all-zero PCRs, attestation key derived from seed,
    // endorsement signed by the platform root.
    static std::unique_ptr<SecureProcessor> create(const KeyPair& platform_root,
                                                   const KeyPair::Seed& seed);

    // Launch-time code measurement into PCR11. Allowed exactly once,
    // before the first attest. Throws MeasureAfterAttest otherwise.
    void measure_code(const Digest& code);

    // Extends PCR23 with the record digest, bumps the counter, signs.
    // Throws NotMeasured before measure_code.
    AttestationReport attest(const Digest& edr_digest);

    const PcrBank& pcrs() const { return pcr_; }
    const Endorsement& endorsement() const { return endorsement_; }

private:
    SecureProcessor(KeyPair key, Endorsement cert);

    std::mutex mu_;
    PcrBank pcr_;
    const KeyPair attestation_key_;  // never leaves this object
    Endorsement endorsement_;
    std::uint64_t counter_ = 0;
    bool measured_ = false;
    bool attested_ = false;
};

// Stateless: true iff the endorsement chain (platform root -> attestation
// key) and the report signature both verify. Malformed input returns false.
bool verify_report(const AttestationReport& report, const VerifyKey& platform_root_pub);

// Canonical byte strings covered by the two signatures above.
Bytes report_signing_bytes(const AttestationReport& report);
Bytes endorsement_signing_bytes(const VerifyKey& att_pub);

}  // namespace vfl
