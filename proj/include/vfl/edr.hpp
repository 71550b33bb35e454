#pragma once

// Exclave data records: construction, canonical serialization, issuer
// endorsement, verification, and the append-only store.
//
// Canonical form is UTF-8 JSON with keys sorted lexicographically at every
// nesting level, no whitespace, digests as lowercase hex, integers as
// unpadded decimal. The record digest is SHA-256 over those bytes, and is
// what the secure processor attests and the issuer signs.

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vfl/attestation.hpp"
#include "vfl/crypto.hpp"

namespace vfl {

enum class TaskKind { sanitize, train, dp, aggregate, model_update };

std::string_view to_string(TaskKind kind);
TaskKind task_kind_from_string(std::string_view s);  // throws Error on unknown kind

struct Edr {
    std::string exclave_id;
    std::string participant_id;
    TaskKind task_kind = TaskKind::train;
    int round = 0;  // >= 0; -1 for pre-training sanitization
    std::map<std::string, Digest> inputs;
    Digest code;
    std::map<std::string, Digest> outputs;

    bool operator==(const Edr&) const = default;
};

// Throws Error unless labels are non-empty "<role>:<property>" strings,
// both maps are non-empty, and round >= -1.
void edr_validate(const Edr& edr);

Bytes edr_canonicalize(const Edr& edr);
Digest edr_digest(const Edr& edr);

struct EndorsedEdr {
    Edr edr;
    AttestationReport report;
    std::string issuer_id;
    Signature issuer_sig;  // issuer key over the 32 EDR digest bytes

    nlohmann::json to_json() const;
    static EndorsedEdr from_json(const nlohmann::json& j);

    bool operator==(const EndorsedEdr&) const = default;
};

// Throws DigestMismatch unless report.edr_digest covers this EDR.
EndorsedEdr edr_endorse(const Edr& edr, const AttestationReport& report,
                        const KeyPair& issuer, const std::string& issuer_id);

// True iff the report verifies, covers this EDR, and the issuer signature
// verifies under the registered key for issuer_id. Never throws.
bool edr_verify(const EndorsedEdr& e, const VerifyKey& platform_root_pub,
                const std::map<std::string, VerifyKey>& issuer_registry);

// Append-only record log. Appends are total-ordered and thread-safe;
// snapshots are stable copies. Persisted as one canonical-JSON envelope
// per line (edrs.ndjson); line order carries no semantic weight.
class EdrStore {
public:
    EdrStore() = default;
    EdrStore(EdrStore&& other) noexcept {
        std::lock_guard lock(other.mu_);
        records_ = std::move(other.records_);
    }

    std::size_t append(EndorsedEdr e);
    std::vector<EndorsedEdr> snapshot() const;
    std::size_t size() const;

    void save(const std::string& path) const;
    static EdrStore load(const std::string& path);

private:
    mutable std::mutex mu_;
    std::vector<EndorsedEdr> records_;
};

}  // namespace vfl
