#pragma once

// The agreed protocol (JobDescription) and the deviation-injection script
// the harness uses to play the adversary. Both are plain JSON files;
// schemas are in docs/formats.md.
//
// Key material note: because this artifact simulates every participant in
// one process, the job file carries the issuer and platform-root seeds
// directly. Verify keys are derived from them, so the same file serves as
// the auditor's issuer registry. Real key distribution is out of scope.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vfl/crypto.hpp"
#include "vfl/edr.hpp"
#include "vfl/tasks.hpp"

namespace vfl {

struct ProviderSpec {
    std::string participant_id;
    std::string dataset_image;      // path to the packed image
    Digest registered_commitment;   // the provider's non-revocable commitment
    KeyPair::Seed issuer_seed{};
};

struct JobDescription {
    std::string job_id;
    int rounds = 1;
    int model_dim = 1;
    std::uint64_t model_seed = 0;
    Hyperparams hp;
    DpParams dp;
    std::string prng_id{kPrngId};
    std::vector<std::string> pipeline;  // task kinds, optionally led by "sanitize"
    std::vector<ProviderSpec> providers;
    std::string model_provider_id;
    KeyPair::Seed model_provider_seed{};
    KeyPair::Seed platform_root_seed{};
    std::map<TaskKind, std::vector<Digest>> code_allowlist;
    std::vector<std::string> denylist;  // sanitize stage patterns

    bool sanitize_enabled() const;
    KeyPair platform_root() const { return keygen(platform_root_seed); }
    std::map<std::string, VerifyKey> issuer_registry() const;
    KeyPair issuer_for(const std::string& participant_id) const;
    ModelVector initial_model() const;

    // Structural checks: unique ids, ids without ':', supported pipeline,
    // non-empty allowlist per pipeline stage, the pinned PRNG id.
    void validate() const;

    nlohmann::json to_json() const;
    static JobDescription from_json(const nlohmann::json& j);
    static JobDescription load(const std::string& path);
    void save(const std::string& path) const;
};

// Default allowlist: the canonical code image per task kind in the pipeline.
std::map<TaskKind, std::vector<Digest>> default_code_allowlist(bool with_sanitize);

enum class DeviationKind {
    forge_edr,
    transit_tamper,
    skip_dp,
    drop_update,
    dataset_swap,
    skip_sanitization,
    code_tamper,
};

std::string_view to_string(DeviationKind kind);
DeviationKind deviation_kind_from_string(std::string_view s);

struct Deviation {
    DeviationKind kind = DeviationKind::skip_dp;
    std::string participant;
    int round = 0;             // forge/tamper/skip_dp/drop: the target round;
                               // dataset_swap: first affected round
    std::string leg = "dp";    // transit_tamper: "global", "diff" or "dp"
    TaskKind task = TaskKind::train;  // forge_edr / code_tamper target kind
};

struct DeviationScript {
    std::vector<Deviation> injections;

    // Throws Error when a target participant/round/kind does not exist in the job.
    void validate(const JobDescription& job) const;

    nlohmann::json to_json() const;
    static DeviationScript from_json(const nlohmann::json& j);
    static DeviationScript load(const std::string& path);
    void save(const std::string& path) const;
};

}  // namespace vfl
