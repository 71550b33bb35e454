#pragma once

// The simulated exclave: manager, task executor and runtime attestor in
// one in-process component. The orchestrator can only interact through
// the request/response boundary below; that boundary is the simulation of
// memory isolation. One exclave executes one task kind; every response
// carries an endorsed EDR whose input/output maps are hashes of exactly
// the bytes that crossed the boundary.
//
// Label vocabulary (part of the external interface, see docs/formats.md):
//   "model:global"              global model (model_update output, train input)
//   "model:diff:<participant>"  local weight diff (train output, dp input)
//   "model:dp:<participant>"    DP-protected diff (dp output, aggregate input)
//   "model:agg_diff"            aggregated diff (aggregate output, model_update input)
//   "dataset:commitment"        dataset commitment (sanitize in/out, train input)
//   "params:<kind>"             task parameters

#include <map>
#include <memory>
#include <optional>
#include <string>

#include "vfl/attestation.hpp"
#include "vfl/dataset.hpp"
#include "vfl/edr.hpp"
#include "vfl/tasks.hpp"

namespace vfl {

struct DatasetRef {
    std::string image_path;
    DataCommitment expected;
};

struct TaskRequest {
    TaskKind kind = TaskKind::train;
    int round = 0;
    // Every payload label lands in the EDR inputs as hash_bytes(payload).
    std::map<std::string, Bytes> payloads;
    // train/sanitize only; the mounted commitment is recorded as input
    // "dataset:commitment".
    std::optional<DatasetRef> dataset;
    // sanitize only: where to write the filtered image.
    std::optional<std::string> sanitized_image_path;

    nlohmann::json to_json() const;
    static TaskRequest from_json(const nlohmann::json& j);
};

struct TaskResponse {
    std::map<std::string, Bytes> payloads;  // hashed into the EDR outputs
    std::optional<DatasetRef> dataset_out;  // sanitize: the filtered image
    EndorsedEdr endorsed_edr;

    nlohmann::json to_json() const;
};

struct ExclaveConfig {
    std::string exclave_id;
    std::string participant_id;
    TaskKind task_kind = TaskKind::train;
    Bytes code_image;
    KeyPair issuer;  // participant's long-term endorsement key
    KeyPair::Seed sp_seed{};
};

// Canonical code image for a task kind (one zero-padded block). Its
// Merkle root is the allowlisted code measurement for that kind.
Bytes code_image_for(TaskKind kind);

class Exclave {
public:
    // Launch: creates the secure processor and measures the code image's
    // Merkle root into PCR11.
    Exclave(ExclaveConfig config, const KeyPair& platform_root);

    // Executes one task and returns its outputs plus the endorsed EDR.
    // A failed task emits no EDR; errors propagate to the caller.
    TaskResponse handle_task(const TaskRequest& request);

    const Digest& code_measurement() const { return code_root_; }
    const std::string& exclave_id() const { return config_.exclave_id; }
    const std::string& participant_id() const { return config_.participant_id; }
    TaskKind task_kind() const { return config_.task_kind; }
    Digest pcr11() const { return sp_->pcrs().pcr[kPcrCode]; }

private:
    ExclaveConfig config_;
    Digest code_root_;
    std::unique_ptr<SecureProcessor> sp_;
};

}  // namespace vfl
