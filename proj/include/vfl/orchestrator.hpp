#pragma once

// The untrusted FL framework stand-in. It parses the job, launches one
// exclave per (participant, task kind), drives rounds through connectors
// and moves payloads between exclaves. It never signs anything: every
// deviation it injects must be caught by the auditor from the stored EDRs.
//
// Faithful round structure (round r, providers k = 1..P):
//   model_update output of r-1 (or the initial model)
//     -> train_k -> dp_k -> aggregate (all k) -> model_update
// With a sanitize stage, each provider's sanitize exclave runs once at
// round -1 and training consumes the sanitized image.

#include <optional>

#include "vfl/exclave.hpp"
#include "vfl/job.hpp"

namespace vfl {

struct RunOptions {
    bool parallel_providers = true;
};

// Pass-through to Exclave::handle_task; the unique interception point the
// deviation harness wraps.
class ExclaveConnector {
public:
    explicit ExclaveConnector(Exclave& exclave) : exclave_(&exclave) {}
    TaskResponse invoke(const TaskRequest& request) { return exclave_->handle_task(request); }
    Exclave& exclave() { return *exclave_; }

private:
    Exclave* exclave_;
};

// Executes the job, appending every endorsed EDR to `store`, and returns
// the final global model. Deviations, when given, perturb exactly the
// targeted steps. Exclave failures propagate as exceptions.
ModelVector run_job(const JobDescription& job, EdrStore& store,
                    const DeviationScript* deviations = nullptr,
                    const RunOptions& options = {});

// Deviation primitives, exposed for tests.

// Flips the last payload byte: the payload still parses, its hash does not
// match the producer's recorded output.
void tamper_payload(Bytes& payload);

// Re-signs a mutated copy of the record with a fresh attestation key that
// no platform root ever endorsed. The result always fails edr_verify.
EndorsedEdr forge_record(const EndorsedEdr& honest, const KeyPair& issuer);

}  // namespace vfl
