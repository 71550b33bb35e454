#pragma once

// EDG construction and claim auditing.
//
// The graph holds one vertex per verified record; records whose report or
// endorsement fails verification are rejected and surface separately. An
// edge producer->consumer exists where the producer's output map and the
// consumer's input map share (label, digest) pairs and the rounds are
// compatible (consumer round equals the producer round or follows it by
// one); the shared pairs are the edge label. The round filter keeps an
// unchanged model from creating edges across distant rounds; Alg-style
// pure hash intersection is recovered by the naive oracle in the tests.
//
// Claims:
//   1  every vertex's code measurement is allowlisted for its task kind
//   2  every pipeline-produced ("model:*") input is supplied by an edge
//   3  the round shape is intact: expected vertices present, aggregation
//      consumed P updates, and existing edges originate from the right
//      stage of the right round
//   4  each provider's training dataset commitment is constant and equals
//      the registered (or sanitizer-produced) commitment
//   5  when sanitization is required, every training commitment was
//      produced by a verified sanitization record of that provider
//
// audit() is a pure function of the record set and the job: store order
// never changes the report.

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "vfl/edr.hpp"
#include "vfl/job.hpp"

namespace vfl {

struct EdgVertex {
    EndorsedEdr record;
    std::string vid;  // content-addressed: <kind>:<participant>:r<round>:<hash12>

    const Edr& edr() const { return record.edr; }
};

struct EdgEdge {
    std::size_t producer = 0;  // indices into Edg::vertices
    std::size_t consumer = 0;
    std::map<std::string, Digest> label;  // the shared (label, digest) pairs
};

struct Edg {
    std::vector<EdgVertex> vertices;
    std::vector<EdgEdge> edges;
};

struct RejectedRecord {
    std::string issuer_id;
    std::string exclave_id;
    std::string rid;  // content-addressed id of the rejected envelope
};

// Verifies every record, sorts survivors into a deterministic vertex
// order, and connects them. Never throws on bad records; they land in the
// rejected list.
std::pair<Edg, std::vector<RejectedRecord>> build_edg(
    const std::vector<EndorsedEdr>& records, const VerifyKey& platform_root_pub,
    const std::map<std::string, VerifyKey>& issuer_registry);

// Hash-indexed edge construction over an already-verified vertex list.
// The acceptance suite checks it against a naive quadratic scan.
std::vector<EdgEdge> build_edges_indexed(const std::vector<EdgVertex>& vertices);

struct AuditPolicy {
    std::map<TaskKind, std::set<Digest>> code_allowlist;
    std::vector<std::string> providers;
    std::string model_provider;
    int rounds = 1;
    bool sanitization_required = false;
    std::map<std::string, Digest> registered_commitments;
    Digest initial_model_digest;

    static AuditPolicy derive(const JobDescription& job);
};

struct Evidence {
    std::string subject;  // vertex/edge identifier, or "edg" for whole-graph findings
    std::string reason;

    auto operator<=>(const Evidence&) const = default;
};

struct ClaimVerdict {
    int id = 0;
    bool pass = true;
    std::vector<Evidence> evidence;      // non-empty iff fail
    std::set<std::string> blamed;        // participant ids
};

ClaimVerdict check_claim1(const Edg& edg, const AuditPolicy& policy);
ClaimVerdict check_claim2(const Edg& edg, const AuditPolicy& policy);
ClaimVerdict check_claim3(const Edg& edg, const AuditPolicy& policy);
ClaimVerdict check_claim4(const Edg& edg, const AuditPolicy& policy);
ClaimVerdict check_claim5(const Edg& edg, const AuditPolicy& policy);

struct AuditReport {
    std::vector<ClaimVerdict> claims;
    std::vector<RejectedRecord> rejected;
    std::size_t vertex_count = 0;
    std::size_t edge_count = 0;

    bool all_pass() const;
    const ClaimVerdict& claim(int id) const;
    nlohmann::json to_json() const;
};

AuditReport audit(const std::vector<EndorsedEdr>& snapshot, const JobDescription& job);

// Deterministic Graphviz rendering of the graph (dataflow direction).
std::string export_dot(const Edg& edg);

}  // namespace vfl
