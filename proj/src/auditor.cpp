#include "vfl/auditor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

#include "vfl/errors.hpp"

namespace vfl {

namespace {

std::string envelope_id(const EndorsedEdr& record) {
    return hash_bytes(to_bytes(record.to_json().dump())).hex().substr(0, 12);
}

std::string vertex_id(const EndorsedEdr& record) {
    return std::string(to_string(record.edr.task_kind)) + ":" + record.edr.participant_id +
           ":r" + std::to_string(record.edr.round) + ":" + envelope_id(record);
}

bool is_model_label(const std::string& label) { return label.starts_with("model:"); }

// "model:diff:<k>" / "model:dp:<k>" carry the producing provider in the label.
std::optional<std::string> provider_suffix(const std::string& label) {
    for (std::string_view prefix : {"model:diff:", "model:dp:"})
        if (label.starts_with(prefix) && label.size() > prefix.size())
            return label.substr(prefix.size());
    return std::nullopt;
}

// The participant expected to have produced data under this label.
std::string expected_producer(const std::string& label, const AuditPolicy& policy) {
    if (auto k = provider_suffix(label)) return *k;
    return policy.model_provider;  // model:global, model:agg_diff
}

struct PairKey {
    std::string label;
    Digest digest;
    bool operator==(const PairKey&) const = default;
};

struct PairKeyHash {
    std::size_t operator()(const PairKey& k) const {
        std::size_t h = std::hash<std::string>{}(k.label);
        std::size_t d = 0;
        for (int i = 0; i < 8; ++i) d = (d << 8) | k.digest.bytes[i];
        return h ^ d;
    }
};

bool rounds_compatible(int producer_round, int consumer_round) {
    return consumer_round == producer_round || consumer_round == producer_round + 1;
}

// Incoming edges per consumer index.
std::vector<std::vector<const EdgEdge*>> incoming_index(const Edg& edg) {
    std::vector<std::vector<const EdgEdge*>> in(edg.vertices.size());
    for (const auto& e : edg.edges) in[e.consumer].push_back(&e);
    return in;
}

void sort_evidence(ClaimVerdict& v) {
    std::sort(v.evidence.begin(), v.evidence.end());
    v.evidence.erase(std::unique(v.evidence.begin(), v.evidence.end()), v.evidence.end());
    v.pass = v.evidence.empty();
}

}  // namespace

std::pair<Edg, std::vector<RejectedRecord>> build_edg(
    const std::vector<EndorsedEdr>& records, const VerifyKey& platform_root_pub,
    const std::map<std::string, VerifyKey>& issuer_registry) {
    Edg edg;
    std::vector<RejectedRecord> rejected;
    for (const auto& r : records) {
        if (edr_verify(r, platform_root_pub, issuer_registry))
            edg.vertices.push_back(EdgVertex{r, vertex_id(r)});
        else
            rejected.push_back(RejectedRecord{r.issuer_id, r.edr.exclave_id, envelope_id(r)});
    }
    // Deterministic vertex order regardless of store order.
    std::sort(edg.vertices.begin(), edg.vertices.end(),
              [](const EdgVertex& a, const EdgVertex& b) { return a.vid < b.vid; });
    std::sort(rejected.begin(), rejected.end(),
              [](const RejectedRecord& a, const RejectedRecord& b) { return a.rid < b.rid; });
    edg.edges = build_edges_indexed(edg.vertices);
    return {std::move(edg), std::move(rejected)};
}

std::vector<EdgEdge> build_edges_indexed(const std::vector<EdgVertex>& vertices) {
    std::unordered_map<PairKey, std::vector<std::size_t>, PairKeyHash> producers;
    for (std::size_t i = 0; i < vertices.size(); ++i)
        for (const auto& [label, digest] : vertices[i].edr().outputs)
            producers[PairKey{label, digest}].push_back(i);

    // Collect shared pairs per (producer, consumer).
    std::map<std::pair<std::size_t, std::size_t>, std::map<std::string, Digest>> found;
    for (std::size_t c = 0; c < vertices.size(); ++c) {
        for (const auto& [label, digest] : vertices[c].edr().inputs) {
            auto it = producers.find(PairKey{label, digest});
            if (it == producers.end()) continue;
            for (std::size_t p : it->second) {
                if (p == c) continue;
                if (!rounds_compatible(vertices[p].edr().round, vertices[c].edr().round))
                    continue;
                found[{p, c}].emplace(label, digest);
            }
        }
    }

    std::vector<EdgEdge> edges;
    edges.reserve(found.size());
    for (auto& [pc, label] : found)
        edges.push_back(EdgEdge{pc.first, pc.second, std::move(label)});
    return edges;
}

AuditPolicy AuditPolicy::derive(const JobDescription& job) {
    AuditPolicy p;
    for (const auto& [kind, digests] : job.code_allowlist)
        p.code_allowlist[kind] = std::set<Digest>(digests.begin(), digests.end());
    for (const auto& prov : job.providers) {
        p.providers.push_back(prov.participant_id);
        p.registered_commitments[prov.participant_id] = prov.registered_commitment;
    }
    p.model_provider = job.model_provider_id;
    p.rounds = job.rounds;
    p.sanitization_required = job.sanitize_enabled();
    p.initial_model_digest = hash_bytes(serialize_model(job.initial_model()));
    return p;
}

ClaimVerdict check_claim1(const Edg& edg, const AuditPolicy& policy) {
    ClaimVerdict v;
    v.id = 1;
    for (const auto& vert : edg.vertices) {
        auto it = policy.code_allowlist.find(vert.edr().task_kind);
        if (it == policy.code_allowlist.end() || !it->second.count(vert.edr().code)) {
            v.evidence.push_back(
                {vert.vid, "code measurement " + vert.edr().code.hex().substr(0, 12) +
                               " is not allowlisted for task kind " +
                               std::string(to_string(vert.edr().task_kind))});
            v.blamed.insert(vert.record.issuer_id);
        }
    }
    sort_evidence(v);
    return v;
}

ClaimVerdict check_claim2(const Edg& edg, const AuditPolicy& policy) {
    ClaimVerdict v;
    v.id = 2;
    if (edg.vertices.empty()) {
        v.evidence.push_back({"edg", "no verified records: transmission cannot be confirmed"});
        sort_evidence(v);
        return v;
    }
    auto incoming = incoming_index(edg);
    for (std::size_t c = 0; c < edg.vertices.size(); ++c) {
        const EdgVertex& vert = edg.vertices[c];
        for (const auto& [label, digest] : vert.edr().inputs) {
            if (!is_model_label(label)) continue;
            if (label == "model:global" && vert.edr().round == 0 &&
                digest == policy.initial_model_digest)
                continue;  // the agreed initial model has no producing exclave
            bool supplied = false;
            for (const EdgEdge* e : incoming[c]) {
                auto it = e->label.find(label);
                if (it != e->label.end() && it->second == digest) {
                    supplied = true;
                    break;
                }
            }
            if (!supplied) {
                v.evidence.push_back(
                    {vert.vid, "input " + label + " matches no verified producer output"});
                // Transit blame names both ends of the broken channel.
                v.blamed.insert(expected_producer(label, policy));
                v.blamed.insert(vert.edr().participant_id);
            }
        }
    }
    sort_evidence(v);
    return v;
}

ClaimVerdict check_claim3(const Edg& edg, const AuditPolicy& policy) {
    ClaimVerdict v;
    v.id = 3;
    auto incoming = incoming_index(edg);

    // Presence of the expected training-pipeline vertices, per round.
    auto count_of = [&](TaskKind kind, int round, const std::string& participant) {
        std::size_t n = 0;
        for (const auto& vert : edg.vertices)
            if (vert.edr().task_kind == kind && vert.edr().round == round &&
                (participant.empty() || vert.edr().participant_id == participant))
                ++n;
        return n;
    };
    for (int r = 0; r < policy.rounds; ++r) {
        for (const auto& k : policy.providers) {
            if (count_of(TaskKind::train, r, k) == 0) {
                v.evidence.push_back({"edg", "no verified train record for " + k + " in round " +
                                                 std::to_string(r)});
                v.blamed.insert(k);
            }
            if (count_of(TaskKind::dp, r, k) == 0) {
                v.evidence.push_back({"edg", "no verified dp record for " + k + " in round " +
                                                 std::to_string(r)});
                v.blamed.insert(k);
            }
        }
        if (count_of(TaskKind::aggregate, r, "") == 0) {
            v.evidence.push_back({"edg", "no verified aggregate record in round " +
                                             std::to_string(r)});
            v.blamed.insert(policy.model_provider);
        }
        if (count_of(TaskKind::model_update, r, "") == 0) {
            v.evidence.push_back({"edg", "no verified model_update record in round " +
                                             std::to_string(r)});
            v.blamed.insert(policy.model_provider);
        }
    }

    // Where an input edge exists, it must come from the right stage of the
    // right round. Inputs without any edge are claim 2's finding, not ours.
    auto existing_origin_ok = [&](std::size_t consumer, const std::string& label,
                                  const Digest& digest, TaskKind want_kind, int want_round,
                                  const std::string& want_participant,
                                  const EdgVertex*& offending) {
        bool any = false;
        offending = nullptr;
        for (const EdgEdge* e : incoming[consumer]) {
            auto it = e->label.find(label);
            if (it == e->label.end() || it->second != digest) continue;
            const EdgVertex& prod = edg.vertices[e->producer];
            any = true;
            if (prod.edr().task_kind == want_kind && prod.edr().round == want_round &&
                (want_participant.empty() || prod.edr().participant_id == want_participant))
                return true;
            offending = &prod;
        }
        return !any;  // no edge at all: not a claim-3 finding
    };

    const std::size_t expected_updates = policy.providers.size();
    for (std::size_t c = 0; c < edg.vertices.size(); ++c) {
        const EdgVertex& vert = edg.vertices[c];
        const Edr& edr = vert.edr();
        const int r = edr.round;
        const EdgVertex* offending = nullptr;

        switch (edr.task_kind) {
            case TaskKind::aggregate: {
                std::size_t model_inputs = 0;
                std::set<std::string> contributing;
                for (const auto& [label, digest] : edr.inputs) {
                    if (!is_model_label(label)) continue;
                    ++model_inputs;
                    std::string want = provider_suffix(label).value_or("");
                    if (!want.empty()) contributing.insert(want);
                    if (!existing_origin_ok(c, label, digest, TaskKind::dp, r, want, offending)) {
                        v.evidence.push_back(
                            {vert.vid,
                             "aggregation input " + label + " originates from a " +
                                 std::string(to_string(offending->edr().task_kind)) +
                                 " record instead of the provider's dp record of round " +
                                 std::to_string(r)});
                        v.blamed.insert(want.empty() ? offending->edr().participant_id : want);
                    }
                }
                if (model_inputs != expected_updates) {
                    v.evidence.push_back(
                        {vert.vid, "aggregation consumed " + std::to_string(model_inputs) +
                                       " model updates, expected " +
                                       std::to_string(expected_updates)});
                    for (const auto& k : policy.providers)
                        if (!contributing.count(k))
                            v.evidence.push_back(
                                {vert.vid, "no update from " + k + " among aggregation inputs"});
                    v.blamed.insert(policy.model_provider);
                }
                break;
            }
            case TaskKind::dp: {
                for (const auto& [label, digest] : edr.inputs) {
                    if (!is_model_label(label)) continue;
                    if (!existing_origin_ok(c, label, digest, TaskKind::train, r,
                                            edr.participant_id, offending)) {
                        v.evidence.push_back(
                            {vert.vid, "dp input " + label +
                                           " does not come from this provider's train record "
                                           "of round " +
                                           std::to_string(r)});
                        v.blamed.insert(edr.participant_id);
                    }
                }
                break;
            }
            case TaskKind::train:
            case TaskKind::model_update: {
                for (const auto& [label, digest] : edr.inputs) {
                    if (label == "model:global") {
                        if (r == 0 && digest == policy.initial_model_digest) continue;
                        if (!existing_origin_ok(c, label, digest, TaskKind::model_update, r - 1,
                                                "", offending)) {
                            v.evidence.push_back(
                                {vert.vid,
                                 "global model input is not the round-" + std::to_string(r - 1) +
                                     " model_update output"});
                            v.blamed.insert(policy.model_provider);
                        }
                    } else if (label == "model:agg_diff") {
                        if (!existing_origin_ok(c, label, digest, TaskKind::aggregate, r, "",
                                                offending)) {
                            v.evidence.push_back(
                                {vert.vid, "aggregated diff input is not the round-" +
                                               std::to_string(r) + " aggregation output"});
                            v.blamed.insert(policy.model_provider);
                        }
                    }
                }
                break;
            }
            case TaskKind::sanitize:
                break;  // claim 5 territory
        }
    }
    sort_evidence(v);
    return v;
}

namespace {

// Output commitments of a provider's verified sanitize vertices.
std::set<Digest> sanitizer_outputs(const Edg& edg, const std::string& provider) {
    std::set<Digest> out;
    for (const auto& vert : edg.vertices) {
        if (vert.edr().task_kind != TaskKind::sanitize ||
            vert.edr().participant_id != provider)
            continue;
        auto it = vert.edr().outputs.find("dataset:commitment");
        if (it != vert.edr().outputs.end()) out.insert(it->second);
    }
    return out;
}

}  // namespace

ClaimVerdict check_claim4(const Edg& edg, const AuditPolicy& policy) {
    ClaimVerdict v;
    v.id = 4;
    for (const auto& k : policy.providers) {
        std::map<Digest, std::vector<std::string>> seen;  // commitment -> vids
        bool any_train = false;
        for (const auto& vert : edg.vertices) {
            if (vert.edr().task_kind != TaskKind::train || vert.edr().participant_id != k)
                continue;
            any_train = true;
            auto it = vert.edr().inputs.find("dataset:commitment");
            if (it == vert.edr().inputs.end()) {
                v.evidence.push_back({vert.vid, "train record carries no dataset commitment"});
                v.blamed.insert(k);
                continue;
            }
            seen[it->second].push_back(vert.vid);
        }
        if (!any_train) {
            v.evidence.push_back({"edg", "no verified train records for " + k});
            v.blamed.insert(k);
            continue;
        }
        if (seen.size() > 1) {
            std::string subjects;
            for (const auto& [_, vids] : seen) subjects += (subjects.empty() ? "" : " ") + vids.front();
            v.evidence.push_back(
                {subjects, "dataset commitment changed between rounds for " + k});
            v.blamed.insert(k);
        }
        std::set<Digest> allowed{policy.registered_commitments.at(k)};
        if (policy.sanitization_required) {
            auto san = sanitizer_outputs(edg, k);
            allowed.insert(san.begin(), san.end());
        }
        for (const auto& [commitment, vids] : seen) {
            if (!allowed.count(commitment)) {
                v.evidence.push_back(
                    {vids.front(), "dataset commitment " + commitment.hex().substr(0, 12) +
                                       " is neither registered nor sanitizer-produced"});
                v.blamed.insert(k);
            }
        }
    }
    sort_evidence(v);
    return v;
}

ClaimVerdict check_claim5(const Edg& edg, const AuditPolicy& policy) {
    ClaimVerdict v;
    v.id = 5;
    if (!policy.sanitization_required) return v;  // vacuous pass

    for (const auto& k : policy.providers) {
        std::set<Digest> outputs = sanitizer_outputs(edg, k);
        if (outputs.empty()) {
            v.evidence.push_back({"edg", "no verified sanitization record for " + k});
            v.blamed.insert(k);
        }
        for (const auto& vert : edg.vertices) {
            if (vert.edr().participant_id != k) continue;
            if (vert.edr().task_kind == TaskKind::sanitize) {
                auto in = vert.edr().inputs.find("dataset:commitment");
                if (in == vert.edr().inputs.end() ||
                    in->second != policy.registered_commitments.at(k)) {
                    v.evidence.push_back(
                        {vert.vid, "sanitization ran on a dataset other than the registered one"});
                    v.blamed.insert(k);
                }
            } else if (vert.edr().task_kind == TaskKind::train) {
                auto in = vert.edr().inputs.find("dataset:commitment");
                if (in != vert.edr().inputs.end() && !outputs.count(in->second)) {
                    v.evidence.push_back(
                        {vert.vid,
                         "training dataset commitment was not produced by sanitization"});
                    v.blamed.insert(k);
                }
            }
        }
    }
    sort_evidence(v);
    return v;
}

bool AuditReport::all_pass() const {
    return std::all_of(claims.begin(), claims.end(),
                       [](const ClaimVerdict& c) { return c.pass; });
}

const ClaimVerdict& AuditReport::claim(int id) const {
    for (const auto& c : claims)
        if (c.id == id) return c;
    throw Error("no such claim id");
}

nlohmann::json AuditReport::to_json() const {
    nlohmann::json j;
    j["claims"] = nlohmann::json::array();
    for (const auto& c : claims) {
        nlohmann::json cj;
        cj["id"] = c.id;
        cj["status"] = c.pass ? "pass" : "fail";
        cj["evidence"] = nlohmann::json::array();
        for (const auto& e : c.evidence)
            cj["evidence"].push_back({{"subject", e.subject}, {"reason", e.reason}});
        cj["blamed"] = std::vector<std::string>(c.blamed.begin(), c.blamed.end());
        j["claims"].push_back(std::move(cj));
    }
    j["rejected_records"] = rejected.size();
    j["edg_stats"] = {{"vertices", vertex_count},
                      {"edges", edge_count},
                      {"rejected", rejected.size()}};
    return j;
}

AuditReport audit(const std::vector<EndorsedEdr>& snapshot, const JobDescription& job) {
    // Audit over the record *set*: drop byte-identical duplicate envelopes
    // so permutations and replays of store lines cannot change the verdicts.
    std::set<std::string> seen;
    std::vector<EndorsedEdr> unique;
    unique.reserve(snapshot.size());
    for (const auto& r : snapshot) {
        if (seen.insert(r.to_json().dump()).second) unique.push_back(r);
    }

    AuditPolicy policy = AuditPolicy::derive(job);
    auto [edg, rejected] = build_edg(unique, job.platform_root().verify_key(),
                                     job.issuer_registry());

    AuditReport report;
    report.claims = {check_claim1(edg, policy), check_claim2(edg, policy),
                     check_claim3(edg, policy), check_claim4(edg, policy),
                     check_claim5(edg, policy)};
    report.rejected = std::move(rejected);
    report.vertex_count = edg.vertices.size();
    report.edge_count = edg.edges.size();
    return report;
}

std::string export_dot(const Edg& edg) {
    std::ostringstream out;
    out << "digraph edg {\n";
    out << "  rankdir=LR;\n";
    out << "  node [shape=box];\n";
    for (const auto& vert : edg.vertices) {
        out << "  \"" << vert.vid << "\" [label=\"" << to_string(vert.edr().task_kind) << "/r"
            << vert.edr().round << "/" << vert.edr().participant_id << "\"];\n";
    }
    // Deterministic edge order: vertices are sorted, edges follow indices.
    std::vector<const EdgEdge*> ordered;
    ordered.reserve(edg.edges.size());
    for (const auto& e : edg.edges) ordered.push_back(&e);
    std::sort(ordered.begin(), ordered.end(), [](const EdgEdge* a, const EdgEdge* b) {
        return std::tie(a->producer, a->consumer) < std::tie(b->producer, b->consumer);
    });
    for (const EdgEdge* e : ordered) {
        std::string names;
        for (const auto& [label, _] : e->label) names += (names.empty() ? "" : ", ") + label;
        out << "  \"" << edg.vertices[e->producer].vid << "\" -> \""
            << edg.vertices[e->consumer].vid << "\" [label=\"" << names << "\"];\n";
    }
    out << "}\n";
    return out.str();
}

}  // namespace vfl
