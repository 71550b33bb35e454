#include "vfl/edr.hpp"

#include <fstream>
#include <sstream>

#include "vfl/errors.hpp"

namespace vfl {

std::string_view to_string(TaskKind kind) {
    switch (kind) {
        case TaskKind::sanitize: return "sanitize";
        case TaskKind::train: return "train";
        case TaskKind::dp: return "dp";
        case TaskKind::aggregate: return "aggregate";
        case TaskKind::model_update: return "model_update";
    }
    throw Error("unreachable task kind");
}

TaskKind task_kind_from_string(std::string_view s) {
    if (s == "sanitize") return TaskKind::sanitize;
    if (s == "train") return TaskKind::train;
    if (s == "dp") return TaskKind::dp;
    if (s == "aggregate") return TaskKind::aggregate;
    if (s == "model_update") return TaskKind::model_update;
    throw Error("unknown task kind: " + std::string(s));
}

namespace {

void validate_label(const std::string& label) {
    auto sep = label.find(':');
    if (label.empty() || sep == std::string::npos || sep == 0 || sep + 1 == label.size())
        throw Error("EDR label must have the form <role>:<property>, got: " + label);
}

nlohmann::json digest_map_to_json(const std::map<std::string, Digest>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : m) j[k] = v.hex();
    return j;
}

std::map<std::string, Digest> digest_map_from_json(const nlohmann::json& j) {
    std::map<std::string, Digest> m;
    for (auto it = j.begin(); it != j.end(); ++it)
        m[it.key()] = Digest::from_hex(it.value().get<std::string>());
    return m;
}

}  // namespace

void edr_validate(const Edr& edr) {
    if (edr.exclave_id.empty() || edr.participant_id.empty())
        throw Error("EDR requires exclave and participant ids");
    if (edr.round < -1) throw Error("EDR round must be >= -1");
    if (edr.inputs.empty() || edr.outputs.empty())
        throw Error("EDR input/output maps must be non-empty");
    for (const auto& [label, _] : edr.inputs) validate_label(label);
    for (const auto& [label, _] : edr.outputs) validate_label(label);
}

Bytes edr_canonicalize(const Edr& edr) {
    // nlohmann::json objects are std::map-backed, so keys are already sorted
    // at every level; dump() emits no whitespace.
    nlohmann::json j;
    j["code"] = edr.code.hex();
    j["exclave_id"] = edr.exclave_id;
    j["inputs"] = digest_map_to_json(edr.inputs);
    j["outputs"] = digest_map_to_json(edr.outputs);
    j["participant_id"] = edr.participant_id;
    j["round"] = edr.round;
    j["task_kind"] = to_string(edr.task_kind);
    return to_bytes(j.dump());
}

Digest edr_digest(const Edr& edr) {
    return hash_bytes(edr_canonicalize(edr));
}

nlohmann::json EndorsedEdr::to_json() const {
    nlohmann::json j;
    nlohmann::json e;
    e["code"] = edr.code.hex();
    e["exclave_id"] = edr.exclave_id;
    e["inputs"] = digest_map_to_json(edr.inputs);
    e["outputs"] = digest_map_to_json(edr.outputs);
    e["participant_id"] = edr.participant_id;
    e["round"] = edr.round;
    e["task_kind"] = to_string(edr.task_kind);
    j["edr"] = std::move(e);
    j["issuer_id"] = issuer_id;
    j["issuer_sig"] = base64_encode(issuer_sig);
    j["report"] = report.to_json();
    return j;
}

EndorsedEdr EndorsedEdr::from_json(const nlohmann::json& j) {
    EndorsedEdr out;
    const auto& e = j.at("edr");
    out.edr.code = Digest::from_hex(e.at("code").get<std::string>());
    out.edr.exclave_id = e.at("exclave_id").get<std::string>();
    out.edr.inputs = digest_map_from_json(e.at("inputs"));
    out.edr.outputs = digest_map_from_json(e.at("outputs"));
    out.edr.participant_id = e.at("participant_id").get<std::string>();
    out.edr.round = e.at("round").get<int>();
    out.edr.task_kind = task_kind_from_string(e.at("task_kind").get<std::string>());
    out.issuer_id = j.at("issuer_id").get<std::string>();
    out.issuer_sig = base64_decode(j.at("issuer_sig").get<std::string>());
    out.report = AttestationReport::from_json(j.at("report"));
    return out;
}

EndorsedEdr edr_endorse(const Edr& edr, const AttestationReport& report,
                        const KeyPair& issuer, const std::string& issuer_id) {
    edr_validate(edr);
    Digest d = edr_digest(edr);
    if (report.edr_digest != d)
        throw DigestMismatch("attestation report covers a different EDR");
    EndorsedEdr e;
    e.edr = edr;
    e.report = report;
    e.issuer_id = issuer_id;
    e.issuer_sig = issuer.sign(d.bytes);
    return e;
}

bool edr_verify(const EndorsedEdr& e, const VerifyKey& platform_root_pub,
                const std::map<std::string, VerifyKey>& issuer_registry) {
    if (!verify_report(e.report, platform_root_pub)) return false;
    Digest d;
    try {
        d = edr_digest(e.edr);
    } catch (const std::exception&) {
        return false;
    }
    if (e.report.edr_digest != d) return false;
    auto it = issuer_registry.find(e.issuer_id);
    if (it == issuer_registry.end()) return false;
    return verify(it->second, d.bytes, e.issuer_sig);
}

std::size_t EdrStore::append(EndorsedEdr e) {
    std::lock_guard lock(mu_);
    records_.push_back(std::move(e));
    return records_.size() - 1;
}

std::vector<EndorsedEdr> EdrStore::snapshot() const {
    std::lock_guard lock(mu_);
    return records_;
}

std::size_t EdrStore::size() const {
    std::lock_guard lock(mu_);
    return records_.size();
}

void EdrStore::save(const std::string& path) const {
    auto records = snapshot();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot create store file: " + path);
    for (const auto& r : records) f << r.to_json().dump() << '\n';
    if (!f) throw Error("store write failed: " + path);
}

EdrStore EdrStore::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open store file: " + path);
    EdrStore store;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            store.append(EndorsedEdr::from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& ex) {
            throw Error("store line " + std::to_string(lineno) + " is malformed: " + ex.what());
        }
    }
    return store;
}

}  // namespace vfl
