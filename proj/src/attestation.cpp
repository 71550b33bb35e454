#include "vfl/attestation.hpp"

#include "vfl/errors.hpp"

namespace vfl {

Bytes report_signing_bytes(const AttestationReport& r) {
    Bytes msg;
    msg.reserve(1 + 32 * 3 + 8);
    msg.push_back(domain::kReportSig);
    msg.insert(msg.end(), r.pcr11.bytes.begin(), r.pcr11.bytes.end());
    msg.insert(msg.end(), r.pcr23.bytes.begin(), r.pcr23.bytes.end());
    msg.insert(msg.end(), r.edr_digest.bytes.begin(), r.edr_digest.bytes.end());
    put_u64_le(msg, r.counter);
    return msg;
}

Bytes endorsement_signing_bytes(const VerifyKey& att_pub) {
    Bytes msg;
    msg.reserve(1 + att_pub.bytes.size());
    msg.push_back(domain::kEndorseSig);
    msg.insert(msg.end(), att_pub.bytes.begin(), att_pub.bytes.end());
    return msg;
}

void PcrBank::extend(std::size_t idx, const Digest& v) {
    Sha256 h;
    h.update(domain::kPcrExtend).update(pcr.at(idx)).update(v);
    pcr.at(idx) = h.finish();
}

nlohmann::json AttestationReport::to_json() const {
    nlohmann::json j;
    j["pcr11"] = pcr11.hex();
    j["pcr23"] = pcr23.hex();
    j["edr_digest"] = edr_digest.hex();
    j["counter"] = counter;
    j["sig"] = base64_encode(sig);
    j["att_pub"] = base64_encode(att_pub.bytes);
    j["endorsement"] = base64_encode(endorsement);
    j["scheme"] = scheme;
    return j;
}

AttestationReport AttestationReport::from_json(const nlohmann::json& j) {
    AttestationReport r;
    r.pcr11 = Digest::from_hex(j.at("pcr11").get<std::string>());
    r.pcr23 = Digest::from_hex(j.at("pcr23").get<std::string>());
    r.edr_digest = Digest::from_hex(j.at("edr_digest").get<std::string>());
    r.counter = j.at("counter").get<std::uint64_t>();
    r.sig = base64_decode(j.at("sig").get<std::string>());
    Bytes pub = base64_decode(j.at("att_pub").get<std::string>());
    if (pub.size() != r.att_pub.bytes.size())
        throw Error("attestation public key must be 32 bytes");
    std::copy(pub.begin(), pub.end(), r.att_pub.bytes.begin());
    r.endorsement = base64_decode(j.at("endorsement").get<std::string>());
    r.scheme = j.at("scheme").get<std::string>();
    return r;
}

SecureProcessor::SecureProcessor(KeyPair key, Endorsement cert)
    : attestation_key_(std::move(key)), endorsement_(std::move(cert)) {}

std::unique_ptr<SecureProcessor> SecureProcessor::create(const KeyPair& platform_root,
                                                         const KeyPair::Seed& seed) {
    KeyPair att = keygen(seed);
    Endorsement cert{att.verify_key(),
                     platform_root.sign(endorsement_signing_bytes(att.verify_key()))};
    return std::unique_ptr<SecureProcessor>(
        new SecureProcessor(std::move(att), std::move(cert)));
}

void SecureProcessor::measure_code(const Digest& code) {
    std::lock_guard lock(mu_);
    if (measured_ || attested_)
        throw MeasureAfterAttest("code can be measured exactly once, at launch");
    pcr_.extend(kPcrCode, code);
    measured_ = true;
}

AttestationReport SecureProcessor::attest(const Digest& edr_digest) {
    std::lock_guard lock(mu_);
    if (!measured_) throw NotMeasured("attest requested before code measurement");
    attested_ = true;
    pcr_.extend(kPcrRuntime, edr_digest);
    ++counter_;

    AttestationReport r;
    r.pcr11 = pcr_.pcr[kPcrCode];
    r.pcr23 = pcr_.pcr[kPcrRuntime];
    r.edr_digest = edr_digest;
    r.counter = counter_;
    r.att_pub = endorsement_.att_pub;
    r.endorsement = endorsement_.sig;
    r.sig = attestation_key_.sign(report_signing_bytes(r));
    return r;
}

bool verify_report(const AttestationReport& report, const VerifyKey& platform_root_pub) {
    if (report.scheme != kSignatureScheme) return false;
    if (!verify(platform_root_pub, endorsement_signing_bytes(report.att_pub),
                report.endorsement))
        return false;
    return verify(report.att_pub, report_signing_bytes(report), report.sig);
}

}  // namespace vfl
