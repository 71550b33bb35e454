#include "vfl/job.hpp"

#include <algorithm>
#include <set>

#include "vfl/errors.hpp"
#include "vfl/exclave.hpp"

namespace vfl {

namespace {

KeyPair::Seed seed_from_hex(const std::string& hex) {
    Bytes raw = hex_decode(hex);
    KeyPair::Seed seed{};
    if (raw.size() != seed.size()) throw Error("seed must be 32 bytes of hex");
    std::copy(raw.begin(), raw.end(), seed.begin());
    return seed;
}

const std::vector<std::string> kCorePipeline = {"train", "dp", "aggregate", "model_update"};

}  // namespace

bool JobDescription::sanitize_enabled() const {
    return !pipeline.empty() && pipeline.front() == "sanitize";
}

std::map<std::string, VerifyKey> JobDescription::issuer_registry() const {
    std::map<std::string, VerifyKey> reg;
    for (const auto& p : providers)
        reg[p.participant_id] = keygen(p.issuer_seed).verify_key();
    reg[model_provider_id] = keygen(model_provider_seed).verify_key();
    return reg;
}

KeyPair JobDescription::issuer_for(const std::string& participant_id) const {
    if (participant_id == model_provider_id) return keygen(model_provider_seed);
    for (const auto& p : providers)
        if (p.participant_id == participant_id) return keygen(p.issuer_seed);
    throw Error("unknown participant: " + participant_id);
}

ModelVector JobDescription::initial_model() const {
    Prng rng(model_seed);
    ModelVector m(model_dim);
    for (int i = 0; i < model_dim; ++i) m[i] = (rng.next_unit_open() - 0.5) * 0.2;
    return m;
}

void JobDescription::validate() const {
    if (job_id.empty()) throw Error("job_id must be set");
    if (rounds < 1) throw Error("rounds must be >= 1");
    if (model_dim < 1) throw Error("model dimension must be >= 1");
    hp.validate();
    dp.validate();
    if (prng_id != kPrngId)
        throw Error("job names PRNG '" + prng_id + "' but this build implements '" +
                    std::string(kPrngId) + "'");

    std::vector<std::string> core = pipeline;
    bool with_sanitize = !core.empty() && core.front() == "sanitize";
    if (with_sanitize) core.erase(core.begin());
    if (core != kCorePipeline)
        throw Error("pipeline must be [sanitize,] train, dp, aggregate, model_update");
    if (with_sanitize && denylist.empty())
        throw Error("sanitize stage requires a denylist");
    for (const auto& p : denylist)
        if (p.empty()) throw Error("denylist patterns must be non-empty");

    if (providers.empty()) throw Error("at least one data provider required");
    std::set<std::string> ids;
    for (const auto& p : providers) {
        if (p.participant_id.empty() || p.participant_id.find(':') != std::string::npos)
            throw Error("participant ids must be non-empty and contain no ':'");
        if (!ids.insert(p.participant_id).second)
            throw Error("duplicate participant id: " + p.participant_id);
        if (p.dataset_image.empty())
            throw Error("provider " + p.participant_id + " has no dataset image");
    }
    if (model_provider_id.empty() || model_provider_id.find(':') != std::string::npos)
        throw Error("model provider id must be non-empty and contain no ':'");
    if (ids.count(model_provider_id))
        throw Error("model provider id collides with a data provider");

    for (const auto& stage : pipeline) {
        TaskKind kind = task_kind_from_string(stage);
        auto it = code_allowlist.find(kind);
        if (it == code_allowlist.end() || it->second.empty())
            throw Error("code allowlist is empty for pipeline stage " + stage);
    }
}

nlohmann::json JobDescription::to_json() const {
    nlohmann::json j;
    j["job_id"] = job_id;
    j["rounds"] = rounds;
    j["model"] = {{"dimension", model_dim}, {"seed", model_seed}};
    j["hyperparams"] = hp.to_json();
    j["dp"] = dp.to_json();
    j["prng"] = prng_id;
    j["pipeline"] = pipeline;
    j["providers"] = nlohmann::json::array();
    for (const auto& p : providers) {
        j["providers"].push_back({{"participant_id", p.participant_id},
                                  {"dataset_image", p.dataset_image},
                                  {"commitment", p.registered_commitment.hex()},
                                  {"issuer_seed", hex_encode(p.issuer_seed)}});
    }
    j["model_provider"] = {{"participant_id", model_provider_id},
                           {"issuer_seed", hex_encode(model_provider_seed)}};
    j["platform_root_seed"] = hex_encode(platform_root_seed);
    nlohmann::json allow = nlohmann::json::object();
    for (const auto& [kind, digests] : code_allowlist) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& d : digests) arr.push_back(d.hex());
        allow[std::string(to_string(kind))] = std::move(arr);
    }
    j["code_allowlist"] = std::move(allow);
    if (!denylist.empty()) j["sanitize"] = {{"denylist", denylist}};
    return j;
}

JobDescription JobDescription::from_json(const nlohmann::json& j) {
    JobDescription job;
    job.job_id = j.at("job_id").get<std::string>();
    job.rounds = j.at("rounds").get<int>();
    job.model_dim = j.at("model").at("dimension").get<int>();
    job.model_seed = j.at("model").at("seed").get<std::uint64_t>();
    job.hp = Hyperparams::from_json(j.at("hyperparams"));
    job.dp = DpParams::from_json(j.at("dp"));
    job.prng_id = j.at("prng").get<std::string>();
    job.pipeline = j.at("pipeline").get<std::vector<std::string>>();
    for (const auto& p : j.at("providers")) {
        ProviderSpec provider;
        provider.participant_id = p.at("participant_id").get<std::string>();
        provider.dataset_image = p.at("dataset_image").get<std::string>();
        provider.registered_commitment =
            Digest::from_hex(p.at("commitment").get<std::string>());
        provider.issuer_seed = seed_from_hex(p.at("issuer_seed").get<std::string>());
        job.providers.push_back(std::move(provider));
    }
    job.model_provider_id = j.at("model_provider").at("participant_id").get<std::string>();
    job.model_provider_seed =
        seed_from_hex(j.at("model_provider").at("issuer_seed").get<std::string>());
    job.platform_root_seed = seed_from_hex(j.at("platform_root_seed").get<std::string>());
    for (auto it = j.at("code_allowlist").begin(); it != j.at("code_allowlist").end(); ++it) {
        std::vector<Digest> digests;
        for (const auto& hex : it.value()) digests.push_back(Digest::from_hex(hex.get<std::string>()));
        job.code_allowlist[task_kind_from_string(it.key())] = std::move(digests);
    }
    if (j.contains("sanitize"))
        job.denylist = j.at("sanitize").at("denylist").get<std::vector<std::string>>();
    job.validate();
    return job;
}

JobDescription JobDescription::load(const std::string& path) {
    Bytes raw = read_file(path);
    return from_json(nlohmann::json::parse(raw.begin(), raw.end()));
}

void JobDescription::save(const std::string& path) const {
    write_file(path, to_json().dump(2) + "\n");
}

std::map<TaskKind, std::vector<Digest>> default_code_allowlist(bool with_sanitize) {
    std::map<TaskKind, std::vector<Digest>> allow;
    std::vector<TaskKind> kinds = {TaskKind::train, TaskKind::dp, TaskKind::aggregate,
                                   TaskKind::model_update};
    if (with_sanitize) kinds.push_back(TaskKind::sanitize);
    for (TaskKind k : kinds) allow[k] = {code_measurement(code_image_for(k))};
    return allow;
}

std::string_view to_string(DeviationKind kind) {
    switch (kind) {
        case DeviationKind::forge_edr: return "forge_edr";
        case DeviationKind::transit_tamper: return "transit_tamper";
        case DeviationKind::skip_dp: return "skip_dp";
        case DeviationKind::drop_update: return "drop_update";
        case DeviationKind::dataset_swap: return "dataset_swap";
        case DeviationKind::skip_sanitization: return "skip_sanitization";
        case DeviationKind::code_tamper: return "code_tamper";
    }
    throw Error("unreachable deviation kind");
}

DeviationKind deviation_kind_from_string(std::string_view s) {
    if (s == "forge_edr") return DeviationKind::forge_edr;
    if (s == "transit_tamper") return DeviationKind::transit_tamper;
    if (s == "skip_dp") return DeviationKind::skip_dp;
    if (s == "drop_update") return DeviationKind::drop_update;
    if (s == "dataset_swap") return DeviationKind::dataset_swap;
    if (s == "skip_sanitization") return DeviationKind::skip_sanitization;
    if (s == "code_tamper") return DeviationKind::code_tamper;
    throw Error("unknown deviation kind: " + std::string(s));
}

void DeviationScript::validate(const JobDescription& job) const {
    for (const auto& d : injections) {
        bool is_provider = std::any_of(job.providers.begin(), job.providers.end(),
                                       [&](const ProviderSpec& p) {
                                           return p.participant_id == d.participant;
                                       });
        bool is_model_provider = d.participant == job.model_provider_id;
        if (!is_provider && !is_model_provider)
            throw Error("deviation targets unknown participant: " + d.participant);

        switch (d.kind) {
            case DeviationKind::skip_sanitization:
                if (!job.sanitize_enabled())
                    throw Error("skip_sanitization requires a sanitize stage");
                [[fallthrough]];
            case DeviationKind::code_tamper:
                break;  // round not used
            default:
                if (d.round < 0 || d.round >= job.rounds)
                    throw Error("deviation round out of range");
        }
        if (d.kind != DeviationKind::code_tamper && d.kind != DeviationKind::forge_edr &&
            is_model_provider)
            throw Error(std::string(to_string(d.kind)) + " must target a data provider");
        if (d.kind == DeviationKind::transit_tamper && d.leg != "global" && d.leg != "diff" &&
            d.leg != "dp")
            throw Error("transit_tamper leg must be global, diff or dp");
    }
}

nlohmann::json DeviationScript::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& d : injections) {
        nlohmann::json j;
        j["kind"] = to_string(d.kind);
        j["participant"] = d.participant;
        j["round"] = d.round;
        if (d.kind == DeviationKind::transit_tamper) j["leg"] = d.leg;
        if (d.kind == DeviationKind::forge_edr || d.kind == DeviationKind::code_tamper)
            j["task_kind"] = to_string(d.task);
        arr.push_back(std::move(j));
    }
    return nlohmann::json{{"injections", arr}};
}

DeviationScript DeviationScript::from_json(const nlohmann::json& j) {
    DeviationScript s;
    for (const auto& e : j.at("injections")) {
        Deviation d;
        d.kind = deviation_kind_from_string(e.at("kind").get<std::string>());
        d.participant = e.at("participant").get<std::string>();
        d.round = e.value("round", 0);
        d.leg = e.value("leg", std::string("dp"));
        if (e.contains("task_kind"))
            d.task = task_kind_from_string(e.at("task_kind").get<std::string>());
        s.injections.push_back(std::move(d));
    }
    return s;
}

DeviationScript DeviationScript::load(const std::string& path) {
    Bytes raw = read_file(path);
    return from_json(nlohmann::json::parse(raw.begin(), raw.end()));
}

void DeviationScript::save(const std::string& path) const {
    write_file(path, to_json().dump(2) + "\n");
}

}  // namespace vfl
