#include "vfl/orchestrator.hpp"

#include <future>
#include <optional>

#include "vfl/errors.hpp"

namespace vfl {

namespace {

KeyPair::Seed derived_seed(const std::string& tag) {
    Digest d = hash_bytes(tag);
    KeyPair::Seed seed{};
    std::copy(d.bytes.begin(), d.bytes.end(), seed.begin());
    return seed;
}

struct DeviationIndex {
    const DeviationScript* script = nullptr;

    const Deviation* find(DeviationKind kind, const std::string& participant,
                          std::optional<int> round = std::nullopt,
                          std::optional<TaskKind> task = std::nullopt) const {
        if (!script) return nullptr;
        for (const auto& d : script->injections) {
            if (d.kind != kind || d.participant != participant) continue;
            if (round && d.round != *round) continue;
            if (task && d.task != *task) continue;
            return &d;
        }
        return nullptr;
    }

    bool transit_tamper(const std::string& participant, int round,
                        const std::string& leg) const {
        if (!script) return false;
        for (const auto& d : script->injections)
            if (d.kind == DeviationKind::transit_tamper && d.participant == participant &&
                d.round == round && d.leg == leg)
                return true;
        return false;
    }
};

struct ProviderExclaves {
    std::unique_ptr<Exclave> sanitize;
    std::unique_ptr<Exclave> train;
    std::unique_ptr<Exclave> dp;
};

std::unique_ptr<Exclave> launch(const JobDescription& job, const KeyPair& platform_root,
                                const std::string& participant, TaskKind kind,
                                const DeviationIndex& dev) {
    ExclaveConfig cfg;
    cfg.participant_id = participant;
    cfg.task_kind = kind;
    cfg.exclave_id = participant + "/" + std::string(to_string(kind));
    cfg.code_image = code_image_for(kind);
    if (dev.find(DeviationKind::code_tamper, participant, std::nullopt, kind))
        cfg.code_image[0] ^= 0x01;
    cfg.issuer = job.issuer_for(participant);
    cfg.sp_seed = derived_seed("sp-seed:" + job.job_id + ":" + cfg.exclave_id);
    return std::make_unique<Exclave>(std::move(cfg), platform_root);
}

DatasetRef registered_ref(const ProviderSpec& p) {
    DataCommitment sidecar = load_sidecar(p.dataset_image);
    // Trust only the registered commitment; root and salt come from the
    // sidecar and are re-checked against the payload at mount.
    return DatasetRef{p.dataset_image,
                      DataCommitment{sidecar.root, sidecar.salt, p.registered_commitment}};
}

// A second packed image with a perturbed record and a distinct salt,
// standing in for a provider that changes its dataset mid-job.
DatasetRef build_swapped_image(const DatasetRef& source) {
    DatasetHandle h = DatasetHandle::mount(source.image_path, source.expected);
    std::vector<Record> records = h.read_all();
    records.front().values.front() += 1.0;
    Salt salt = h.commitment().salt;
    for (auto& b : salt) b ^= 0xff;
    DatasetImage img = pack_dataset(records, salt);
    std::string path = source.image_path + ".swapped.vfld";
    save_image(img, path);
    return DatasetRef{path, img.commitment};
}

struct BranchResult {
    std::vector<EndorsedEdr> records;
    std::string label;
    Bytes payload;
};

}  // namespace

void tamper_payload(Bytes& payload) {
    if (payload.empty()) throw Error("cannot tamper an empty payload");
    payload.back() ^= 0x01;
}

EndorsedEdr forge_record(const EndorsedEdr& honest, const KeyPair& issuer) {
    EndorsedEdr forged = honest;
    forged.edr.outputs.begin()->second.bytes[0] ^= 0x01;
    Digest d = edr_digest(forged.edr);

    KeyPair fake = keygen(derived_seed("forged-attestation-key:" + d.hex()));
    forged.report.edr_digest = d;
    forged.report.att_pub = fake.verify_key();
    forged.report.endorsement = fake.sign(endorsement_signing_bytes(fake.verify_key()));
    forged.report.sig = fake.sign(report_signing_bytes(forged.report));
    forged.issuer_sig = issuer.sign(d.bytes);
    return forged;
}

ModelVector run_job(const JobDescription& job, EdrStore& store,
                    const DeviationScript* deviations, const RunOptions& options) {
    job.validate();
    DeviationIndex dev{deviations};
    if (deviations) deviations->validate(job);

    KeyPair platform_root = job.platform_root();

    std::map<std::string, ProviderExclaves> provider_exclaves;
    for (const auto& p : job.providers) {
        ProviderExclaves& ex = provider_exclaves[p.participant_id];
        if (job.sanitize_enabled())
            ex.sanitize = launch(job, platform_root, p.participant_id, TaskKind::sanitize, dev);
        ex.train = launch(job, platform_root, p.participant_id, TaskKind::train, dev);
        ex.dp = launch(job, platform_root, p.participant_id, TaskKind::dp, dev);
    }
    auto aggregate_ex =
        launch(job, platform_root, job.model_provider_id, TaskKind::aggregate, dev);
    auto model_update_ex =
        launch(job, platform_root, job.model_provider_id, TaskKind::model_update, dev);

    const Bytes hp_bytes = to_bytes(job.hp.to_json().dump());
    const Bytes dp_bytes = to_bytes(job.dp.to_json().dump());

    std::map<std::string, DatasetRef> train_refs;
    for (const auto& p : job.providers) train_refs[p.participant_id] = registered_ref(p);

    // Pre-training sanitization (round -1).
    if (job.sanitize_enabled()) {
        Bytes params = to_bytes(nlohmann::json{{"denylist", job.denylist}}.dump());
        for (const auto& p : job.providers) {
            if (dev.find(DeviationKind::skip_sanitization, p.participant_id)) continue;
            TaskRequest req;
            req.kind = TaskKind::sanitize;
            req.round = -1;
            req.payloads["params:sanitize"] = params;
            req.dataset = train_refs[p.participant_id];
            req.sanitized_image_path = p.dataset_image + ".sanitized.vfld";
            ExclaveConnector conn(*provider_exclaves[p.participant_id].sanitize);
            TaskResponse resp = conn.invoke(req);
            store.append(resp.endorsed_edr);
            train_refs[p.participant_id] = *resp.dataset_out;
        }
    }

    // Swapped images, built once per targeted provider.
    std::map<std::string, std::pair<int, DatasetRef>> swaps;
    for (const auto& p : job.providers)
        if (const Deviation* d = dev.find(DeviationKind::dataset_swap, p.participant_id))
            swaps.emplace(p.participant_id,
                          std::pair{d->round, build_swapped_image(train_refs[p.participant_id])});

    Bytes global_bytes = serialize_model(job.initial_model());

    auto run_branch = [&](const ProviderSpec& p, int round) -> BranchResult {
        BranchResult out;
        // branches run concurrently: shared maps are lookup-only here
        ProviderExclaves& ex = provider_exclaves.at(p.participant_id);

        DatasetRef ref = train_refs.at(p.participant_id);
        if (auto it = swaps.find(p.participant_id); it != swaps.end() && round >= it->second.first)
            ref = it->second.second;

        Bytes global_payload = global_bytes;
        if (dev.transit_tamper(p.participant_id, round, "global"))
            tamper_payload(global_payload);

        TaskRequest treq;
        treq.kind = TaskKind::train;
        treq.round = round;
        treq.payloads["model:global"] = global_payload;
        treq.payloads["params:train"] = hp_bytes;
        treq.dataset = ref;
        TaskResponse tresp = ExclaveConnector(*ex.train).invoke(treq);
        if (dev.find(DeviationKind::forge_edr, p.participant_id, round, TaskKind::train))
            tresp.endorsed_edr = forge_record(tresp.endorsed_edr, job.issuer_for(p.participant_id));
        out.records.push_back(tresp.endorsed_edr);

        std::string diff_label = "model:diff:" + p.participant_id;
        Bytes diff_bytes = tresp.payloads.at(diff_label);
        if (dev.transit_tamper(p.participant_id, round, "diff")) tamper_payload(diff_bytes);

        if (dev.find(DeviationKind::skip_dp, p.participant_id, round)) {
            // DP bypassed: the raw training diff goes straight to aggregation
            // under its original label. No DP record is produced.
            out.label = diff_label;
            out.payload = diff_bytes;
            return out;
        }

        TaskRequest dreq;
        dreq.kind = TaskKind::dp;
        dreq.round = round;
        dreq.payloads[diff_label] = diff_bytes;
        dreq.payloads["params:dp"] = dp_bytes;
        TaskResponse dresp = ExclaveConnector(*ex.dp).invoke(dreq);
        if (dev.find(DeviationKind::forge_edr, p.participant_id, round, TaskKind::dp))
            dresp.endorsed_edr = forge_record(dresp.endorsed_edr, job.issuer_for(p.participant_id));
        out.records.push_back(dresp.endorsed_edr);

        out.label = "model:dp:" + p.participant_id;
        out.payload = dresp.payloads.at(out.label);
        if (dev.transit_tamper(p.participant_id, round, "dp")) tamper_payload(out.payload);
        return out;
    };

    for (int round = 0; round < job.rounds; ++round) {
        std::vector<BranchResult> branches(job.providers.size());
        if (options.parallel_providers) {
            std::vector<std::future<BranchResult>> futures;
            futures.reserve(job.providers.size());
            for (const auto& p : job.providers)
                futures.push_back(std::async(std::launch::async, run_branch, std::cref(p), round));
            for (std::size_t i = 0; i < futures.size(); ++i) branches[i] = futures[i].get();
        } else {
            for (std::size_t i = 0; i < job.providers.size(); ++i)
                branches[i] = run_branch(job.providers[i], round);
        }
        // Round barrier passed; append in provider order so the store file
        // is reproducible (order carries no semantic weight either way).
        for (auto& b : branches)
            for (auto& rec : b.records) store.append(std::move(rec));

        TaskRequest areq;
        areq.kind = TaskKind::aggregate;
        areq.round = round;
        for (std::size_t i = 0; i < branches.size(); ++i) {
            const std::string& provider = job.providers[i].participant_id;
            if (dev.find(DeviationKind::drop_update, provider, round)) continue;
            areq.payloads[branches[i].label] = branches[i].payload;
        }
        TaskResponse aresp = ExclaveConnector(*aggregate_ex).invoke(areq);
        if (dev.find(DeviationKind::forge_edr, job.model_provider_id, round, TaskKind::aggregate))
            aresp.endorsed_edr =
                forge_record(aresp.endorsed_edr, job.issuer_for(job.model_provider_id));
        store.append(aresp.endorsed_edr);

        TaskRequest ureq;
        ureq.kind = TaskKind::model_update;
        ureq.round = round;
        ureq.payloads["model:agg_diff"] = aresp.payloads.at("model:agg_diff");
        ureq.payloads["model:global"] = global_bytes;
        TaskResponse uresp = ExclaveConnector(*model_update_ex).invoke(ureq);
        if (dev.find(DeviationKind::forge_edr, job.model_provider_id, round,
                     TaskKind::model_update))
            uresp.endorsed_edr =
                forge_record(uresp.endorsed_edr, job.issuer_for(job.model_provider_id));
        store.append(uresp.endorsed_edr);

        global_bytes = uresp.payloads.at("model:global");
    }

    return deserialize_model(global_bytes);
}

}  // namespace vfl
