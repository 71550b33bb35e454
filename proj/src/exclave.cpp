#include "vfl/exclave.hpp"

#include <stdexcept>

#include "vfl/errors.hpp"

namespace vfl {

namespace {

nlohmann::json payloads_to_json(const std::map<std::string, Bytes>& payloads) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [label, bytes] : payloads) j[label] = base64_encode(bytes);
    return j;
}

std::map<std::string, Bytes> payloads_from_json(const nlohmann::json& j) {
    std::map<std::string, Bytes> m;
    for (auto it = j.begin(); it != j.end(); ++it)
        m[it.key()] = base64_decode(it.value().get<std::string>());
    return m;
}

nlohmann::json dataset_ref_to_json(const DatasetRef& ref) {
    nlohmann::json j;
    j["image_path"] = ref.image_path;
    j["root"] = ref.expected.root.hex();
    j["salt"] = hex_encode(ref.expected.salt);
    j["commitment"] = ref.expected.commitment.hex();
    return j;
}

DatasetRef dataset_ref_from_json(const nlohmann::json& j) {
    DatasetRef ref;
    ref.image_path = j.at("image_path").get<std::string>();
    ref.expected.root = Digest::from_hex(j.at("root").get<std::string>());
    Bytes salt = hex_decode(j.at("salt").get<std::string>());
    if (salt.size() != ref.expected.salt.size()) throw Error("dataset salt must be 16 bytes");
    std::copy(salt.begin(), salt.end(), ref.expected.salt.begin());
    ref.expected.commitment = Digest::from_hex(j.at("commitment").get<std::string>());
    return ref;
}

const Bytes& payload_or_throw(const std::map<std::string, Bytes>& payloads,
                              const std::string& label) {
    auto it = payloads.find(label);
    if (it == payloads.end()) throw Error("missing request payload: " + label);
    return it->second;
}

nlohmann::json parse_params(const Bytes& raw) {
    return nlohmann::json::parse(raw.begin(), raw.end());
}

}  // namespace

nlohmann::json TaskRequest::to_json() const {
    nlohmann::json j;
    j["task_kind"] = to_string(kind);
    j["round"] = round;
    j["payloads"] = payloads_to_json(payloads);
    if (dataset) j["dataset"] = dataset_ref_to_json(*dataset);
    if (sanitized_image_path) j["sanitized_image_path"] = *sanitized_image_path;
    return j;
}

TaskRequest TaskRequest::from_json(const nlohmann::json& j) {
    TaskRequest r;
    r.kind = task_kind_from_string(j.at("task_kind").get<std::string>());
    r.round = j.at("round").get<int>();
    r.payloads = payloads_from_json(j.at("payloads"));
    if (j.contains("dataset")) r.dataset = dataset_ref_from_json(j.at("dataset"));
    if (j.contains("sanitized_image_path"))
        r.sanitized_image_path = j.at("sanitized_image_path").get<std::string>();
    return r;
}

nlohmann::json TaskResponse::to_json() const {
    nlohmann::json j;
    j["payloads"] = payloads_to_json(payloads);
    if (dataset_out) j["dataset_out"] = dataset_ref_to_json(*dataset_out);
    j["endorsed_edr"] = endorsed_edr.to_json();
    return j;
}

Bytes code_image_for(TaskKind kind) {
    // Stand-in for the task binary: one block of deterministic bytes that
    // identify the task kind and code revision.
    std::string stamp = "exclave-task/" + std::string(to_string(kind)) + "/rev1\n";
    Bytes image;
    image.reserve(kBlockSize);
    while (image.size() + stamp.size() <= kBlockSize)
        image.insert(image.end(), stamp.begin(), stamp.end());
    image.resize(kBlockSize, 0);
    return image;
}

Exclave::Exclave(ExclaveConfig config, const KeyPair& platform_root)
    : config_(std::move(config)) {
    code_root_ = vfl::code_measurement(config_.code_image);
    sp_ = SecureProcessor::create(platform_root, config_.sp_seed);
    sp_->measure_code(code_root_);
}

TaskResponse Exclave::handle_task(const TaskRequest& request) {
    if (request.kind != config_.task_kind)
        throw TaskKindMismatch("exclave " + config_.exclave_id + " runs " +
                               std::string(to_string(config_.task_kind)) + ", got " +
                               std::string(to_string(request.kind)));

    Edr edr;
    edr.exclave_id = config_.exclave_id;
    edr.participant_id = config_.participant_id;
    edr.task_kind = config_.task_kind;
    edr.round = request.round;
    edr.code = code_root_;
    for (const auto& [label, bytes] : request.payloads)
        edr.inputs[label] = hash_bytes(bytes);

    std::optional<DatasetHandle> dataset;
    if (config_.task_kind == TaskKind::train || config_.task_kind == TaskKind::sanitize) {
        if (!request.dataset) throw Error("task requires a dataset reference");
        dataset = DatasetHandle::mount(request.dataset->image_path, request.dataset->expected);
        edr.inputs["dataset:commitment"] = dataset->commitment().commitment;
    }

    TaskResponse response;
    switch (config_.task_kind) {
        case TaskKind::train: {
            Hyperparams hp =
                Hyperparams::from_json(parse_params(payload_or_throw(request.payloads,
                                                                     "params:train")));
            ModelVector global =
                deserialize_model(payload_or_throw(request.payloads, "model:global"));
            ModelVector diff = local_train(global, *dataset, hp);
            response.payloads["model:diff:" + config_.participant_id] =
                serialize_model(diff);
            break;
        }
        case TaskKind::dp: {
            DpParams dp = DpParams::from_json(
                parse_params(payload_or_throw(request.payloads, "params:dp")));
            ModelVector diff = deserialize_model(
                payload_or_throw(request.payloads, "model:diff:" + config_.participant_id));
            response.payloads["model:dp:" + config_.participant_id] =
                serialize_model(svt_dp(diff, dp));
            break;
        }
        case TaskKind::aggregate: {
            // Averages every model payload the framework delivered, in label
            // order. Recording exactly what arrived is the point: a biased
            // request shows up in the EDR, not in an exclave-side rejection.
            std::vector<std::pair<ModelVector, double>> updates;
            for (const auto& [label, bytes] : request.payloads)
                if (label.starts_with("model:"))
                    updates.emplace_back(deserialize_model(bytes), 1.0);
            response.payloads["model:agg_diff"] = serialize_model(aggregate_fedavg(updates));
            break;
        }
        case TaskKind::model_update: {
            ModelVector prev =
                deserialize_model(payload_or_throw(request.payloads, "model:global"));
            ModelVector diff =
                deserialize_model(payload_or_throw(request.payloads, "model:agg_diff"));
            response.payloads["model:global"] = serialize_model(model_update(prev, diff));
            break;
        }
        case TaskKind::sanitize: {
            nlohmann::json params =
                parse_params(payload_or_throw(request.payloads, "params:sanitize"));
            std::vector<std::string> denylist =
                params.at("denylist").get<std::vector<std::string>>();
            if (!request.sanitized_image_path)
                throw Error("sanitize task requires an output image path");
            std::vector<Record> kept = sanitize(dataset->read_all(), denylist);
            // Reuse the source salt; the filtered payload gives a new root.
            DatasetImage out = pack_dataset(kept, dataset->commitment().salt);
            save_image(out, *request.sanitized_image_path);
            response.dataset_out = DatasetRef{*request.sanitized_image_path, out.commitment};
            edr.outputs["dataset:commitment"] = out.commitment.commitment;
            break;
        }
    }

    for (const auto& [label, bytes] : response.payloads)
        edr.outputs[label] = hash_bytes(bytes);

    AttestationReport report = sp_->attest(edr_digest(edr));
    response.endorsed_edr = edr_endorse(edr, report, config_.issuer, config_.participant_id);
    return response;
}

}  // namespace vfl
