#include "helpers.hpp"

#include <atomic>
#include <unistd.h>

#include "vfl/tasks.hpp"

namespace vfl::test {

KeyPair::Seed make_seed(std::uint8_t fill) {
    KeyPair::Seed s{};
    s.fill(fill);
    return s;
}

KeyPair::Seed make_seed(std::string_view tag) {
    Digest d = hash_bytes(tag);
    KeyPair::Seed s{};
    std::copy(d.bytes.begin(), d.bytes.end(), s.begin());
    return s;
}

TempDir::TempDir() {
    static std::atomic<int> counter{0};
    path = std::filesystem::temp_directory_path() /
           ("vfl-test-" + std::to_string(::getpid()) + "-" +
            std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
}

std::vector<Record> synth_records(std::size_t n, std::size_t features, std::uint64_t seed) {
    Prng rng(seed);
    std::vector<double> truth(features + 1);
    for (auto& w : truth) w = rng.next_unit_open() * 2.0 - 1.0;

    std::vector<Record> records(n);
    for (auto& rec : records) {
        rec.values.resize(features + 1);
        double score = truth.back();
        for (std::size_t i = 0; i < features; ++i) {
            rec.values[i] = rng.next_unit_open() * 2.0 - 1.0;
            score += truth[i] * rec.values[i];
        }
        rec.values[features] = score >= 0 ? 1.0 : -1.0;
    }
    return records;
}

std::vector<Record> synth_text_records(std::size_t n, std::size_t features,
                                       std::uint64_t seed, const std::string& marker) {
    std::vector<Record> records = synth_records(n, features, seed);
    for (std::size_t i = 0; i < records.size(); ++i) {
        records[i].text = "row " + std::to_string(i) + " ";
        records[i].text += (i % 8 == 3) ? "contains " + marker + " content" : "is clean";
    }
    return records;
}

JobDescription make_fixture_job(const TempDir& dir, const FixtureOptions& opts) {
    JobDescription job;
    job.job_id = "fixture-" + std::to_string(opts.seed);
    job.rounds = opts.rounds;
    job.model_dim = opts.model_dim;
    job.model_seed = opts.seed * 1000 + 1;
    job.hp = Hyperparams{0.1, 8, 32, 0.001, opts.seed * 1000 + 2};
    job.dp = DpParams{0.02, 0.01, 8, 0.005, opts.seed * 1000 + 3};
    job.pipeline = {"train", "dp", "aggregate", "model_update"};
    if (opts.sanitize) {
        job.pipeline.insert(job.pipeline.begin(), "sanitize");
        job.denylist = {opts.denylist_marker};
    }
    job.model_provider_id = "modelowner";
    job.model_provider_seed = make_seed("issuer:" + job.job_id + ":modelowner");
    job.platform_root_seed = make_seed("platform:" + job.job_id);
    job.code_allowlist = default_code_allowlist(opts.sanitize);

    const std::size_t features = static_cast<std::size_t>(opts.model_dim) - 1;
    for (int i = 1; i <= opts.providers; ++i) {
        ProviderSpec p;
        p.participant_id = "provider" + std::to_string(i);
        std::uint64_t data_seed = opts.seed * 100 + static_cast<std::uint64_t>(i);
        std::vector<Record> records =
            opts.sanitize
                ? synth_text_records(opts.records_per_provider, features, data_seed,
                                     opts.denylist_marker)
                : synth_records(opts.records_per_provider, features, data_seed);
        Salt salt{};
        Digest sd = hash_bytes("salt:" + job.job_id + ":" + p.participant_id);
        std::copy_n(sd.bytes.begin(), salt.size(), salt.begin());
        DatasetImage img = pack_dataset(records, salt);
        p.dataset_image = dir.file(p.participant_id + ".vfld");
        save_image(img, p.dataset_image);
        p.registered_commitment = img.commitment.commitment;
        p.issuer_seed = make_seed("issuer:" + job.job_id + ":" + p.participant_id);
        job.providers.push_back(std::move(p));
    }
    job.validate();
    return job;
}

std::vector<EdgEdge> naive_edges(const std::vector<EdgVertex>& vertices) {
    std::vector<EdgEdge> edges;
    for (std::size_t y = 0; y < vertices.size(); ++y) {      // consumer
        for (std::size_t x = 0; x < vertices.size(); ++x) {  // producer
            if (x == y) continue;
            int pr = vertices[x].edr().round;
            int cr = vertices[y].edr().round;
            if (cr != pr && cr != pr + 1) continue;
            std::map<std::string, Digest> shared;
            for (const auto& [label, digest] : vertices[x].edr().outputs) {
                auto it = vertices[y].edr().inputs.find(label);
                if (it != vertices[y].edr().inputs.end() && it->second == digest)
                    shared.emplace(label, digest);
            }
            if (!shared.empty()) edges.push_back(EdgEdge{x, y, std::move(shared)});
        }
    }
    return edges;
}

std::vector<std::string> edge_set_keys(const std::vector<EdgEdge>& edges,
                                       const std::vector<EdgVertex>& vertices) {
    std::vector<std::string> keys;
    keys.reserve(edges.size());
    for (const auto& e : edges) {
        std::string k = vertices[e.producer].vid + "->" + vertices[e.consumer].vid + "|";
        for (const auto& [label, digest] : e.label) k += label + "=" + digest.hex() + ";";
        keys.push_back(std::move(k));
    }
    std::sort(keys.begin(), keys.end());
    return keys;
}

std::vector<EdgVertex> random_vertices(std::mt19937_64& rng, std::size_t count) {
    // Small digest pool so intersections are common.
    std::vector<Digest> pool(24);
    for (std::size_t i = 0; i < pool.size(); ++i)
        pool[i] = hash_bytes("pool-digest-" + std::to_string(rng()));
    const std::vector<std::string> labels = {
        "model:global",  "model:diff:p1", "model:diff:p2", "model:dp:p1",
        "model:dp:p2",   "model:agg_diff", "dataset:commitment", "params:train",
        "stats:loss",    "model:local:p3"};

    auto pick = [&](std::size_t n) { return rng() % n; };
    std::vector<EdgVertex> vertices(count);
    for (std::size_t i = 0; i < count; ++i) {
        Edr e;
        e.exclave_id = "ex" + std::to_string(i);
        e.participant_id = "p" + std::to_string(pick(5));
        e.task_kind = static_cast<TaskKind>(pick(5));
        e.round = static_cast<int>(pick(4)) - 1;
        std::size_t nin = 1 + pick(3), nout = 1 + pick(3);
        for (std::size_t j = 0; j < nin; ++j)
            e.inputs[labels[pick(labels.size())]] = pool[pick(pool.size())];
        for (std::size_t j = 0; j < nout; ++j)
            e.outputs[labels[pick(labels.size())]] = pool[pick(pool.size())];
        e.code = pool[pick(pool.size())];
        char vid[24];
        std::snprintf(vid, sizeof vid, "v%05zu", i);
        vertices[i] = EdgVertex{EndorsedEdr{std::move(e), {}, "p0", {}}, vid};
    }
    return vertices;
}

}  // namespace vfl::test
