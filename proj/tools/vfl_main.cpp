// vfl — pack datasets, run attested FL jobs, audit the resulting records.
//
// Exit codes: 0 success (and audit pass), 1 audit fail, 2 usage error,
// 3 runtime error.

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "vfl/auditor.hpp"
#include "vfl/errors.hpp"
#include "vfl/orchestrator.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitAuditFail = 1;
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

std::optional<double> parse_double(std::string_view field) {
    double value = 0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end) return std::nullopt;
    return value;
}

// CSV rows of float64 values; if any row's final field is not numeric the
// final column is treated as the text side-channel column for every row.
std::vector<vfl::Record> load_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw vfl::Error("cannot open CSV: " + path);

    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(f, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t start = 0;
        while (true) {
            std::size_t comma = line.find(',', start);
            fields.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        rows.push_back(std::move(fields));
    }
    if (rows.empty()) throw vfl::Error("CSV has no rows: " + path);

    const std::size_t width = rows.front().size();
    bool has_text = false;
    for (const auto& r : rows) {
        if (r.size() != width) throw vfl::Error("CSV rows have inconsistent field counts");
        if (!parse_double(r.back())) has_text = true;
    }
    const std::size_t value_count = has_text ? width - 1 : width;
    if (value_count == 0) throw vfl::Error("CSV rows need at least one numeric column");

    std::vector<vfl::Record> records;
    records.reserve(rows.size());
    for (const auto& r : rows) {
        vfl::Record rec;
        rec.values.reserve(value_count);
        for (std::size_t i = 0; i < value_count; ++i) {
            auto v = parse_double(r[i]);
            if (!v) throw vfl::Error("CSV field is not numeric: '" + r[i] + "'");
            rec.values.push_back(*v);
        }
        if (has_text) rec.text = r.back();
        records.push_back(std::move(rec));
    }
    return records;
}

vfl::Salt parse_salt(const std::string& hex) {
    vfl::Bytes raw = vfl::hex_decode(hex);
    vfl::Salt salt{};
    if (raw.size() != salt.size()) throw vfl::Error("--salt must be 32 hex chars (16 bytes)");
    std::copy(raw.begin(), raw.end(), salt.begin());
    return salt;
}

// Dataset paths inside a job file are relative to the file's directory.
vfl::JobDescription load_job(const std::string& job_path) {
    vfl::JobDescription job = vfl::JobDescription::load(job_path);
    fs::path base = fs::path(job_path).parent_path();
    for (auto& p : job.providers) {
        fs::path img(p.dataset_image);
        if (img.is_relative()) p.dataset_image = (base / img).string();
    }
    return job;
}

void print_claims(const vfl::AuditReport& report) {
    for (const auto& c : report.claims) {
        std::cout << "claim " << c.id << ": " << (c.pass ? "pass" : "FAIL");
        if (!c.blamed.empty()) {
            std::cout << "  blamed:";
            for (const auto& b : c.blamed) std::cout << " " << b;
        }
        std::cout << "\n";
        for (const auto& e : c.evidence)
            std::cout << "    " << e.subject << ": " << e.reason << "\n";
    }
    std::cout << "edg: " << report.vertex_count << " vertices, " << report.edge_count
              << " edges, " << report.rejected.size() << " rejected record(s)\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Attested federated learning with auditable exclave data records"};
    app.require_subcommand(1);

    // dataset pack
    auto* dataset = app.add_subcommand("dataset", "Dataset image utilities");
    dataset->require_subcommand(1);
    auto* pack = dataset->add_subcommand("pack", "Pack CSV rows into a verified image");
    std::string pack_in, pack_out, pack_salt;
    pack->add_option("--in", pack_in, "input CSV (float columns, optional final text column)")
        ->required();
    pack->add_option("--out", pack_out, "output image path")->required();
    pack->add_option("--salt", pack_salt, "16-byte commitment salt as hex")->required();

    // job run
    auto* jobcmd = app.add_subcommand("job", "Job execution");
    jobcmd->require_subcommand(1);
    auto* run = jobcmd->add_subcommand("run", "Execute an FL job and store its records");
    std::string run_job_path, run_store, run_inject, run_model_out;
    bool run_sequential = false;
    run->add_option("--job", run_job_path, "job description JSON")->required();
    run->add_option("--store", run_store, "output record store (ndjson)")->required();
    run->add_option("--inject", run_inject, "deviation script JSON");
    run->add_option("--model-out", run_model_out, "write the final model bytes here");
    run->add_flag("--sequential", run_sequential, "run provider branches sequentially");

    // audit
    auto* auditcmd = app.add_subcommand("audit", "Audit a record store against its job");
    std::string audit_job, audit_store, audit_report;
    auditcmd->add_option("--job", audit_job, "job description JSON")->required();
    auditcmd->add_option("--store", audit_store, "record store (ndjson)")->required();
    auditcmd->add_option("--report", audit_report, "write the audit report JSON here");

    // edg export
    auto* edgcmd = app.add_subcommand("edg", "Dataflow graph utilities");
    edgcmd->require_subcommand(1);
    auto* exportcmd = edgcmd->add_subcommand("export", "Render the EDG as Graphviz DOT");
    std::string edg_job, edg_store, edg_dot;
    exportcmd->add_option("--job", edg_job, "job description JSON")->required();
    exportcmd->add_option("--store", edg_store, "record store (ndjson)")->required();
    exportcmd->add_option("--dot", edg_dot, "output DOT path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (pack->parsed()) {
            std::vector<vfl::Record> records = load_csv(pack_in);
            vfl::DatasetImage image = vfl::pack_dataset(records, parse_salt(pack_salt));
            vfl::save_image(image, pack_out);
            std::cout << "packed " << records.size() << " records into " << image.block_count()
                      << " blocks\n"
                      << "commitment: " << image.commitment.commitment.hex() << "\n";
            return 0;
        }

        if (run->parsed()) {
            vfl::JobDescription job = load_job(run_job_path);
            vfl::DeviationScript script;
            if (!run_inject.empty()) script = vfl::DeviationScript::load(run_inject);
            vfl::EdrStore store;
            vfl::RunOptions options;
            options.parallel_providers = !run_sequential;
            vfl::ModelVector model =
                vfl::run_job(job, store, run_inject.empty() ? nullptr : &script, options);
            store.save(run_store);
            if (!run_model_out.empty())
                vfl::write_file(run_model_out, vfl::serialize_model(model));
            std::cout << "job " << job.job_id << ": " << job.rounds << " round(s), "
                      << store.size() << " records stored\n"
                      << "final model digest: "
                      << vfl::hash_bytes(vfl::serialize_model(model)).hex() << "\n";
            return 0;
        }

        if (auditcmd->parsed()) {
            vfl::JobDescription job = load_job(audit_job);
            vfl::EdrStore store = vfl::EdrStore::load(audit_store);
            vfl::AuditReport report = vfl::audit(store.snapshot(), job);
            print_claims(report);
            if (!audit_report.empty())
                vfl::write_file(audit_report, report.to_json().dump(2) + "\n");
            return report.all_pass() ? 0 : kExitAuditFail;
        }

        if (exportcmd->parsed()) {
            vfl::JobDescription job = load_job(edg_job);
            vfl::EdrStore store = vfl::EdrStore::load(edg_store);
            auto [edg, rejected] = vfl::build_edg(store.snapshot(),
                                                  job.platform_root().verify_key(),
                                                  job.issuer_registry());
            vfl::write_file(edg_dot, vfl::export_dot(edg));
            std::cout << "wrote " << edg.vertices.size() << " vertices, " << edg.edges.size()
                      << " edges (" << rejected.size() << " rejected)\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
