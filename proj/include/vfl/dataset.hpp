#pragma once

// Integrity-protected dataset images.
//
// On disk an image is a 22-byte header followed by the payload:
//   magic "VFLD" | version u16 | block_size u32 | record_width u32 | record_count u64
// (all integers little-endian). The payload is the concatenated fixed-width
// records, zero-padded to a whole number of blocks; the Merkle tree covers
// the payload blocks only. Version 1 rows are packed float64 values
// (features then label); version 2 rows additionally carry a text column.
// Exact layouts are in docs/formats.md.
//
// The sidecar (<image>.sidecar.json) publishes root, salt, commitment,
// block_count and block_size. The salt is public: the commitment is a
// binding identifier, not a hiding one.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "vfl/merkle.hpp"

namespace vfl {

struct Record {
    std::vector<double> values;  // features then label
    std::string text;            // optional side-channel column (sanitization input)

    bool operator==(const Record&) const = default;
};

struct DatasetHeader {
    std::uint16_t version = 1;
    std::uint32_t block_size = kBlockSize;
    std::uint32_t record_width = 0;
    std::uint64_t record_count = 0;
};

struct DatasetImage {
    DatasetHeader header;
    Bytes payload;  // block-aligned
    DataCommitment commitment;

    std::size_t block_count() const { return payload.size() / header.block_size; }
};

// Packs records into an image and derives the salted commitment.
// Throws std::invalid_argument on zero records, ragged value widths, or
// rows too wide for one block.
DatasetImage pack_dataset(std::span<const Record> records, const Salt& salt);

// Writes <path> (header+payload) and <path>.sidecar.json.
void save_image(const DatasetImage& image, const std::string& path);
std::string sidecar_path(const std::string& image_path);
DataCommitment load_sidecar(const std::string& image_path);

// A mounted image. Mounting recomputes the Merkle tree from the payload
// and rejects the image unless the recomputed commitment matches both the
// sidecar and the caller's expected commitment. Every read re-reads the
// backing file and verifies the covered blocks against the root, so a
// block rewritten after mount surfaces as IntegrityViolation.
// Handles are single-reader; concurrent readers each mount their own.
class DatasetHandle {
public:
    static DatasetHandle mount(const std::string& image_path, const DataCommitment& expected);

    Record read_record(std::size_t index);
    std::vector<Record> read_all();

    std::size_t record_count() const { return header_.record_count; }
    std::size_t values_per_record() const { return values_per_record_; }
    const DataCommitment& commitment() const { return commitment_; }

private:
    DatasetHandle() = default;

    Bytes read_verified_range(std::uint64_t offset, std::uint64_t length);

    std::ifstream file_;
    std::string path_;
    DatasetHeader header_;
    MerkleTree tree_;
    DataCommitment commitment_;
    std::size_t values_per_record_ = 0;
    std::uint64_t payload_offset_ = 0;
};

}  // namespace vfl
