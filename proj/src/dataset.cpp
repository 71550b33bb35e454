#include "vfl/dataset.hpp"

#include <bit>
#include <cstring>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "vfl/errors.hpp"

namespace vfl {

namespace {

constexpr char kMagic[4] = {'V', 'F', 'L', 'D'};
constexpr std::size_t kHeaderSize = 4 + 2 + 4 + 4 + 8;

void put_f64_le(Bytes& out, double v) {
    put_u64_le(out, std::bit_cast<std::uint64_t>(v));
}

double get_f64_le(std::span<const std::uint8_t> b) {
    return std::bit_cast<double>(get_u64_le(b));
}

Bytes encode_header(const DatasetHeader& h) {
    Bytes out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u16_le(out, h.version);
    put_u32_le(out, h.block_size);
    put_u32_le(out, h.record_width);
    put_u64_le(out, h.record_count);
    return out;
}

DatasetHeader decode_header(std::span<const std::uint8_t> raw) {
    if (raw.size() < kHeaderSize || std::memcmp(raw.data(), kMagic, 4) != 0)
        throw Error("not a dataset image (bad magic)");
    DatasetHeader h;
    h.version = get_u16_le(raw.subspan(4));
    h.block_size = get_u32_le(raw.subspan(6));
    h.record_width = get_u32_le(raw.subspan(10));
    h.record_count = get_u64_le(raw.subspan(14));
    if (h.version != 1 && h.version != 2) throw Error("unsupported image version");
    if (h.block_size == 0 || h.record_width == 0) throw Error("corrupt image header");
    return h;
}

std::size_t values_per_record_v1(const DatasetHeader& h) {
    if (h.record_width % 8 != 0) throw Error("corrupt image header: record width");
    return h.record_width / 8;
}

Record decode_record(std::span<const std::uint8_t> raw, const DatasetHeader& h,
                     std::size_t values_per_record) {
    Record r;
    if (h.version == 1) {
        r.values.reserve(values_per_record);
        for (std::size_t i = 0; i < values_per_record; ++i)
            r.values.push_back(get_f64_le(raw.subspan(i * 8)));
    } else {
        std::uint32_t nvals = get_u32_le(raw);
        if (nvals != values_per_record || 4 + 8ull * nvals + 4 > raw.size())
            throw IntegrityViolation("record framing does not match image header");
        r.values.reserve(nvals);
        for (std::size_t i = 0; i < nvals; ++i)
            r.values.push_back(get_f64_le(raw.subspan(4 + i * 8)));
        std::uint32_t tlen = get_u32_le(raw.subspan(4 + 8ull * nvals));
        if (4 + 8ull * nvals + 4 + tlen > raw.size())
            throw IntegrityViolation("record text overruns record width");
        auto text = raw.subspan(4 + 8ull * nvals + 4, tlen);
        r.text.assign(text.begin(), text.end());
    }
    return r;
}

}  // namespace

DatasetImage pack_dataset(std::span<const Record> records, const Salt& salt) {
    if (records.empty()) throw std::invalid_argument("pack_dataset: no records");

    const std::size_t nvals = records.front().values.size();
    std::size_t max_text = 0;
    bool has_text = false;
    for (const auto& r : records) {
        if (r.values.size() != nvals)
            throw std::invalid_argument("pack_dataset: ragged record widths");
        if (!r.text.empty()) has_text = true;
        max_text = std::max(max_text, r.text.size());
    }
    if (nvals == 0) throw std::invalid_argument("pack_dataset: records have no values");

    DatasetImage img;
    img.header.version = has_text ? 2 : 1;
    img.header.record_count = records.size();
    img.header.record_width =
        has_text ? static_cast<std::uint32_t>(4 + 8 * nvals + 4 + max_text)
                 : static_cast<std::uint32_t>(8 * nvals);
    if (img.header.record_width > img.header.block_size)
        throw std::invalid_argument("pack_dataset: record wider than one block");

    img.payload.reserve(records.size() * img.header.record_width + kBlockSize);
    for (const auto& r : records) {
        std::size_t start = img.payload.size();
        if (has_text) {
            put_u32_le(img.payload, static_cast<std::uint32_t>(nvals));
            for (double v : r.values) put_f64_le(img.payload, v);
            put_u32_le(img.payload, static_cast<std::uint32_t>(r.text.size()));
            img.payload.insert(img.payload.end(), r.text.begin(), r.text.end());
        } else {
            for (double v : r.values) put_f64_le(img.payload, v);
        }
        img.payload.resize(start + img.header.record_width, 0);
    }
    img.payload.resize((img.payload.size() + kBlockSize - 1) / kBlockSize * kBlockSize, 0);

    MerkleTree tree = merkle_build_payload(img.payload);
    img.commitment = make_commitment(tree.root(), salt);
    return img;
}

std::string sidecar_path(const std::string& image_path) {
    return image_path + ".sidecar.json";
}

void save_image(const DatasetImage& image, const std::string& path) {
    Bytes file = encode_header(image.header);
    file.insert(file.end(), image.payload.begin(), image.payload.end());
    write_file(path, file);

    nlohmann::json sc;
    sc["root"] = image.commitment.root.hex();
    sc["salt"] = hex_encode(image.commitment.salt);
    sc["commitment"] = image.commitment.commitment.hex();
    sc["block_count"] = image.block_count();
    sc["block_size"] = image.header.block_size;
    write_file(sidecar_path(path), sc.dump());
}

DataCommitment load_sidecar(const std::string& image_path) {
    Bytes raw = read_file(sidecar_path(image_path));
    nlohmann::json sc = nlohmann::json::parse(raw.begin(), raw.end());
    DataCommitment c;
    c.root = Digest::from_hex(sc.at("root").get<std::string>());
    Bytes salt = hex_decode(sc.at("salt").get<std::string>());
    if (salt.size() != c.salt.size()) throw Error("sidecar salt must be 16 bytes");
    std::copy(salt.begin(), salt.end(), c.salt.begin());
    c.commitment = Digest::from_hex(sc.at("commitment").get<std::string>());
    return c;
}

DatasetHandle DatasetHandle::mount(const std::string& image_path,
                                   const DataCommitment& expected) {
    DatasetHandle h;
    h.path_ = image_path;

    Bytes file = read_file(image_path);
    h.header_ = decode_header(file);
    h.payload_offset_ = kHeaderSize;
    std::size_t payload_len = file.size() - kHeaderSize;
    if (payload_len == 0 || payload_len % h.header_.block_size != 0)
        throw Error("image payload is not block-aligned");

    DataCommitment sidecar = load_sidecar(image_path);
    h.tree_ = merkle_build_payload(
        std::span<const std::uint8_t>(file).subspan(kHeaderSize), h.header_.block_size);

    DataCommitment recomputed = make_commitment(h.tree_.root(), sidecar.salt);
    if (recomputed.commitment != sidecar.commitment || recomputed.root != sidecar.root)
        throw CommitmentMismatch("image payload does not match its sidecar commitment");
    if (recomputed.commitment != expected.commitment)
        throw CommitmentMismatch("dataset commitment does not match the expected commitment");
    h.commitment_ = recomputed;

    if (h.header_.record_width == 0 ||
        h.header_.record_count * static_cast<std::uint64_t>(h.header_.record_width) >
            payload_len)
        throw Error("image header inconsistent with payload size");

    if (h.header_.version == 1) {
        h.values_per_record_ = values_per_record_v1(h.header_);
    } else {
        // v2 rows are self-framing; take the value count from the first row.
        std::span<const std::uint8_t> first =
            std::span<const std::uint8_t>(file).subspan(kHeaderSize, h.header_.record_width);
        h.values_per_record_ = get_u32_le(first);
        if (h.values_per_record_ == 0 || 4 + 8 * h.values_per_record_ + 4 > h.header_.record_width)
            throw Error("image header inconsistent with record framing");
    }

    h.file_.open(image_path, std::ios::binary);
    if (!h.file_) throw Error("cannot reopen image: " + image_path);
    return h;
}

Bytes DatasetHandle::read_verified_range(std::uint64_t offset, std::uint64_t length) {
    const std::uint64_t bs = header_.block_size;
    const std::size_t first_block = offset / bs;
    const std::size_t last_block = (offset + length - 1) / bs;

    Bytes out;
    out.reserve(length);
    Bytes block(bs);
    for (std::size_t b = first_block; b <= last_block; ++b) {
        file_.clear();
        file_.seekg(static_cast<std::streamoff>(payload_offset_ + b * bs));
        file_.read(reinterpret_cast<char*>(block.data()), static_cast<std::streamsize>(bs));
        if (file_.gcount() != static_cast<std::streamsize>(bs))
            throw IntegrityViolation("image truncated while mounted");
        if (!merkle_verify_block(tree_.root(), b, block, merkle_prove(tree_, b)))
            throw IntegrityViolation("block " + std::to_string(b) +
                                     " failed Merkle verification");
        std::uint64_t lo = std::max<std::uint64_t>(offset, b * bs);
        std::uint64_t hi = std::min<std::uint64_t>(offset + length, (b + 1) * bs);
        out.insert(out.end(), block.begin() + (lo - b * bs), block.begin() + (hi - b * bs));
    }
    return out;
}

Record DatasetHandle::read_record(std::size_t index) {
    if (index >= header_.record_count)
        throw std::out_of_range("read_record: index " + std::to_string(index) +
                                " out of range");
    Bytes raw = read_verified_range(static_cast<std::uint64_t>(index) * header_.record_width,
                                    header_.record_width);
    return decode_record(raw, header_, values_per_record_);
}

std::vector<Record> DatasetHandle::read_all() {
    std::vector<Record> out;
    out.reserve(header_.record_count);
    for (std::size_t i = 0; i < header_.record_count; ++i) out.push_back(read_record(i));
    return out;
}

}  // namespace vfl
