#include "vfl/merkle.hpp"

#include <stdexcept>

namespace vfl {

namespace {

Digest leaf_hash(std::span<const std::uint8_t> block) {
    Sha256 h;
    h.update(domain::kMerkleLeaf).update(block);
    return h.finish();
}

Digest node_hash(const Digest& left, const Digest& right) {
    Sha256 h;
    h.update(domain::kMerkleNode).update(left).update(right);
    return h.finish();
}

MerkleTree build_from_leaves(std::vector<Digest> leaves, std::size_t block_size) {
    MerkleTree tree;
    tree.block_size = block_size;
    tree.levels.push_back(std::move(leaves));
    while (tree.levels.back().size() > 1) {
        const auto& prev = tree.levels.back();
        std::vector<Digest> next;
        next.reserve((prev.size() + 1) / 2);
        std::size_t i = 0;
        for (; i + 1 < prev.size(); i += 2) next.push_back(node_hash(prev[i], prev[i + 1]));
        if (i < prev.size()) next.push_back(prev[i]);  // promote the odd node
        tree.levels.push_back(std::move(next));
    }
    return tree;
}

}  // namespace

MerkleTree merkle_build(std::span<const Bytes> blocks, std::size_t block_size) {
    if (blocks.empty()) throw std::invalid_argument("merkle_build: no blocks");
    std::vector<Digest> leaves;
    leaves.reserve(blocks.size());
    for (const auto& b : blocks) {
        if (b.size() != block_size)
            throw std::invalid_argument("merkle_build: block not block_size bytes");
        leaves.push_back(leaf_hash(b));
    }
    return build_from_leaves(std::move(leaves), block_size);
}

MerkleTree merkle_build_payload(std::span<const std::uint8_t> payload, std::size_t block_size) {
    if (payload.empty() || payload.size() % block_size != 0)
        throw std::invalid_argument("merkle_build_payload: length not a multiple of block_size");
    std::vector<Digest> leaves;
    leaves.reserve(payload.size() / block_size);
    for (std::size_t off = 0; off < payload.size(); off += block_size)
        leaves.push_back(leaf_hash(payload.subspan(off, block_size)));
    return build_from_leaves(std::move(leaves), block_size);
}

MerkleProof merkle_prove(const MerkleTree& tree, std::size_t index) {
    if (index >= tree.leaf_count()) throw std::out_of_range("merkle_prove: bad leaf index");
    MerkleProof proof;
    std::size_t pos = index;
    for (std::size_t lvl = 0; lvl + 1 < tree.levels.size(); ++lvl) {
        const auto& nodes = tree.levels[lvl];
        MerkleProofNode n;
        if (pos % 2 == 1) {
            n.sibling = nodes[pos - 1];
            n.sibling_is_left = true;
        } else if (pos + 1 < nodes.size()) {
            n.sibling = nodes[pos + 1];
            n.sibling_is_left = false;
        }
        // else: promoted node, sibling stays empty
        proof.push_back(n);
        pos /= 2;
    }
    return proof;
}

bool merkle_verify_block(const Digest& root, std::size_t index,
                         std::span<const std::uint8_t> block, const MerkleProof& path) {
    Digest cur = leaf_hash(block);
    std::size_t pos = index;
    for (const auto& node : path) {
        if (node.sibling) {
            // The claimed side must agree with the index bit at this level.
            if (node.sibling_is_left != (pos % 2 == 1)) return false;
            cur = node.sibling_is_left ? node_hash(*node.sibling, cur)
                                       : node_hash(cur, *node.sibling);
        } else {
            if (pos % 2 != 0) return false;  // only a trailing even node is promoted
        }
        pos /= 2;
    }
    return pos == 0 && cur == root;
}

DataCommitment make_commitment(const Digest& root, const Salt& salt) {
    Sha256 h;
    h.update(domain::kCommitment).update(salt).update(root);
    return DataCommitment{root, salt, h.finish()};
}

Digest code_measurement(std::span<const std::uint8_t> code_image) {
    if (code_image.empty()) throw std::invalid_argument("code_measurement: empty image");
    Bytes padded(code_image.begin(), code_image.end());
    padded.resize((padded.size() + kBlockSize - 1) / kBlockSize * kBlockSize, 0);
    return merkle_build_payload(padded).root();
}

}  // namespace vfl
