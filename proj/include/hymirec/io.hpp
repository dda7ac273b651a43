#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hymirec/codebook.hpp"
#include "hymirec/common.hpp"

namespace hymirec {

/// Item ids paired with their embeddings, the on-disk unit of exchange.
struct EmbeddingTable {
    std::vector<std::uint64_t> ids;
    EmbeddingArray vecs;
};

struct CodesTable {
    std::vector<std::uint64_t> ids;
    std::vector<QuantCode> codes;
};

struct TensorBlob {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::vector<float> data;
};

struct Checkpoint {
    std::uint64_t step = 0;
    std::string config_json;  // model geometry echo, validated on load
    std::vector<TensorBlob> tensors;
};

// All binary formats are little-endian with fixed headers:
//   EMBT: "EMBT" u32 version, u32 d, u64 count, then per item u64 id + d f32
//   CSRC: "CSRC" u32 version, u32 d, u32 L, u32 k, then L*k*d f32
//   QCOD: "QCOD" u32 version, u32 L, u64 count, then per item u64 id + L u32 + L f32
//   MIDX: "MIDX" u32 version, u32 d, u64 count, then per item u64 id + d f32
//   HMCK: "HMCK" u32 version, u64 step, config string, named f32 tensors

void write_embeddings(const std::string& path, const EmbeddingTable& table);
EmbeddingTable read_embeddings(const std::string& path);

void write_codebook(const std::string& path, const ResidualCodebook& cb);
ResidualCodebook read_codebook(const std::string& path);

void write_codes(const std::string& path, const CodesTable& table);
CodesTable read_codes(const std::string& path);

void write_index(const std::string& path, const std::vector<std::uint64_t>& ids,
                 const std::vector<float>& unit_vecs, int dim);
void read_index(const std::string& path, std::vector<std::uint64_t>& ids,
                std::vector<float>& unit_vecs, int& dim);

void write_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::string& path);

/// Line-delimited JSON {"user_id": ..., "item_ids": [...]}.
void write_sequences(const std::string& path, const std::vector<UserSequence>& seqs);
std::vector<UserSequence> read_sequences(const std::string& path);

/// FNV-1a 64 over a file's bytes, hex string; used for determinism checks
/// and run metadata.
std::string file_hash(const std::string& path);

}  // namespace hymirec
