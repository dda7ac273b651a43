#include "hymirec/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace hymirec {
namespace {

class BinWriter {
  public:
    explicit BinWriter(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw data_error("cannot open for writing: " + path);
    }
    void magic(const char (&m)[5]) { out_.write(m, 4); }
    void u32(std::uint32_t v) {
        unsigned char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        out_.write(reinterpret_cast<const char*>(b), 4);
    }
    void u64(std::uint64_t v) {
        unsigned char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
        out_.write(reinterpret_cast<const char*>(b), 8);
    }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
    void close(const std::string& path) {
        out_.flush();
        if (!out_) throw data_error("write failed: " + path);
    }

  private:
    std::ofstream out_;
};

class BinReader {
  public:
    explicit BinReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw data_error("cannot open: " + path);
    }
    void expect_magic(const char (&m)[5]) {
        char got[4];
        in_.read(got, 4);
        if (!in_ || std::memcmp(got, m, 4) != 0)
            throw data_error(path_ + ": bad magic, expected " + m);
    }
    std::uint32_t u32() {
        unsigned char b[4];
        read(b, 4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return v;
    }
    std::uint64_t u64() {
        unsigned char b[8];
        read(b, 8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }
    float f32() { return std::bit_cast<float>(u32()); }
    void read(void* p, std::size_t n) {
        in_.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n));
        if (!in_) throw data_error(path_ + ": truncated file");
    }

  private:
    std::ifstream in_;
    std::string path_;
};

constexpr std::uint32_t kFormatVersion = 1;

}  // namespace

void write_embeddings(const std::string& path, const EmbeddingTable& table) {
    if (table.ids.size() != table.vecs.size()) throw data_error("embedding table id/vec mismatch");
    BinWriter w(path);
    w.magic("EMBT");
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(table.vecs.dim));
    w.u64(table.ids.size());
    for (std::size_t i = 0; i < table.ids.size(); ++i) {
        w.u64(table.ids[i]);
        const double* v = table.vecs.ptr(i);
        for (int t = 0; t < table.vecs.dim; ++t) w.f32(static_cast<float>(v[t]));
    }
    w.close(path);
}

EmbeddingTable read_embeddings(const std::string& path) {
    BinReader r(path);
    r.expect_magic("EMBT");
    if (r.u32() != kFormatVersion) throw data_error(path + ": unsupported version");
    const int dim = static_cast<int>(r.u32());
    const std::uint64_t count = r.u64();
    if (dim <= 0) throw data_error(path + ": bad dimension");
    EmbeddingTable table;
    table.vecs = EmbeddingArray(dim, count);
    table.ids.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        table.ids[i] = r.u64();
        double* v = table.vecs.ptr(i);
        for (int t = 0; t < dim; ++t) v[t] = r.f32();
    }
    return table;
}

void write_codebook(const std::string& path, const ResidualCodebook& cb) {
    BinWriter w(path);
    w.magic("CSRC");
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(cb.dim));
    w.u32(static_cast<std::uint32_t>(cb.layers));
    w.u32(static_cast<std::uint32_t>(cb.k));
    for (double v : cb.centroids) w.f32(static_cast<float>(v));
    w.close(path);
}

ResidualCodebook read_codebook(const std::string& path) {
    BinReader r(path);
    r.expect_magic("CSRC");
    if (r.u32() != kFormatVersion) throw data_error(path + ": unsupported version");
    ResidualCodebook cb;
    cb.dim = static_cast<int>(r.u32());
    cb.layers = static_cast<int>(r.u32());
    cb.k = static_cast<int>(r.u32());
    if (cb.dim <= 0 || cb.layers <= 0 || cb.k <= 0) throw data_error(path + ": bad header");
    cb.centroids.resize(static_cast<std::size_t>(cb.layers) * cb.k * cb.dim);
    for (double& v : cb.centroids) v = r.f32();
    return cb;
}

void write_codes(const std::string& path, const CodesTable& table) {
    if (table.ids.size() != table.codes.size()) throw data_error("codes table id/code mismatch");
    const int layers = table.codes.empty() ? 0 : static_cast<int>(table.codes[0].codes.size());
    BinWriter w(path);
    w.magic("QCOD");
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(layers));
    w.u64(table.ids.size());
    for (std::size_t i = 0; i < table.ids.size(); ++i) {
        const QuantCode& q = table.codes[i];
        if (static_cast<int>(q.codes.size()) != layers) throw data_error("ragged codes table");
        w.u64(table.ids[i]);
        for (std::uint32_t c : q.codes) w.u32(c);
        for (double p : q.projections) w.f32(static_cast<float>(p));
    }
    w.close(path);
}

CodesTable read_codes(const std::string& path) {
    BinReader r(path);
    r.expect_magic("QCOD");
    if (r.u32() != kFormatVersion) throw data_error(path + ": unsupported version");
    const int layers = static_cast<int>(r.u32());
    const std::uint64_t count = r.u64();
    CodesTable table;
    table.ids.resize(count);
    table.codes.resize(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        table.ids[i] = r.u64();
        QuantCode& q = table.codes[i];
        q.codes.resize(layers);
        q.projections.resize(layers);
        for (int l = 0; l < layers; ++l) q.codes[l] = r.u32();
        for (int l = 0; l < layers; ++l) q.projections[l] = r.f32();
    }
    return table;
}

void write_index(const std::string& path, const std::vector<std::uint64_t>& ids,
                 const std::vector<float>& unit_vecs, int dim) {
    if (ids.size() * static_cast<std::size_t>(dim) != unit_vecs.size())
        throw data_error("index id/vector mismatch");
    BinWriter w(path);
    w.magic("MIDX");
    w.u32(kFormatVersion);
    w.u32(static_cast<std::uint32_t>(dim));
    w.u64(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        w.u64(ids[i]);
        for (int t = 0; t < dim; ++t) w.f32(unit_vecs[i * static_cast<std::size_t>(dim) + t]);
    }
    w.close(path);
}

void read_index(const std::string& path, std::vector<std::uint64_t>& ids,
                std::vector<float>& unit_vecs, int& dim) {
    BinReader r(path);
    r.expect_magic("MIDX");
    if (r.u32() != kFormatVersion) throw data_error(path + ": unsupported version");
    dim = static_cast<int>(r.u32());
    const std::uint64_t count = r.u64();
    ids.resize(count);
    unit_vecs.resize(count * static_cast<std::size_t>(dim));
    for (std::uint64_t i = 0; i < count; ++i) {
        ids[i] = r.u64();
        for (int t = 0; t < dim; ++t) unit_vecs[i * static_cast<std::size_t>(dim) + t] = r.f32();
    }
}

void write_checkpoint(const std::string& path, const Checkpoint& ck) {
    BinWriter w(path);
    w.magic("HMCK");
    w.u32(kFormatVersion);
    w.u64(ck.step);
    w.u32(static_cast<std::uint32_t>(ck.config_json.size()));
    w.bytes(ck.config_json.data(), ck.config_json.size());
    w.u32(static_cast<std::uint32_t>(ck.tensors.size()));
    for (const TensorBlob& t : ck.tensors) {
        w.u32(static_cast<std::uint32_t>(t.name.size()));
        w.bytes(t.name.data(), t.name.size());
        w.u32(static_cast<std::uint32_t>(t.rows));
        w.u32(static_cast<std::uint32_t>(t.cols));
        for (float v : t.data) w.f32(v);
    }
    w.close(path);
}

Checkpoint read_checkpoint(const std::string& path) {
    BinReader r(path);
    r.expect_magic("HMCK");
    if (r.u32() != kFormatVersion) throw data_error(path + ": unsupported version");
    Checkpoint ck;
    ck.step = r.u64();
    const std::uint32_t cfg_len = r.u32();
    ck.config_json.resize(cfg_len);
    if (cfg_len > 0) r.read(ck.config_json.data(), cfg_len);
    const std::uint32_t n = r.u32();
    ck.tensors.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        TensorBlob& t = ck.tensors[i];
        const std::uint32_t name_len = r.u32();
        t.name.resize(name_len);
        if (name_len > 0) r.read(t.name.data(), name_len);
        t.rows = static_cast<int>(r.u32());
        t.cols = static_cast<int>(r.u32());
        t.data.resize(static_cast<std::size_t>(t.rows) * t.cols);
        for (float& v : t.data) v = r.f32();
    }
    return ck;
}

void write_sequences(const std::string& path, const std::vector<UserSequence>& seqs) {
    std::ofstream out(path);
    if (!out) throw data_error("cannot open for writing: " + path);
    for (const UserSequence& s : seqs) {
        nlohmann::json j;
        j["user_id"] = s.user_id;
        j["item_ids"] = s.item_ids;
        out << j.dump() << '\n';
    }
    if (!out) throw data_error("write failed: " + path);
}

std::vector<UserSequence> read_sequences(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw data_error("cannot open: " + path);
    std::vector<UserSequence> seqs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw data_error(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.contains("user_id") || !j.contains("item_ids"))
            throw data_error(path + ":" + std::to_string(lineno) + ": missing user_id/item_ids");
        UserSequence s;
        s.user_id = j["user_id"].get<std::uint64_t>();
        s.item_ids = j["item_ids"].get<std::vector<std::uint64_t>>();
        seqs.push_back(std::move(s));
    }
    return seqs;
}

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw data_error("cannot open: " + path);
    std::uint64_t h = 1469598103934665603ULL;
    char buf[4096];
    while (in) {
        in.read(buf, sizeof buf);
        const std::streamsize got = in.gcount();
        for (std::streamsize i = 0; i < got; ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 1099511628211ULL;
        }
    }
    char hex[17];
    std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
    return std::string(hex);
}

}  // namespace hymirec
