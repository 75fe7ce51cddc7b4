#include "protojunk/io.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace protojunk {

namespace {

constexpr char kEmbeddingMagic[4] = {'P', 'J', 'E', '1'};
constexpr char kCheckpointMagic[4] = {'P', 'J', 'C', '1'};

void put_bytes(std::string& buf, const void* p, std::size_t n) {
    buf.append(static_cast<const char*>(p), n);
}

void put_u32(std::string& buf, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    put_bytes(buf, b, 4);
}

void put_u64(std::string& buf, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    put_bytes(buf, b, 8);
}

void put_i64(std::string& buf, std::int64_t v) { put_u64(buf, static_cast<std::uint64_t>(v)); }

void put_f32(std::string& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

void put_f64(std::string& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(buf, bits);
}

// Sequential reader over an in-memory file image; every shortfall reports the
// byte offset where the needed data would have started.
class Cursor {
public:
    Cursor(const std::string& data, const std::string& what) : data_(data), what_(what) {}

    std::uint64_t offset() const { return pos_; }

    void need(std::size_t n, const char* field) {
        if (pos_ + n > data_.size()) {
            throw CorruptionError(what_ + ": truncated while reading " + field, pos_);
        }
    }

    void raw(void* out, std::size_t n, const char* field) {
        need(n, field);
        std::memcpy(out, data_.data() + pos_, n);
        pos_ += n;
    }

    std::uint32_t u32(const char* field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::uint64_t u64(const char* field) {
        need(8, field);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += 8;
        return v;
    }

    std::int64_t i64(const char* field) { return static_cast<std::int64_t>(u64(field)); }

    float f32(const char* field) {
        std::uint32_t bits = u32(field);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }

    double f64(const char* field) {
        std::uint64_t bits = u64(field);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }

    void expect_end() {
        if (pos_ != data_.size()) {
            throw CorruptionError(what_ + ": trailing bytes after final record", pos_);
        }
    }

private:
    const std::string& data_;
    std::string what_;
    std::uint64_t pos_ = 0;
};

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidInput("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

void spill(const std::string& path, const std::string& data) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInput("cannot open " + path + " for writing");
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    if (!out) throw Error("write failed for " + path);
}

void check_magic(Cursor& c, const char (&magic)[4], const std::string& path) {
    char got[4];
    c.raw(got, 4, "magic");
    if (std::memcmp(got, magic, 4) != 0) {
        throw FormatError(path + ": bad magic, not a " +
                          std::string(magic, 4) + " file");
    }
}

}  // namespace

Eigen::VectorXd EmbeddingStore::embedding(std::uint64_t id) const {
    auto it = index_.find(id);
    if (it == index_.end()) {
        throw InvalidInput("embedding id " + std::to_string(id) + " not in store");
    }
    return values.row(static_cast<Eigen::Index>(it->second)).cast<double>().transpose();
}

void EmbeddingStore::rebuild_index() {
    index_.clear();
    index_.reserve(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        auto [it, inserted] = index_.emplace(ids[i], i);
        if (!inserted) {
            throw IntegrityError("duplicate embedding id " + std::to_string(ids[i]));
        }
    }
}

EmbeddingStore make_store(std::uint32_t dim,
                          const std::vector<std::uint64_t>& ids,
                          const std::vector<Eigen::VectorXd>& vectors) {
    if (ids.size() != vectors.size()) {
        throw InvalidInput("make_store: ids and vectors differ in length");
    }
    EmbeddingStore store;
    store.dim = dim;
    store.ids = ids;
    store.values.resize(static_cast<Eigen::Index>(ids.size()), dim);
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        if (vectors[i].size() != static_cast<Eigen::Index>(dim)) {
            throw InvalidInput("make_store: vector dimension mismatch at index " +
                               std::to_string(i));
        }
        store.values.row(static_cast<Eigen::Index>(i)) = vectors[i].cast<float>().transpose();
    }
    store.rebuild_index();
    return store;
}

void write_embeddings(const EmbeddingStore& store, const std::string& path) {
    std::string buf;
    buf.reserve(20 + store.count() * (8 + 4ULL * store.dim));
    put_bytes(buf, kEmbeddingMagic, 4);
    put_u32(buf, store.version);
    put_u64(buf, store.count());
    put_u32(buf, store.dim);
    for (std::size_t i = 0; i < store.count(); ++i) {
        put_u64(buf, store.ids[i]);
        for (std::uint32_t j = 0; j < store.dim; ++j) {
            put_f32(buf, store.values(static_cast<Eigen::Index>(i), j));
        }
    }
    spill(path, buf);
}

EmbeddingStore read_embeddings(const std::string& path) {
    const std::string data = slurp(path);
    Cursor c(data, path);
    check_magic(c, kEmbeddingMagic, path);
    EmbeddingStore store;
    store.version = c.u32("version");
    if (store.version != 1) {
        throw FormatError(path + ": unsupported embedding store version " +
                          std::to_string(store.version));
    }
    const std::uint64_t count = c.u64("record count");
    store.dim = c.u32("dimension");
    if (store.dim == 0 && count > 0) {
        throw FormatError(path + ": zero dimension with nonzero record count");
    }
    store.ids.reserve(count);
    store.values.resize(static_cast<Eigen::Index>(count), store.dim);
    for (std::uint64_t i = 0; i < count; ++i) {
        store.ids.push_back(c.u64("record id"));
        for (std::uint32_t j = 0; j < store.dim; ++j) {
            const float v = c.f32("embedding value");
            if (!std::isfinite(v)) {
                throw IntegrityError(path + ": non-finite value in record id " +
                                     std::to_string(store.ids.back()) + " at component " +
                                     std::to_string(j));
            }
            store.values(static_cast<Eigen::Index>(i), j) = v;
        }
    }
    c.expect_end();
    store.rebuild_index();
    return store;
}

Manifest read_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidInput("cannot open " + path);
    Manifest manifest;
    std::unordered_map<std::uint64_t, std::size_t> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(path + ": " + e.what(), lineno);
        }
        if (!j.is_object() || !j.contains("id") || !j.contains("categories") ||
            !j.contains("source")) {
            throw ParseError(path + ": record needs id, categories, source", lineno);
        }
        ManifestRecord rec;
        if (!j["id"].is_number_unsigned()) {
            throw ParseError(path + ": id must be a non-negative integer", lineno);
        }
        rec.id = j["id"].get<std::uint64_t>();
        if (!j["categories"].is_array() || j["categories"].empty()) {
            throw ParseError(path + ": categories must be a non-empty array", lineno);
        }
        for (const auto& c : j["categories"]) {
            if (!c.is_number_unsigned()) {
                throw ParseError(path + ": category ids must be non-negative integers", lineno);
            }
            rec.categories.push_back(c.get<std::int64_t>());
        }
        rec.source = j["source"].get<std::string>();
        if (rec.source != "train" && rec.source != "val") {
            throw ParseError(path + ": source must be \"train\" or \"val\"", lineno);
        }
        auto [it, inserted] = seen.emplace(rec.id, lineno);
        if (!inserted) {
            throw IntegrityError(path + ": duplicate image id " + std::to_string(rec.id) +
                                 " (lines " + std::to_string(it->second) + " and " +
                                 std::to_string(lineno) + ")");
        }
        manifest.records.push_back(std::move(rec));
    }
    return manifest;
}

void write_manifest(const Manifest& manifest, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InvalidInput("cannot open " + path + " for writing");
    for (const auto& rec : manifest.records) {
        nlohmann::json j;
        j["id"] = rec.id;
        j["categories"] = rec.categories;
        j["source"] = rec.source;
        out << j.dump() << "\n";
    }
    if (!out) throw Error("write failed for " + path);
}

void write_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    const auto& p = ckpt.params;
    const auto D = p.dim();
    const auto P = p.proj_dim();
    if (ckpt.opt.m_g.rows() != D || ckpt.opt.m_g.cols() != P ||
        ckpt.opt.v_g.rows() != D || ckpt.opt.v_g.cols() != P) {
        throw InvalidInput("write_checkpoint: optimizer shape does not match params");
    }
    std::string buf;
    put_bytes(buf, kCheckpointMagic, 4);
    put_u32(buf, 1);
    buf.push_back(static_cast<char>(ckpt.distance));
    put_u32(buf, static_cast<std::uint32_t>(D));
    put_u32(buf, static_cast<std::uint32_t>(P));
    put_i64(buf, ckpt.train_step);
    put_f64(buf, p.b_distance);
    put_f64(buf, p.b_magnitude);
    auto put_matrix = [&](const Eigen::MatrixXd& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) put_f64(buf, m(i, j));
        }
    };
    put_matrix(p.g);
    put_i64(buf, ckpt.opt.step);
    put_f64(buf, ckpt.opt.m_bd);
    put_f64(buf, ckpt.opt.v_bd);
    put_f64(buf, ckpt.opt.m_bm);
    put_f64(buf, ckpt.opt.v_bm);
    put_matrix(ckpt.opt.m_g);
    put_matrix(ckpt.opt.v_g);
    spill(path, buf);
}

Checkpoint read_checkpoint(const std::string& path) {
    const std::string data = slurp(path);
    Cursor c(data, path);
    check_magic(c, kCheckpointMagic, path);
    const std::uint32_t version = c.u32("version");
    if (version != 1) {
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    Checkpoint ckpt;
    std::uint8_t mode;
    c.raw(&mode, 1, "distance mode");
    if (mode > 1) throw FormatError(path + ": unknown distance mode " + std::to_string(mode));
    ckpt.distance = static_cast<Distance>(mode);
    const std::uint32_t D = c.u32("dimension");
    const std::uint32_t P = c.u32("projected dimension");
    ckpt.train_step = c.i64("train step");
    ckpt.params.b_distance = c.f64("b_distance");
    ckpt.params.b_magnitude = c.f64("b_magnitude");
    auto get_matrix = [&](const char* field) {
        Eigen::MatrixXd m(D, P);
        for (std::uint32_t i = 0; i < D; ++i) {
            for (std::uint32_t j = 0; j < P; ++j) m(i, j) = c.f64(field);
        }
        return m;
    };
    ckpt.params.g = get_matrix("projection");
    ckpt.opt.step = c.i64("optimizer step");
    ckpt.opt.m_bd = c.f64("optimizer moment");
    ckpt.opt.v_bd = c.f64("optimizer moment");
    ckpt.opt.m_bm = c.f64("optimizer moment");
    ckpt.opt.v_bm = c.f64("optimizer moment");
    ckpt.opt.m_g = get_matrix("optimizer moment");
    ckpt.opt.v_g = get_matrix("optimizer moment");
    c.expect_end();
    return ckpt;
}

}  // namespace protojunk
