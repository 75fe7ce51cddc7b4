#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "protojunk/errors.hpp"
#include "protojunk/model.hpp"

namespace protojunk {

// Binary store of encoder outputs. Layout: magic "PJE1", u32 version, u64
// record count, u32 dimension, then per record a u64 image id followed by
// `dimension` float32 values. All integers and floats little-endian.
struct EmbeddingStore {
    std::uint32_t version = 1;
    std::uint32_t dim = 0;
    std::vector<std::uint64_t> ids;
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> values;  // count x dim

    std::size_t count() const { return ids.size(); }
    bool has(std::uint64_t id) const { return index_.count(id) != 0; }
    // Engine math runs in 64-bit; storage stays 32-bit.
    Eigen::VectorXd embedding(std::uint64_t id) const;
    void rebuild_index();

private:
    std::unordered_map<std::uint64_t, std::size_t> index_;
};

EmbeddingStore make_store(std::uint32_t dim,
                          const std::vector<std::uint64_t>& ids,
                          const std::vector<Eigen::VectorXd>& vectors);

void write_embeddings(const EmbeddingStore& store, const std::string& path);
EmbeddingStore read_embeddings(const std::string& path);

struct ManifestRecord {
    std::uint64_t id = 0;
    std::vector<std::int64_t> categories;
    std::string source;  // "train" or "val"
};

struct Manifest {
    std::vector<ManifestRecord> records;
};

// One JSON object per line: {"id": 7, "categories": [1, 18], "source": "train"}
Manifest read_manifest(const std::string& path);
void write_manifest(const Manifest& manifest, const std::string& path);

// Full training state. Layout: magic "PJC1", u32 version, u8 distance mode,
// u32 D, u32 P, i64 train step, b_distance, b_magnitude, g (row-major f64),
// then the optimizer: i64 step, scalar moments, g moments. Round-trips are
// bit-exact so a resumed run continues identically.
struct AdamState {
    Eigen::MatrixXd m_g, v_g;
    double m_bd = 0.0, v_bd = 0.0;
    double m_bm = 0.0, v_bm = 0.0;
    std::int64_t step = 0;
};

struct Checkpoint {
    ModelParams params;
    AdamState opt;
    std::int64_t train_step = 0;
    Distance distance = Distance::euclidean;
};

void write_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace protojunk
