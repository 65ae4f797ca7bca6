#pragma once

#include <cstdint>
#include <random>

namespace carve {

// Deterministic random stream keyed by (master_seed, stream_id). Replication r of an experiment
// owns stream r, so results never depend on scheduling or thread count.
class RngStream {
public:
    RngStream(std::uint64_t master_seed, std::uint64_t stream_id);

    std::uint64_t master_seed() const noexcept { return master_seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }
    double exponential() { return exponential_(engine_); }
    std::uint64_t bits() { return engine_(); }

    std::mt19937_64& engine() noexcept { return engine_; }

private:
    std::uint64_t master_seed_;
    std::uint64_t stream_id_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
    std::exponential_distribution<double> exponential_{1.0};
};

}  // namespace carve
