#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tapnet/adam.hpp"
#include "tapnet/network.hpp"
#include "tapnet/references.hpp"

namespace tapnet {

/// Binary container layout (all integers and 64-bit floats little-endian):
///   magic "TAPN", u32 version,
///   string architecture descriptor, u32 L, u32 n_way_train,
///   u64 episodes_trained, u64 seed, string config echo,
///   u32 tensor count, then per tensor: string name, u32 rank, u64 dims,
///   f64 data; u8 optimizer flag, and when set: u64 step count,
///   f64 beta1/beta2/eps, then first and second moments aligned with the
///   tensor list. Strings are u32 length + bytes. No timestamps anywhere, so
///   save -> load -> save is byte-identical.
struct CheckpointMeta {
    std::uint64_t episodes_trained = 0;
    std::uint64_t seed = 0;
    std::string config_echo;
};

struct OptimizerBlob {
    std::uint64_t step_count = 0;
    AdamConfig config;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
};

void save_checkpoint(const std::string& path, EmbeddingNetwork& net, const ReferenceBank& bank,
                     const AdamOptimizer* opt, const CheckpointMeta& meta);

struct LoadedCheckpoint {
    EmbeddingNetwork net;
    ReferenceBank bank;
    std::optional<OptimizerBlob> optimizer;
    CheckpointMeta meta;
};

/// Rejects unknown magic or version, truncated files, and tensors that do not
/// match the declared architecture.
LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace tapnet
