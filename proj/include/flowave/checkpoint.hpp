#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "flowave/adam.hpp"
#include "flowave/autograd.hpp"
#include "flowave/tensor.hpp"

namespace flowave {

/// Versioned binary checkpoint: magic, kind, step, ordered key=value config,
/// named float64 little-endian tensors, trailing CRC-32. Any flipped byte is
/// rejected at load; save -> load -> save is byte-identical.
struct Checkpoint {
    std::string kind;  // "flow", "ar", "student"
    std::int64_t step = 0;
    std::vector<std::pair<std::string, std::string>> config;
    std::vector<std::pair<std::string, Tensor>> tensors;

    void set(const std::string& key, const std::string& value);
    const std::string* get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;

    void add_tensor(const std::string& name, Tensor t);
    const Tensor* find_tensor(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

/// Copies parameter values into the checkpoint under their own names.
void pack_params(Checkpoint& ckpt, const std::vector<Param*>& params);

/// Restores parameter values; missing name or shape mismatch is an error
/// naming the parameter.
void unpack_params(const Checkpoint& ckpt, const std::vector<Param*>& params);

/// Optimizer state rides along as "adam.m:<name>" / "adam.v:<name>" tensors
/// plus config entries for the step and hyperparameters.
void pack_adam(Checkpoint& ckpt, const AdamState& state);
void unpack_adam(const Checkpoint& ckpt, AdamState& state);

std::uint32_t crc32_ieee(const unsigned char* data, std::size_t n);

}  // namespace flowave
