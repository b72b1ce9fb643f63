// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace vulnforge {

// Name recorded in corpus manifests next to every content digest.
inline constexpr std::string_view kDigestAlgorithm = "sha256";

// Lower-case hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

// 64-bit FNV-1a. Stable across platforms, used for seeding and tagging, never
// for integrity.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace vulnforge
