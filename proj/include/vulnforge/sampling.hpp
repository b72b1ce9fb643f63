// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>

namespace vulnforge {

// Decoding parameters sent with a completion request. Providers accept a
// temperature in [0, 2] and a nucleus mass in (0, 1].
struct SamplingParams {
  double temperature = 1.0;
  double top_p = 0.9;

  bool valid() const {
    return temperature >= 0.0 && temperature <= 2.0 && top_p > 0.0 &&
           top_p <= 1.0;
  }
  bool operator==(const SamplingParams &) const = default;
};

// A rewrite style the replicator can ask for. The four built-ins always have
// a prompt template; other names must be registered before use.
struct CodingStyle {
  std::string name;

  static CodingStyle parameterized() { return {"parameterized"}; }
  static CodingStyle single_process_fsm() { return {"single_process_fsm"}; }
  static CodingStyle dual_process_fsm() { return {"dual_process_fsm"}; }
  static CodingStyle signal_renaming() { return {"signal_renaming"}; }

  auto operator<=>(const CodingStyle &) const = default;
};

}  // namespace vulnforge
