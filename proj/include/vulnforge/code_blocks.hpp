// Copyright vulnforge contributors.
// Licensed under the Apache License, Version 2.0, see LICENSE for details.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vulnforge {

// Bodies of ``` fenced blocks, in order. An unclosed trailing fence runs to
// the end of the text.
std::vector<std::string> fenced_blocks(std::string_view text);

// Code from an LLM completion: the largest fenced block, else the largest
// module ... endmodule span, else nothing.
std::optional<std::string> extract_code(std::string_view completion);

}  // namespace vulnforge
