#pragma once

#include <string>
#include <vector>

namespace mplp {

/// Lowercases and splits on whitespace and punctuation boundaries:
/// runs of [a-z0-9] (and UTF-8 continuation bytes) form words, every other
/// visible character is its own token. "I can't watch!" ->
/// ["i","can","'","t","watch","!"]. Deterministic; empty input -> empty list.
std::vector<std::string> tokenize(const std::string& text);

std::string join_tokens(const std::vector<std::string>& tokens);

}  // namespace mplp
