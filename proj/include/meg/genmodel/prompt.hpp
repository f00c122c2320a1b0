#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "meg/nn/tensor.hpp"

namespace meg::genmodel {

struct EmbedderConfig {
  std::size_t max_tokens = 8;       // K
  std::size_t embedding_size = 32;  // E
};

struct PromptEmbedding {
  nn::Tensor values;  // [K x E]; rows past token_count are zero
  std::size_t token_count = 0;
  bool truncated = false;

  /// Mean over all K rows (padding included).
  std::vector<float> pooled() const;
};

/// Lower-cased alphanumeric words of the prompt.
std::vector<std::string> tokenize(std::string_view text);

/// Deterministic hashed embedding: each token seeds a fixed pseudo-random
/// unit vector. Throws ArgumentError for a prompt without tokens; prompts
/// longer than K tokens are truncated and flagged.
PromptEmbedding embed_prompt(std::string_view text, const EmbedderConfig& config = {});

}  // namespace meg::genmodel
