#include "meg/genmodel/prompt.hpp"

#include <cctype>
#include <cmath>
#include <random>

#include "meg/bytes.hpp"

namespace meg::genmodel {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<float> PromptEmbedding::pooled() const {
  const std::size_t k = values.dim(0);
  const std::size_t e = values.dim(1);
  std::vector<float> out(e, 0.0f);
  for (std::size_t r = 0; r < k; ++r)
    for (std::size_t c = 0; c < e; ++c) out[c] += values[r * e + c];
  for (auto& v : out) v /= static_cast<float>(k);
  return out;
}

PromptEmbedding embed_prompt(std::string_view text, const EmbedderConfig& config) {
  auto tokens = tokenize(text);
  if (tokens.empty()) throw ArgumentError("embed_prompt: prompt has no tokens");
  PromptEmbedding emb;
  emb.values = nn::Tensor({config.max_tokens, config.embedding_size});
  emb.truncated = tokens.size() > config.max_tokens;
  emb.token_count = std::min(tokens.size(), config.max_tokens);
  for (std::size_t r = 0; r < emb.token_count; ++r) {
    std::mt19937_64 rng(fnv1a64(tokens[r]));
    std::normal_distribution<double> n;
    std::vector<double> v(config.embedding_size);
    double norm = 0;
    for (auto& x : v) {
      x = n(rng);
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (std::size_t c = 0; c < v.size(); ++c) emb.values[r * config.embedding_size + c] = static_cast<float>(v[c] / norm);
  }
  return emb;
}

}  // namespace meg::genmodel
