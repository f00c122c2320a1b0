#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meg/genmodel/types.hpp"

namespace meg::genmodel {

/// Procedural prompt -> image pairs. Prompts combine one word from each
/// vocabulary list ("bright ring left"); the image draws that shape at that
/// position with small seeded jitter in placement and size.
struct CorpusItem {
  std::string prompt;
  PixelImage image;
};

const std::vector<std::string>& brightness_words();
const std::vector<std::string>& shape_words();
const std::vector<std::string>& position_words();

/// Every brightness x shape x position prompt, in a fixed order.
std::vector<std::string> all_prompts();

/// Renders the image a prompt describes. Unknown words are ignored and
/// missing attributes fall back to "bright circle center". `jitter_seed`
/// perturbs position and size; 0 renders the canonical image.
PixelImage render_prompt(const std::string& prompt, const ImageGeometry& geometry, std::uint64_t jitter_seed);

/// `variants_per_prompt` jittered renderings of every prompt.
std::vector<CorpusItem> make_corpus(const ImageGeometry& geometry, std::size_t variants_per_prompt,
                                    std::uint64_t seed);

}  // namespace meg::genmodel
