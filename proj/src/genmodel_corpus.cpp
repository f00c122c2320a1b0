#include "meg/genmodel/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "meg/genmodel/prompt.hpp"

namespace meg::genmodel {

const std::vector<std::string>& brightness_words() {
  static const std::vector<std::string> w{"bright", "dim"};
  return w;
}

const std::vector<std::string>& shape_words() {
  static const std::vector<std::string> w{"circle", "square", "ring", "cross", "bar"};
  return w;
}

const std::vector<std::string>& position_words() {
  static const std::vector<std::string> w{"left", "right", "top", "bottom", "center"};
  return w;
}

std::vector<std::string> all_prompts() {
  std::vector<std::string> out;
  for (const auto& b : brightness_words())
    for (const auto& s : shape_words())
      for (const auto& p : position_words()) out.push_back(b + " " + s + " " + p);
  return out;
}

namespace {

// Soft coverage of a pixel by an edge at signed distance `d` (negative inside).
float coverage(double d) { return static_cast<float>(std::clamp(0.5 - d, 0.0, 1.0)); }

}  // namespace

PixelImage render_prompt(const std::string& prompt, const ImageGeometry& g, std::uint64_t jitter_seed) {
  std::string shape = "circle", position = "center";
  double level = 0.95;
  for (const auto& tok : tokenize(prompt)) {
    if (tok == "dim") level = 0.55;
    if (tok == "bright") level = 0.95;
    if (std::find(shape_words().begin(), shape_words().end(), tok) != shape_words().end()) shape = tok;
    if (std::find(position_words().begin(), position_words().end(), tok) != position_words().end()) position = tok;
  }

  const double w = static_cast<double>(g.width), h = static_cast<double>(g.height);
  double cx = 0.5 * w, cy = 0.5 * h;
  if (position == "left") cx = 0.3 * w;
  if (position == "right") cx = 0.7 * w;
  if (position == "top") cy = 0.3 * h;
  if (position == "bottom") cy = 0.7 * h;
  double size = 0.18 * std::min(w, h);

  if (jitter_seed != 0) {
    std::mt19937_64 rng(jitter_seed);
    std::uniform_real_distribution<double> shift(-0.06, 0.06), scale(0.85, 1.15);
    cx += shift(rng) * w;
    cy += shift(rng) * h;
    size *= scale(rng);
  }

  PixelImage img = PixelImage::zeros(g);
  const double background = 0.05;
  for (std::size_t c = 0; c < g.channels; ++c) {
    for (std::size_t y = 0; y < g.height; ++y) {
      for (std::size_t x = 0; x < g.width; ++x) {
        const double px = static_cast<double>(x) + 0.5 - cx;
        const double py = static_cast<double>(y) + 0.5 - cy;
        double d = 0;
        if (shape == "circle") {
          d = std::hypot(px, py) - size;
        } else if (shape == "square") {
          d = std::max(std::abs(px), std::abs(py)) - 0.85 * size;
        } else if (shape == "ring") {
          d = std::abs(std::hypot(px, py) - 0.8 * size) - 0.3 * size;
        } else if (shape == "cross") {
          const double arm = 0.3 * size;
          d = std::min(std::max(std::abs(px) - arm, std::abs(py) - size),
                       std::max(std::abs(px) - size, std::abs(py) - arm));
        } else {  // bar
          d = std::max(std::abs(px) - 1.4 * size, std::abs(py) - 0.35 * size);
        }
        const float cov = coverage(d);
        img.values[(c * g.height + y) * g.width + x] =
            static_cast<float>(background + (level - background) * cov);
      }
    }
  }
  return img;
}

std::vector<CorpusItem> make_corpus(const ImageGeometry& geometry, std::size_t variants_per_prompt,
                                    std::uint64_t seed) {
  std::vector<CorpusItem> out;
  std::mt19937_64 rng(seed);
  for (const auto& p : all_prompts()) {
    for (std::size_t v = 0; v < variants_per_prompt; ++v) {
      std::uint64_t js = rng();
      if (js == 0) js = 1;
      out.push_back({p, render_prompt(p, geometry, js)});
    }
  }
  return out;
}

}  // namespace meg::genmodel
