#include "data/scene.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <vector>

#include "error.hpp"

namespace aid::data {

std::string_view to_string(ShapeKind s) {
  switch (s) {
    case ShapeKind::kSquare: return "square";
    case ShapeKind::kCircle: return "circle";
    case ShapeKind::kTriangle: return "triangle";
  }
  return "?";
}

std::string_view to_string(Color c) {
  switch (c) {
    case Color::kRed: return "red";
    case Color::kGreen: return "green";
    case Color::kBlue: return "blue";
  }
  return "?";
}

std::string_view to_string(Direction d) {
  switch (d) {
    case Direction::kLeft: return "left";
    case Direction::kRight: return "right";
    case Direction::kUp: return "up";
    case Direction::kDown: return "down";
  }
  return "?";
}

std::size_t channel_of(Color c) { return static_cast<std::size_t>(c); }

std::string Instruction::text() const {
  std::string s = "move the ";
  s += to_string(color);
  s += ' ';
  s += to_string(shape);
  s += ' ';
  s += to_string(direction);
  return s;
}

namespace {

template <typename E, std::size_t N>
bool lookup(const std::array<E, N>& all, std::string_view word, E& out) {
  for (E e : all)
    if (to_string(e) == word) {
      out = e;
      return true;
    }
  return false;
}

}  // namespace

Instruction Instruction::parse(std::string_view text) {
  std::string lowered(text);
  std::transform(lowered.begin(), lowered.end(), lowered.begin(),
                 [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
  std::istringstream is(lowered);
  std::vector<std::string> words;
  for (std::string w; is >> w;) words.push_back(w);
  Instruction ins;
  const bool ok = words.size() == 5 && words[0] == "move" && words[1] == "the" &&
                  lookup(kAllColors, words[2], ins.color) &&
                  lookup(kAllShapes, words[3], ins.shape) &&
                  lookup(kAllDirections, words[4], ins.direction);
  if (!ok) {
    throw UsageError("instruction \"" + std::string(text) + "\" is outside the grammar \"" +
                     std::string(kGrammar) + "\"");
  }
  return ins;
}

bool SceneSpec::in_canvas() const {
  const double half = size / 2.0, lim = static_cast<double>(canvas);
  for (std::size_t i = 0; i < frames; ++i) {
    const double x = x0 + static_cast<double>(i) * vx, y = y0 + static_cast<double>(i) * vy;
    if (x - half < 0.0 || y - half < 0.0 || x + half > lim || y + half > lim) return false;
  }
  return true;
}

Instruction SceneSpec::instruction() const {
  Instruction ins{color, shape, Direction::kRight};
  if (std::abs(vx) >= std::abs(vy)) ins.direction = vx < 0 ? Direction::kLeft : Direction::kRight;
  else ins.direction = vy < 0 ? Direction::kUp : Direction::kDown;
  return ins;
}

}  // namespace aid::data
