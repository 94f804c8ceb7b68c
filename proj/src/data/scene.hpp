#pragma once

#include <array>
#include <string>
#include <string_view>

namespace aid::data {

enum class ShapeKind { kSquare, kCircle, kTriangle };
enum class Color { kRed, kGreen, kBlue };
enum class Direction { kLeft, kRight, kUp, kDown };

inline constexpr std::array kAllShapes{ShapeKind::kSquare, ShapeKind::kCircle,
                                       ShapeKind::kTriangle};
inline constexpr std::array kAllColors{Color::kRed, Color::kGreen, Color::kBlue};
inline constexpr std::array kAllDirections{Direction::kLeft, Direction::kRight, Direction::kUp,
                                           Direction::kDown};

std::string_view to_string(ShapeKind s);
std::string_view to_string(Color c);
std::string_view to_string(Direction d);
std::size_t channel_of(Color c);

// Instruction grammar: "move the <color> <shape> <direction>".
struct Instruction {
  Color color = Color::kRed;
  ShapeKind shape = ShapeKind::kSquare;
  Direction direction = Direction::kRight;

  std::string text() const;
  // Throws UsageError naming the grammar when the text is not a production.
  static Instruction parse(std::string_view text);

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

inline constexpr std::string_view kGrammar =
    "move the <red|green|blue> <square|circle|triangle> <left|right|up|down>";

// One moving object on a black canvas. Positions are the object's centre in
// pixel units (x right, y down); size is the side length, diameter or
// triangle base. Frame i is drawn at start + i * velocity.
struct SceneSpec {
  ShapeKind shape = ShapeKind::kSquare;
  Color color = Color::kRed;
  double x0 = 16.0, y0 = 16.0;
  double vx = 0.0, vy = 0.0;
  double size = 8.0;
  std::size_t canvas = 32;
  std::size_t frames = 8;

  bool in_canvas() const;
  // The instruction whose direction matches the dominant velocity axis.
  Instruction instruction() const;
};

}  // namespace aid::data
