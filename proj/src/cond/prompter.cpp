#include "cond/prompter.hpp"

namespace aid::cond {

namespace {

std::string_view side_word(data::Direction d) {
  switch (d) {
    case data::Direction::kLeft: return "left";
    case data::Direction::kRight: return "right";
    case data::Direction::kUp: return "top";
    case data::Direction::kDown: return "bottom";
  }
  return "?";
}

}  // namespace

std::vector<std::string> state_prompter(const data::Instruction& ins) {
  std::string object(data::to_string(ins.color));
  object += ' ';
  object += data::to_string(ins.shape);
  const std::string dir(data::to_string(ins.direction));
  return {object + " at start position", object + " moving " + dir,
          object + " continuing " + dir, object + " at " + std::string(side_word(ins.direction)) + " side"};
}

std::vector<std::string> state_prompter(std::string_view instruction_text) {
  return state_prompter(data::Instruction::parse(instruction_text));
}

}  // namespace aid::cond
