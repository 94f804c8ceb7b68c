#pragma once

#include <string>
#include <vector>

#include "data/scene.hpp"

namespace aid::cond {

inline constexpr std::size_t kNumStates = 4;

// Four templated phase strings: initial state, early motion, late motion,
// final state.
std::vector<std::string> state_prompter(const data::Instruction& instruction);

// Parses the instruction first; throws UsageError for text outside the grammar.
std::vector<std::string> state_prompter(std::string_view instruction_text);

}  // namespace aid::cond
