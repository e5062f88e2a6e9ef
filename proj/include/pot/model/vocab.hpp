// Fixed token alphabet shared by the policy network, the state encoder and
// the corpus builder. Ids are stable; EOS is id 1.
#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "pot/dsl/program.hpp"

namespace pot::model {

namespace tok {
constexpr int BOS = 0;
constexpr int EOS = 1;
constexpr int SEP = 2;
constexpr int TEST = 3;
constexpr int ARROW = 4;
constexpr int COMMA = 5;
constexpr int SLASH = 6;
constexpr int PASS = 7;
constexpr int FAIL = 8;
constexpr int ERR = 9;
constexpr int MINUS = 10;
constexpr int D0 = 11;  // D0..D9 are 11..20
constexpr int PUSH = 21;
constexpr int ADD = 22;
constexpr int SUB = 23;
constexpr int MUL = 24;
constexpr int DUP = 25;
constexpr int SWAP = 26;
constexpr int DROP = 27;
constexpr int OVER = 28;
constexpr int REPEAT = 29;
constexpr int END = 30;
}  // namespace tok

constexpr int kVocabSize = 31;

inline const std::array<std::string_view, kVocabSize>& token_names() {
  static const std::array<std::string_view, kVocabSize> names = {
      "<bos>", "<eos>", "<sep>", "<test>", "->", ",", "/", "<pass>", "<fail>", "<err>",
      "-",     "0",     "1",     "2",      "3",  "4", "5", "6",      "7",      "8",
      "9",     "PUSH",  "ADD",   "SUB",    "MUL", "DUP", "SWAP", "DROP", "OVER", "REPEAT",
      "END"};
  return names;
}

inline bool is_digit_token(int id) { return id >= tok::D0 && id <= tok::D0 + 9; }

inline int opcode_token(dsl::Op op) {
  switch (op) {
    case dsl::Op::Push: return tok::PUSH;
    case dsl::Op::Add: return tok::ADD;
    case dsl::Op::Sub: return tok::SUB;
    case dsl::Op::Mul: return tok::MUL;
    case dsl::Op::Dup: return tok::DUP;
    case dsl::Op::Swap: return tok::SWAP;
    case dsl::Op::Drop: return tok::DROP;
    case dsl::Op::Over: return tok::OVER;
    case dsl::Op::Repeat: return tok::REPEAT;
    case dsl::Op::End: return tok::END;
  }
  return tok::ERR;
}

inline void append_number(std::vector<int>& out, std::int64_t v) {
  std::uint64_t mag;
  if (v < 0) {
    out.push_back(tok::MINUS);
    mag = static_cast<std::uint64_t>(-(v + 1)) + 1;
  } else {
    mag = static_cast<std::uint64_t>(v);
  }
  char buf[24];
  int n = 0;
  do {
    buf[n++] = static_cast<char>('0' + mag % 10);
    mag /= 10;
  } while (mag != 0);
  for (int i = n - 1; i >= 0; --i) out.push_back(tok::D0 + (buf[i] - '0'));
}

inline std::vector<int> tokenize_program(const dsl::Program& p) {
  std::vector<int> out;
  for (const dsl::Instr& in : p.instrs) {
    out.push_back(opcode_token(in.op));
    if (in.op == dsl::Op::Push || in.op == dsl::Op::Repeat) append_number(out, in.imm);
  }
  return out;
}

// Renders tokens to source text. Digits glue onto a preceding digit or minus
// so numbers come out as single words; everything else is space separated.
// Non-program tokens render with their surface form, which the DSL parser
// rejects — garbage stays visibly garbage.
inline std::string detokenize(const std::vector<int>& ids) {
  std::string out;
  bool in_number = false;
  for (int id : ids) {
    if (id < 0 || id >= kVocabSize) continue;
    const bool digit = is_digit_token(id);
    const bool glue = digit && in_number;
    if (!glue && !out.empty()) out += ' ';
    out += token_names()[id];
    in_number = digit || id == tok::MINUS;
  }
  return out;
}

// Thought text for evaluation: tokens up to (not including) the first EOS.
inline std::string thought_text(const std::vector<int>& ids) {
  std::vector<int> upto;
  for (int id : ids) {
    if (id == tok::EOS) break;
    upto.push_back(id);
  }
  return detokenize(upto);
}

}  // namespace pot::model
