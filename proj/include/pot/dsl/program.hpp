// Stack-machine DSL: opcodes, parsing, rendering, execution.
#pragma once

#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace pot::dsl {

enum class Op : std::uint8_t {
  Push,
  Add,
  Sub,
  Mul,
  Dup,
  Swap,
  Drop,
  Over,
  Repeat,
  End,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Push: return "PUSH";
    case Op::Add: return "ADD";
    case Op::Sub: return "SUB";
    case Op::Mul: return "MUL";
    case Op::Dup: return "DUP";
    case Op::Swap: return "SWAP";
    case Op::Drop: return "DROP";
    case Op::Over: return "OVER";
    case Op::Repeat: return "REPEAT";
    case Op::End: return "END";
  }
  return "?";
}

struct Instr {
  Op op;
  int imm = 0;  // PUSH operand or REPEAT count
  bool operator==(const Instr&) const = default;
};

constexpr int kMaxInstructions = 64;
constexpr int kMaxImmediate = 99;   // PUSH operand in [-99, 99]
constexpr int kMaxRepeat = 8;       // REPEAT count in [0, 8]
constexpr int kMaxLoopDepth = 2;
constexpr int kDefaultStepCap = 10000;

struct Program {
  std::vector<Instr> instrs;
  // For every REPEAT at index i, repeat_match[i] is the index of its END.
  std::vector<int> repeat_match;

  bool operator==(const Program& o) const { return instrs == o.instrs; }
  std::size_t size() const { return instrs.size(); }
};

inline std::string render(const Program& p) {
  std::ostringstream out;
  bool first = true;
  for (const Instr& in : p.instrs) {
    if (!first) out << ' ';
    first = false;
    out << op_name(in.op);
    if (in.op == Op::Push || in.op == Op::Repeat) out << ' ' << in.imm;
  }
  return out.str();
}

namespace detail {
inline bool parse_int(std::string_view tok, int& out) {
  if (tok.empty()) return false;
  std::size_t i = 0;
  bool neg = false;
  if (tok[0] == '-') {
    neg = true;
    i = 1;
    if (tok.size() == 1) return false;
  }
  long v = 0;
  for (; i < tok.size(); ++i) {
    if (tok[i] < '0' || tok[i] > '9') return false;
    v = v * 10 + (tok[i] - '0');
    if (v > 1000000) return false;
  }
  out = static_cast<int>(neg ? -v : v);
  return true;
}
}  // namespace detail

// Parses whitespace-separated tokens. On failure returns nullopt and, when
// `error` is given, a one-line reason.
inline std::optional<Program> parse_program(std::string_view text, std::string* error = nullptr) {
  auto fail = [&](const std::string& msg) -> std::optional<Program> {
    if (error) *error = msg;
    return std::nullopt;
  };

  std::vector<std::string_view> toks;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) toks.push_back(text.substr(i, j - i));
    i = j;
  }

  Program p;
  std::vector<int> open_repeats;
  for (std::size_t t = 0; t < toks.size(); ++t) {
    std::string_view tok = toks[t];
    Instr in{};
    if (tok == "PUSH" || tok == "REPEAT") {
      if (t + 1 >= toks.size()) return fail(std::string(tok) + " missing immediate");
      int v = 0;
      if (!detail::parse_int(toks[t + 1], v)) return fail("bad immediate '" + std::string(toks[t + 1]) + "'");
      ++t;
      if (tok == "PUSH") {
        if (v < -kMaxImmediate || v > kMaxImmediate) return fail("PUSH immediate out of range");
        in = {Op::Push, v};
      } else {
        if (v < 0 || v > kMaxRepeat) return fail("REPEAT count out of range");
        if (static_cast<int>(open_repeats.size()) >= kMaxLoopDepth) return fail("REPEAT nesting too deep");
        in = {Op::Repeat, v};
        open_repeats.push_back(static_cast<int>(p.instrs.size()));
      }
    } else if (tok == "ADD") {
      in = {Op::Add, 0};
    } else if (tok == "SUB") {
      in = {Op::Sub, 0};
    } else if (tok == "MUL") {
      in = {Op::Mul, 0};
    } else if (tok == "DUP") {
      in = {Op::Dup, 0};
    } else if (tok == "SWAP") {
      in = {Op::Swap, 0};
    } else if (tok == "DROP") {
      in = {Op::Drop, 0};
    } else if (tok == "OVER") {
      in = {Op::Over, 0};
    } else if (tok == "END") {
      if (open_repeats.empty()) return fail("END without REPEAT");
      in = {Op::End, 0};
    } else {
      return fail("unknown opcode '" + std::string(tok) + "'");
    }
    if (static_cast<int>(p.instrs.size()) >= kMaxInstructions) return fail("program too long");
    if (in.op == Op::End) {
      p.instrs.push_back(in);
      // resolve after push so the END index is final
      int open = open_repeats.back();
      open_repeats.pop_back();
      p.repeat_match.resize(p.instrs.size(), -1);
      p.repeat_match[open] = static_cast<int>(p.instrs.size()) - 1;
    } else {
      p.instrs.push_back(in);
    }
  }
  if (!open_repeats.empty()) return fail("REPEAT without END");
  p.repeat_match.resize(p.instrs.size(), -1);
  return p;
}

enum class Fault : std::uint8_t {
  None = 0,
  ParseError,
  StackUnderflow,  // includes an empty stack at halt
  StepCap,
};

inline const char* fault_name(Fault f) {
  switch (f) {
    case Fault::None: return "none";
    case Fault::ParseError: return "parse_error";
    case Fault::StackUnderflow: return "stack_underflow";
    case Fault::StepCap: return "step_cap";
  }
  return "?";
}

struct ExecResult {
  std::optional<std::int64_t> top;  // stack top at halt, absent on fault
  Fault fault = Fault::None;
  int steps = 0;
};

// Runs `p` on `input_stack` (last element is the stack top). Arithmetic wraps
// in 64 bits. Every instruction dispatch counts one step, loop bodies once
// per iteration.
inline ExecResult execute(const Program& p, const std::vector<std::int64_t>& input_stack,
                          int step_cap = kDefaultStepCap) {
  ExecResult res;
  std::vector<std::int64_t> st = input_stack;
  struct LoopFrame {
    int body_start;
    int remaining;
  };
  std::vector<LoopFrame> loops;

  auto wrap_add = [](std::int64_t a, std::int64_t b) {
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) + static_cast<std::uint64_t>(b));
  };
  auto wrap_sub = [](std::int64_t a, std::int64_t b) {
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) - static_cast<std::uint64_t>(b));
  };
  auto wrap_mul = [](std::int64_t a, std::int64_t b) {
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(a) * static_cast<std::uint64_t>(b));
  };

  int ip = 0;
  const int n = static_cast<int>(p.instrs.size());
  while (ip < n) {
    if (++res.steps > step_cap) {
      res.fault = Fault::StepCap;
      return res;
    }
    const Instr& in = p.instrs[ip];
    switch (in.op) {
      case Op::Push:
        st.push_back(in.imm);
        break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul: {
        if (st.size() < 2) {
          res.fault = Fault::StackUnderflow;
          return res;
        }
        const std::int64_t b = st.back();
        st.pop_back();
        const std::int64_t a = st.back();
        st.pop_back();
        st.push_back(in.op == Op::Add ? wrap_add(a, b)
                     : in.op == Op::Sub ? wrap_sub(a, b)
                                        : wrap_mul(a, b));
        break;
      }
      case Op::Dup:
        if (st.empty()) {
          res.fault = Fault::StackUnderflow;
          return res;
        }
        st.push_back(st.back());
        break;
      case Op::Swap: {
        if (st.size() < 2) {
          res.fault = Fault::StackUnderflow;
          return res;
        }
        std::swap(st[st.size() - 1], st[st.size() - 2]);
        break;
      }
      case Op::Drop:
        if (st.empty()) {
          res.fault = Fault::StackUnderflow;
          return res;
        }
        st.pop_back();
        break;
      case Op::Over:
        if (st.size() < 2) {
          res.fault = Fault::StackUnderflow;
          return res;
        }
        st.push_back(st[st.size() - 2]);
        break;
      case Op::Repeat:
        if (in.imm == 0) {
          ip = p.repeat_match[ip];  // jump to END; the ++ below skips past it
        } else {
          loops.push_back({ip + 1, in.imm});
        }
        break;
      case Op::End: {
        LoopFrame& f = loops.back();
        if (--f.remaining > 0) {
          ip = f.body_start - 1;  // ++ below lands on body_start
        } else {
          loops.pop_back();
        }
        break;
      }
    }
    ++ip;
  }
  if (st.empty()) {
    res.fault = Fault::StackUnderflow;
    return res;
  }
  res.top = st.back();
  return res;
}

}  // namespace pot::dsl
