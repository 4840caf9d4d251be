#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "drape/errors.hpp"
#include "drape/types.hpp"

namespace drape {

// Synthetic stand-in for a sequential multimodal benchmark: each task owns a
// visual subspace, an instruction-token dialect and a fixed answer rule.
struct StreamConfig {
  int n_tasks = 4;
  int samples_per_task = 4800;
  Index m = 4;             // visual token count per sample
  Index d_v = 16;          // raw visual feature dimension
  Index s_max = 10;        // text sequence length (instruction + answer + padding)
  int vocab = 32;
  Index subspace_dim = 2;  // per-task visual subspace dimension
  Scalar separation = 10.0;
  std::uint64_t seed = 1;

  void validate() const;  // throws ConfigError
};

constexpr int kPadToken = 0;
constexpr int kAnswerLen = 1;

struct Sample {
  Mat visual;                    // [m x d_v], raw vision-encoder output
  std::vector<int> text;         // length s_max: instruction | answer | padding
  std::vector<char> instr_valid; // 1 at instruction positions only
  int instr_len = 0;
  std::vector<int> answer;       // length kAnswerLen, equals text[instr_len..)
};

struct Task {
  int id = 0;  // zero-based
  std::vector<Sample> train;
  std::vector<Sample> test;
  Mat basis;   // [d_v x subspace_dim], orthonormal; generative ground truth
};

struct TaskStream {
  StreamConfig cfg;
  std::vector<Task> tasks;
};

// Pure function of cfg: identical configs produce bit-identical streams.
TaskStream generate_stream(const StreamConfig& cfg);

enum class Split { Train, Test };

// Gathers samples by index, preserving order. Throws BoundsError on
// out-of-range indices. An empty index list yields an empty batch.
std::vector<Sample> sample_batch(const Task& task, Split split, std::span<const int> indices);

}  // namespace drape
