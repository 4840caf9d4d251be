#pragma once

#include <stdexcept>
#include <string>

namespace drape {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct BoundsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct VocabError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DegenerateInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyStatisticsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SequencingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct FrozenParamError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct UndefinedStageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingCacheError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

}  // namespace drape
