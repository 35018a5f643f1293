#ifndef RCLM_CHECKPOINT_H_
#define RCLM_CHECKPOINT_H_

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "rclm/training.h"

namespace rclm {

// Binary layout (all integers little-endian):
//   "RCLM" | u32 version | u32 metadata length | metadata (key=value lines)
//   then per tensor: u32 name length | name | u32 rank | u32 dims... | f32 values
class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kVersionMismatch, kInconsistent, kTruncated };

  CheckpointError(Kind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

void write_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
Checkpoint read_checkpoint(std::istream& in);

void save_checkpoint(const Checkpoint& checkpoint,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace rclm

#endif  // RCLM_CHECKPOINT_H_
