#pragma once

#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "nilm/common.hpp"

// Runs `stmt` and checks it throws nilm::Error of the given kind.
#define EXPECT_NILM_ERROR(stmt, error_kind)                                        \
  do {                                                                             \
    try {                                                                          \
      stmt;                                                                        \
      ADD_FAILURE() << "expected " << nilm::to_string(error_kind) << " error";     \
    } catch (const nilm::Error& e) {                                               \
      EXPECT_EQ(e.kind(), error_kind) << e.what();                                 \
    }                                                                              \
  } while (0)

namespace testutil {

// Fresh per-test scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = std::filesystem::temp_directory_path() /
             ("nilm_test_" + std::string(info->test_suite_name()) + "_" + info->name());
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
