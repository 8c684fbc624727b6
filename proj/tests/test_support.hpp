#pragma once

#include <cmath>
#include <functional>

#include <doctest.h>

#include "ecgfa/error.hpp"

namespace ecgfa::test {

// Runs fn and checks that it throws ecgfa::Error with the given code.
inline void check_error(ErrorCode expected, const std::function<void()>& fn) {
  bool thrown = false;
  try {
    fn();
  } catch (const Error& e) {
    thrown = true;
    CHECK_MESSAGE(e.code() == expected, "got " << to_string(e.code()) << ": " << e.what());
  }
  CHECK_MESSAGE(thrown, "expected " << to_string(expected));
}

}  // namespace ecgfa::test
