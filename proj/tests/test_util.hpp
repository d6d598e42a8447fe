#pragma once

#include "scribble/core.hpp"

#include <functional>

#include <doctest.h>

/// Error code thrown by `f`; fails the test when nothing is thrown.
inline scribble::ErrorCode code_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const scribble::Error& e) {
        return e.code();
    }
    FAIL("expected a scribble::Error");
    return scribble::ErrorCode::Io;
}
