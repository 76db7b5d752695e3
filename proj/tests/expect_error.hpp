#pragma once

#include <gtest/gtest.h>

#include "dgcl/error.hpp"

#define EXPECT_DGCL_ERROR(stmt, expected_kind)                                            \
    do {                                                                                  \
        try {                                                                             \
            stmt;                                                                         \
            ADD_FAILURE() << "expected " << dgcl::to_string(expected_kind) << " error";   \
        } catch (const dgcl::Error& e_) {                                                 \
            EXPECT_EQ(e_.kind(), expected_kind) << e_.what();                             \
        }                                                                                 \
    } while (0)
