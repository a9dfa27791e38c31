#include <doctest.h>

TEST_CASE("placeholder test_control") { CHECK(true); }
