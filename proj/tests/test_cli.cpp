#include <catch2/catch_amalgamated.hpp>
#include "flowinv/flowinv.hpp"
