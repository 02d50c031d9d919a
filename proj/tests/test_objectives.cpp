#include "agp/agp.hpp"

#include <catch2/catch_amalgamated.hpp>
