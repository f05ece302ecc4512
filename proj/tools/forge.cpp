#include "osmforge/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return osmforge::run_forge(argc, argv, std::cout, std::cerr);
}
