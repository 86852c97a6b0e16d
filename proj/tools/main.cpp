#include "bsysid/cli.hpp"

#include <iostream>

int main(int argc, char** argv)
{
    return bsysid::cli::run(argc, argv, std::cout, std::cerr);
}
