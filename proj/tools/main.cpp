#include <iostream>

#include "asdcap/cli.hpp"

int main(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return asdcap::cli::run(args, std::cout, std::cerr);
}
