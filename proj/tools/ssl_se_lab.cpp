#include "sslse/cli.hpp"

int main(int argc, char** argv) { return sslse::run_cli(std::vector<std::string>(argv, argv + argc)); }
