#include "dmtb/cli.hpp"

int main(int argc, char** argv) { return dmtb::run_cli(argc, argv); }
