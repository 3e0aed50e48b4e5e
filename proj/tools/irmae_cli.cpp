#include "irmae/cli.hpp"

int main(int argc, char** argv) { return irmae::run_cli(argc, argv); }
