#include "stv/cli.hpp"

int main(int argc, char** argv) { return stv::run_cli(argc, argv); }
