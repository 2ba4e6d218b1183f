#include "kgc/cli.hpp"

int main(int argc, char** argv) { return kgc::run_cli(argc, argv); }
