#include "texsyn/cli.hpp"

int main(int argc, char** argv) { return texsyn::run_cli(argc, argv); }
