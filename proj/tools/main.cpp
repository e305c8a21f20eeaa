#include "cmodes/cli.hpp"

int main(int argc, char** argv) { return cmodes::cli_main(argc, argv); }
