#include "mixseg/cli.hpp"

int main(int argc, char** argv) { return mixseg::cli_main(argc, argv); }
