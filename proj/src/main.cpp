#include "railab/cli.hpp"

int main(int argc, char** argv) { return railab::cli_main(argc, argv); }
