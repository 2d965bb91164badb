#include "apa/cli.hpp"

int main(int argc, char** argv) { return apa::cli::run(argc, argv); }
