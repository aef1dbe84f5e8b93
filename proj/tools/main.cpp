#include "cli.hpp"

int main(int argc, char** argv) { return scorefilter::cli::run(argc, argv); }
