#include "omcool/cli.hpp"

int main(int argc, char** argv) { return omcool::cli::run(argc, argv); }
