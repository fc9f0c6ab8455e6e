#include "riverfuse/cli.hpp"

int main(int argc, char** argv) { return riverfuse::cli::run(argc, argv); }
