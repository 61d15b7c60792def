#include "qtw/cli.hpp"

int main(int argc, char** argv) { return qtw::cli::run(argc, argv); }
