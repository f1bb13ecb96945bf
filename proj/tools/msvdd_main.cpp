#include "msvdd/cli.hpp"

int main(int argc, char** argv) { return msvdd::cli::run(argc, argv); }
