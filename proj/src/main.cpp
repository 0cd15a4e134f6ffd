#include "muspike/cli.h"

int main(int argc, char** argv) { return muspike::cli::run(argc, argv); }
