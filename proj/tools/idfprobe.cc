#include "idfprobe/cli.h"

int main(int argc, char** argv) { return idfprobe::cli::Main(argc, argv); }
