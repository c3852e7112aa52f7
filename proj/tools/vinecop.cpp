#include "cli.hpp"

int
main(int argc, char** argv)
{
  return vinecop::run(argc, argv);
}
