import sys

from pddp.cli import main

sys.exit(main())
