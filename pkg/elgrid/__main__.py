import sys

from elgrid.cli import main

sys.exit(main())
