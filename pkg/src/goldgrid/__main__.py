import sys

from goldgrid.cli import main

sys.exit(main())
